//! Run configuration: model, cap, numerics and simulation settings from one
//! TOML or JSON file.

use std::path::{Path, PathBuf};

use divcap_core::{CapKind, ModelParams, Numerics, RateCap};
use serde::{Deserialize, Serialize};

use crate::sim::SimConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: unsupported extension, expected .toml or .json", path.display())]
    Extension { path: PathBuf },
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapName {
    Constant,
    Linear,
    Affine,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficients {
    Scalars(Vec<f64>),
    Knots(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapConfig {
    pub kind: CapName,
    /// `[S]`, `[k]`, `[c0, c1]`, or `[[x, F(x)], ...]` knots.
    pub coefficients: Coefficients,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub x_max: Option<f64>,
    pub tol: f64,
    pub grid_n: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let n = Numerics::default();
        Self { x_max: n.x_max, tol: n.tol, grid_n: n.grid_n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Points in the value grid CSV.
    pub grid_points: usize,
    /// Right end of the value grid; `None` picks a multiple of the barriers.
    pub grid_max: Option<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { grid_points: 201, grid_max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mu: f64,
    pub sigma: f64,
    pub q: f64,
    pub beta: f64,
    pub cap: CapConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Validated pieces of a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: ModelParams,
    pub cap: RateCap,
    pub numerics: Numerics,
    pub sim: SimConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let parse_err = |message: String| ConfigError::Parse { path: path.into(), message };
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| parse_err(e.message().to_string())),
            Some("json") => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string())),
            _ => Err(ConfigError::Extension { path: path.into() }),
        }
    }

    pub fn cap(&self) -> Result<RateCap, ConfigError> {
        build_cap(&self.cap)
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        if !self.mu.is_finite() {
            return Err(ConfigError::invalid("mu", "must be finite"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(ConfigError::invalid("sigma", "must be positive"));
        }
        if !(self.q > 0.0) || !self.q.is_finite() {
            return Err(ConfigError::invalid("q", "must be positive"));
        }
        if !(self.beta > 1.0) || !self.beta.is_finite() {
            return Err(ConfigError::invalid("beta", "must exceed 1"));
        }
        let params =
            ModelParams::new(self.mu, self.sigma, self.q, self.beta).map_err(|e| ConfigError::invalid("mu", e.to_string()))?;
        let cap = self.cap()?;
        let n = &self.numerics;
        if let Some(x) = n.x_max {
            if !(x > 0.0) || !x.is_finite() {
                return Err(ConfigError::invalid("numerics.x_max", "must be positive"));
            }
        }
        if !(n.tol > 0.0) || n.tol >= 1.0 {
            return Err(ConfigError::invalid("numerics.tol", "must lie in (0, 1)"));
        }
        if n.grid_n == 0 {
            return Err(ConfigError::invalid("numerics.grid_n", "must be positive"));
        }
        let s = &self.sim;
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return Err(ConfigError::invalid("sim.dt", "must be positive"));
        }
        if matches!(s.horizon, Some(h) if !(h > 0.0) || !h.is_finite()) {
            return Err(ConfigError::invalid("sim.horizon", "must be positive"));
        }
        if s.n_paths == 0 || (s.antithetic && s.n_paths < 2) {
            return Err(ConfigError::invalid("sim.n_paths", "must be positive (at least 2 with antithetic)"));
        }
        if !(s.truncation_tol > 0.0) {
            return Err(ConfigError::invalid("sim.truncation_tol", "must be positive"));
        }
        if self.output.grid_points < 2 {
            return Err(ConfigError::invalid("output.grid_points", "must be at least 2"));
        }
        if matches!(self.output.grid_max, Some(g) if !(g > 0.0) || !g.is_finite()) {
            return Err(ConfigError::invalid("output.grid_max", "must be positive"));
        }
        Ok(Resolved {
            params,
            cap,
            numerics: Numerics { x_max: n.x_max, tol: n.tol, grid_n: n.grid_n },
            sim: *s,
            output: self.output,
        })
    }

    /// Names accepted by [`RunConfig::with_param`].
    pub const SWEEP_PARAMS: &'static [&'static str] = &["mu", "sigma", "q", "beta", "cap.coefficients[i]"];

    /// Copy with one parameter replaced; `cap.<i>` or `cap.coefficients[<i>]`
    /// addresses a cap coefficient.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        match name {
            "mu" => c.mu = value,
            "sigma" => c.sigma = value,
            "q" => c.q = value,
            "beta" => c.beta = value,
            _ => {
                let idx = name
                    .strip_prefix("cap.coefficients[")
                    .and_then(|r| r.strip_suffix(']'))
                    .or_else(|| name.strip_prefix("cap."))
                    .and_then(|i| i.parse::<usize>().ok())
                    .ok_or_else(|| {
                        ConfigError::invalid("--param", format!("unknown parameter `{name}`; expected mu, sigma, q, beta or cap.<i>"))
                    })?;
                match &mut c.cap.coefficients {
                    Coefficients::Scalars(v) if idx < v.len() => v[idx] = value,
                    _ => {
                        return Err(ConfigError::invalid(
                            "--param",
                            format!("cap coefficient {idx} cannot be swept for this cap"),
                        ))
                    }
                }
            }
        }
        Ok(c)
    }
}

fn build_cap(c: &CapConfig) -> Result<RateCap, ConfigError> {
    let key = "cap.coefficients";
    let scalars = |n: usize| match &c.coefficients {
        Coefficients::Scalars(v) if v.len() == n => Ok(v.clone()),
        _ => Err(ConfigError::invalid(key, format!("a {:?} cap takes {n} number(s)", c.kind))),
    };
    let kind = match c.kind {
        CapName::Constant => CapKind::Constant(scalars(1)?[0]),
        CapName::Linear => CapKind::Linear(scalars(1)?[0]),
        CapName::Affine => {
            let v = scalars(2)?;
            CapKind::Affine { c0: v[0], c1: v[1] }
        }
        CapName::Tabulated => match &c.coefficients {
            Coefficients::Knots(k) => CapKind::Tabulated(k.iter().map(|p| (p[0], p[1])).collect()),
            Coefficients::Scalars(v) if v.is_empty() => CapKind::Tabulated(Vec::new()),
            _ => return Err(ConfigError::invalid(key, "a tabulated cap takes [[x, F(x)], ...] knots")),
        },
    };
    RateCap::new(kind).map_err(|e| ConfigError::invalid(key, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "mu = 1.0\nsigma = 1.0\nq = 2.0\nbeta = 1.2\n[cap]\nkind = \"affine\"\ncoefficients = [1.0, 0.5]\n";

    fn parse(text: &str) -> Result<RunConfig, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let c = parse(BASE).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.numerics, Numerics::default());
        assert_eq!(r.sim, SimConfig::default());
        assert_eq!(r.cap.value(2.0), 2.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse(&BASE.replace("sigma", "sigm")).unwrap_err();
        assert!(e.contains("sigm"), "{e}");
        let e = parse(&format!("{BASE}[sim]\nn_path = 3\n")).unwrap_err();
        assert!(e.contains("n_path"), "{e}");
    }

    #[test]
    fn invalid_values_are_named() {
        let key = |text: &str| match parse(text).unwrap().resolve() {
            Err(ConfigError::Invalid { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key(&BASE.replace("beta = 1.2", "beta = 1.0")), "beta");
        assert_eq!(key(&BASE.replace("sigma = 1.0", "sigma = -1.0")), "sigma");
        assert_eq!(key(&BASE.replace("[1.0, 0.5]", "[1.0]")), "cap.coefficients");
        assert_eq!(key(&BASE.replace("[1.0, 0.5]", "[-1.0, 0.5]")), "cap.coefficients");
        assert_eq!(key(&format!("{BASE}[numerics]\ntol = 0.0\n")), "numerics.tol");
        assert_eq!(key(&format!("{BASE}[sim]\ndt = -1.0\n")), "sim.dt");
    }

    #[test]
    fn tabulated_knots_parse() {
        let text = BASE.replace("\"affine\"", "\"tabulated\"").replace("[1.0, 0.5]", "[[0.0, 0.0], [1.0, 1.0], [2.0, 1.5]]");
        let cap = parse(&text).unwrap().cap().unwrap();
        assert_eq!(cap.value(1.0), 1.0);
    }

    #[test]
    fn json_and_toml_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("a.toml");
        let j = dir.path().join("a.json");
        std::fs::write(&t, BASE).unwrap();
        let from_toml = RunConfig::load(&t).unwrap();
        std::fs::write(&j, serde_json::to_string(&from_toml).unwrap()).unwrap();
        assert_eq!(RunConfig::load(&j).unwrap(), from_toml);
        assert!(matches!(RunConfig::load(&dir.path().join("a.yaml")), Err(ConfigError::Io { .. })));
        std::fs::write(dir.path().join("a.yaml"), BASE).unwrap();
        assert!(matches!(RunConfig::load(&dir.path().join("a.yaml")), Err(ConfigError::Extension { .. })));
    }

    #[test]
    fn sweep_parameters_replace_one_field() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.with_param("beta", 3.0).unwrap().beta, 3.0);
        let d = c.with_param("cap.1", 0.25).unwrap();
        assert_eq!(d.cap.coefficients, Coefficients::Scalars(vec![1.0, 0.25]));
        assert_eq!(c.with_param("cap.coefficients[0]", 2.0).unwrap().cap.coefficients, Coefficients::Scalars(vec![2.0, 0.5]));
        assert!(c.with_param("gamma", 1.0).is_err());
        assert!(c.with_param("cap.5", 1.0).is_err());
    }
}
