//! Solve reports, value grids and parameter sweeps.

use std::io::Write;

use divcap_core::{Numerics, ValueFunctions};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub b_d: f64,
    pub b_c: f64,
    pub vd_prime_zero: f64,
    pub vc_zero: f64,
    pub regime: &'static str,
    pub beta: f64,
    pub b_d_multiple_roots: bool,
    pub b_c_multiple_roots: bool,
    pub x_max: f64,
    pub x_trust: f64,
    pub phi_residual: f64,
    pub if_residual: f64,
}

impl SolveReport {
    pub fn new(vf: &ValueFunctions) -> Self {
        let p = &vf.problem;
        let r = &vf.regime;
        Self {
            b_d: r.b_d.b,
            b_c: r.b_c.b,
            vd_prime_zero: r.vd_prime_zero,
            vc_zero: r.vc_zero,
            regime: r.kind.name(),
            beta: p.phi().params().beta,
            b_d_multiple_roots: r.b_d.multiple,
            b_c_multiple_roots: r.b_c.multiple,
            x_max: p.x_max(),
            x_trust: p.x_trust(),
            phi_residual: p.phi().residual_sup(),
            if_residual: p.iff().residual_sup(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub x: f64,
    pub v_d: f64,
    pub v_c: f64,
    pub v: f64,
    pub v_prime: f64,
    pub rate: f64,
}

/// Right end of the default value grid.
pub fn default_grid_max(vf: &ValueFunctions) -> f64 {
    let b = vf.regime.b_d.b.max(vf.regime.b_c.b);
    (4.0 * b).max(10.0 * vf.problem.length_scale()).min(vf.problem.x_trust())
}

pub fn value_grid(vf: &ValueFunctions, x_hi: f64, points: usize) -> divcap_core::Result<Vec<GridRow>> {
    let n = points.max(2) - 1;
    (0..=n)
        .map(|i| {
            let x = x_hi * i as f64 / n as f64;
            let v = vf.v_jet(x)?;
            Ok(GridRow { x, v_d: vf.v_d(x)?, v_c: vf.v_c(x)?, v: v.v, v_prime: v.d1, rate: vf.optimal_rate(x) })
        })
        .collect()
}

pub fn write_grid_csv<W: Write>(out: W, rows: &[GridRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub b_d: Option<f64>,
    pub b_c: Option<f64>,
    pub vd_prime_zero: Option<f64>,
    pub vc_zero: Option<f64>,
    pub regime: Option<&'static str>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(parameter: &str, value: f64, error: String) -> Self {
        Self {
            parameter: parameter.to_string(),
            value,
            b_d: None,
            b_c: None,
            vd_prime_zero: None,
            vc_zero: None,
            regime: None,
            error: Some(error),
        }
    }
}

/// Solves `config` once per value of `parameter`; failures become error rows.
pub fn sweep(config: &RunConfig, parameter: &str, values: &[f64]) -> Result<Vec<SweepRow>, ConfigError> {
    config.with_param(parameter, values.first().copied().unwrap_or(0.0))?;
    Ok(values
        .par_iter()
        .map(|&value| {
            let solved = config
                .with_param(parameter, value)
                .and_then(|c| c.resolve())
                .map_err(|e| e.to_string())
                .and_then(|r| solve(&r.params, &r.cap, &r.numerics).map_err(|e| e.to_string()));
            match solved {
                Ok(vf) => {
                    let s = SolveReport::new(&vf);
                    SweepRow {
                        parameter: parameter.to_string(),
                        value,
                        b_d: Some(s.b_d),
                        b_c: Some(s.b_c),
                        vd_prime_zero: Some(s.vd_prime_zero),
                        vc_zero: Some(s.vc_zero),
                        regime: Some(s.regime),
                        error: None,
                    }
                }
                Err(e) => SweepRow::failed(parameter, value, e),
            }
        })
        .collect())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn solve(
    params: &divcap_core::ModelParams,
    cap: &divcap_core::RateCap,
    num: &Numerics,
) -> divcap_core::Result<ValueFunctions> {
    ValueFunctions::solve(*params, cap, num)
}
