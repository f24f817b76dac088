//! Named pass/fail checks over a solved configuration.

use divcap_core::barrier::{coeffs_c, coeffs_d, first_passage_h, j_c, j_c_jet, j_d, j_d_jet, supercontact_residuals, Side};
use divcap_core::ode::RESIDUAL_TOL;
use divcap_core::{hjb_residual, ValueFunctions};
use serde::Serialize;

use crate::config::Resolved;
use crate::sim::{self, Functional, InjectionSpec, RateSpec, StrategySpec};

pub const SMOOTH_FIT_TOL: f64 = 1e-8;
pub const BARRIER_TOL: f64 = 1e-7;
pub const CURVATURE_TOL: f64 = 1e-6;
pub const CONCAVITY_TOL: f64 = 1e-8;
pub const HJB_TOL: f64 = 1e-6;
pub const DOMINATION_PATHS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Check {
    fn bound(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        let status = if value <= threshold { Status::Pass } else { Status::Fail };
        Self { name: name.into(), status, value: Some(value), threshold: Some(threshold), detail: String::new() }
    }

    fn flag(name: impl Into<String>, ok: bool, detail: String) -> Self {
        let status = if ok { Status::Pass } else { Status::Fail };
        Self { name: name.into(), status, value: None, threshold: None, detail }
    }

    fn skipped(name: impl Into<String>, detail: &str) -> Self {
        Self { name: name.into(), status: Status::Skipped, value: None, threshold: None, detail: detail.to_string() }
    }

    fn failed(name: impl Into<String>, err: impl ToString) -> Self {
        Self::flag(name, false, err.to_string())
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = detail;
        self
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let mut s = format!("{tag} {}", self.name);
        if let (Some(v), Some(t)) = (self.value, self.threshold) {
            s.push_str(&format!(" value={v:.3e} threshold={t:.3e}"));
        }
        if !self.detail.is_empty() {
            s.push_str(&format!(" ({})", self.detail));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    fn new(checks: Vec<Check>) -> Self {
        Self { passed: checks.iter().all(|c| c.status != Status::Fail), checks }
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Barrier levels probed by the smooth-fit checks.
fn probe_barriers(vf: &ValueFunctions) -> Vec<f64> {
    let l = vf.problem.length_scale();
    let mut bs = vec![0.5 * l, l, 2.0 * l];
    for b in [vf.regime.b_d.b, vf.regime.b_c.b] {
        if b > 0.0 {
            bs.push(b);
        }
    }
    bs.retain(|&b| b < vf.problem.x_trust());
    bs
}

fn analytic(vf: &ValueFunctions) -> Vec<Check> {
    let p = &vf.problem;
    let params = *p.phi().params();
    let cap = p.cap();
    let beta = params.beta;
    let mut out = vec![
        Check::bound("ode.phi_residual", p.phi().residual_sup(), RESIDUAL_TOL),
        Check::bound("ode.if_residual", p.iff().residual_sup(), RESIDUAL_TOL),
    ];

    let mut fit_d: f64 = 0.0;
    let mut fit_c: f64 = 0.0;
    let mut slope0: f64 = 0.0;
    let mut fit_err = None;
    for b in probe_barriers(vf) {
        let r = (|| -> divcap_core::Result<()> {
            let cd = coeffs_d(p, b)?;
            let lo = j_d_jet(p, &cd, b, Some(Side::Below))?.d1;
            let hi = j_d_jet(p, &cd, b, Some(Side::Above))?.d1;
            fit_d = fit_d.max((lo - hi).abs() / (1.0 + lo.abs()));
            let cc = coeffs_c(p, b)?;
            let lo = j_c_jet(p, &cc, b, Some(Side::Below))?.d1;
            let hi = j_c_jet(p, &cc, b, Some(Side::Above))?.d1;
            fit_c = fit_c.max((lo - hi).abs() / (1.0 + lo.abs()));
            slope0 = slope0.max((j_c_jet(p, &cc, 0.0, None)?.d1 - beta).abs());
            Ok(())
        })();
        if let Err(e) = r {
            fit_err = Some(e);
        }
    }
    match fit_err {
        Some(e) => out.push(Check::failed("smooth_fit", e)),
        None => out.extend([
            Check::bound("smooth_fit.j_d", fit_d, SMOOTH_FIT_TOL),
            Check::bound("smooth_fit.j_c", fit_c, SMOOTH_FIT_TOL),
            Check::bound("smooth_fit.j_c_slope_at_zero", slope0, SMOOTH_FIT_TOL),
        ]),
    }

    let b_d = vf.regime.b_d.b;
    if b_d > 0.0 {
        match j_d_jet(p, &vf.coeffs_d, b_d, None) {
            Ok(j) => out.push(Check::bound("barrier.b_d_unit_slope", (j.d1 - 1.0).abs(), BARRIER_TOL)),
            Err(e) => out.push(Check::failed("barrier.b_d_unit_slope", e)),
        }
    } else {
        out.push(Check::skipped("barrier.b_d_unit_slope", "b_d = 0"));
    }
    let (e1, e2) = supercontact_residuals(p, &vf.coeffs_c);
    out.push(Check::bound("barrier.b_c_supercontact", e1.max(e2), BARRIER_TOL));
    let b_c = vf.regime.b_c.b;
    let curv = (|| -> divcap_core::Result<f64> {
        let lo = j_c_jet(p, &vf.coeffs_c, b_c, Some(Side::Below))?.d2;
        let hi = j_c_jet(p, &vf.coeffs_c, b_c, Some(Side::Above))?.d2;
        Ok(rel_gap(lo, hi))
    })();
    out.push(match curv {
        Ok(v) => Check::bound("barrier.b_c_curvature_continuity", v, CURVATURE_TOL),
        Err(e) => Check::failed("barrier.b_c_curvature_continuity", e),
    });

    let grid = vf.audit_grid(1000);
    let shape = (|| -> divcap_core::Result<(f64, f64, f64, f64)> {
        let vals: Vec<_> = grid.iter().map(|&x| vf.vc_jet(x)).collect::<divcap_core::Result<_>>()?;
        let second = vals.windows(3).map(|w| w[0].v - 2.0 * w[1].v + w[2].v).fold(f64::NEG_INFINITY, f64::max);
        let grad = vals.iter().map(|j| (-j.d1).max(j.d1 - beta)).fold(f64::NEG_INFINITY, f64::max);
        let at0 = (vf.vc_jet(0.0)?.d1 - beta).abs();
        let atb = (vf.vc_jet(b_c)?.d1 - 1.0).abs();
        Ok((second, grad, at0, atb))
    })();
    match shape {
        Ok((second, grad, at0, atb)) => out.extend([
            Check::bound("value.v_c_concave", second, CONCAVITY_TOL),
            Check::bound("value.v_c_gradient_bounds", grad, CONCAVITY_TOL),
            Check::bound("value.v_c_slope_at_zero", at0, BARRIER_TOL),
            Check::bound("value.v_c_slope_at_b_c", atb, BARRIER_TOL),
        ]),
        Err(e) => out.push(Check::failed("value.v_c_shape", e)),
    }
    for (name, which) in [("hjb.v_d", 0), ("hjb.v_c", 1)] {
        let r = hjb_residual(&params, cap, &grid, |x| if which == 0 { vf.vd_jet(x) } else { vf.vc_jet(x) });
        out.push(match r {
            Ok(v) => Check::bound(name, v, HJB_TOL),
            Err(e) => Check::failed(name, e),
        });
    }
    let r = &vf.regime;
    let diff = r.vd_prime_zero - beta;
    let consistent = diff.abs() <= divcap_core::Regime::tie_band(beta)
        || r.vc_zero.abs() <= 1e-8
        || (diff > 0.0) == (r.vc_zero > 0.0);
    out.push(Check::flag(
        "regime.discriminants_agree",
        consistent,
        format!("V_d'(0+) - beta = {diff:.6e}, V_c(0) = {:.6e}, regime {}", r.vc_zero, r.kind.name()),
    ));
    out
}

/// `{0, b/2, b, 2b}`, with `b` replaced by the length scale when it is 0.
pub fn mc_points(vf: &ValueFunctions, b: f64) -> [f64; 4] {
    let b = if b > 0.0 { b } else { vf.problem.length_scale() };
    [0.0, 0.5 * b, b, 2.0 * b]
}

fn monte_carlo(vf: &ValueFunctions, cfg: &Resolved) -> Vec<Check> {
    let p = &vf.problem;
    let (params, cap, sc) = (&cfg.params, &cfg.cap, &cfg.sim);
    let (b_d, b_c) = (vf.regime.b_d.b, vf.regime.b_c.b);
    let mut out = Vec::new();
    let mut run = |name: String, f: Functional, x: f64, exact: divcap_core::Result<f64>| {
        let exact = match exact {
            Ok(v) => v,
            Err(e) => return out.push(Check::failed(name, e)),
        };
        out.push(match sim::estimate_multilevel(params, cap, f, x, sc) {
            Ok(ml) => {
                let err = (ml.fine().mean - exact).abs();
                let mut c = Check::bound(name, err, ml.tolerance()).with_detail(format!(
                    "mc {:.6} closed form {exact:.6} stderr {:.2e} bias budget {:.2e}",
                    ml.fine().mean,
                    ml.fine().stderr,
                    ml.bias_budget
                ));
                if !ml.shrinks {
                    c.status = Status::Fail;
                    c.detail.push_str("; dt gap did not shrink");
                }
                c
            }
            Err(e) => Check::failed(name, e),
        });
    };
    for x in mc_points(vf, b_d) {
        run(format!("mc.j_d[x={x:.6}]"), Functional::Jd { b: b_d }, x, j_d(p, &vf.coeffs_d, x));
    }
    for x in mc_points(vf, b_c) {
        run(format!("mc.j_c[x={x:.6}]"), Functional::Jc { b: b_c }, x, j_c(p, &vf.coeffs_c, x));
    }
    for x in mc_points(vf, b_c) {
        run(format!("mc.i_f[x={x:.6}]"), Functional::IF, x, p.iff().eval(x).map(|e| e.0));
    }
    for x in mc_points(vf, b_d) {
        run(format!("mc.laplace_tau0[x={x:.6}]"), Functional::Laplace { b: b_d }, x, first_passage_h(p, x, b_d));
    }
    out.extend(domination(vf, cfg));
    out
}

fn domination(vf: &ValueFunctions, cfg: &Resolved) -> Vec<Check> {
    let b = vf.regime.b_c.b;
    let x0 = b.max(0.5 * vf.problem.length_scale());
    let sc = sim::SimConfig { n_paths: cfg.sim.n_paths.min(DOMINATION_PATHS), antithetic: false, ..cfg.sim };
    let reflect = |rate| StrategySpec { rate, injection: InjectionSpec::Reflect };
    let cases = [
        ("domination.full_rate_vs_zero", reflect(RateSpec::Zero), reflect(RateSpec::Full)),
        ("domination.barrier_vs_zero", reflect(RateSpec::Zero), reflect(RateSpec::Barrier(b))),
        (
            "domination.reflection_vs_lump",
            StrategySpec { rate: RateSpec::Barrier(b), injection: InjectionSpec::LumpAtStart(1.0) },
            reflect(RateSpec::Original),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, orig, dom)| match sim::domination_check(&cfg.params, &cfg.cap, orig, dom, x0, &sc) {
            Ok(r) => Check::flag(
                name,
                r.passed() && r.premise_violations == 0,
                format!(
                    "{} paths, violations: state {} termination {} injection {}, premise {}",
                    r.paths, r.state_violations, r.termination_mismatches, r.injection_violations, r.premise_violations
                ),
            ),
            Err(e) => Check::failed(name, e),
        })
        .collect()
}

const MC_NAMES: [&str; 7] = [
    "mc.j_d",
    "mc.j_c",
    "mc.i_f",
    "mc.laplace_tau0",
    "domination.full_rate_vs_zero",
    "domination.barrier_vs_zero",
    "domination.reflection_vs_lump",
];

/// Runs every check; with `with_sim = false` the simulation checks are skipped.
pub fn verify(cfg: &Resolved, with_sim: bool) -> VerifyReport {
    let vf = match ValueFunctions::solve(cfg.params, &cfg.cap, &cfg.numerics) {
        Ok(v) => v,
        Err(e) => return VerifyReport::new(vec![Check::failed("solve", e)]),
    };
    let mut checks = analytic(&vf);
    if with_sim {
        checks.extend(monte_carlo(&vf, cfg));
    } else {
        checks.extend(MC_NAMES.iter().map(|n| Check::skipped(*n, "simulation disabled")));
    }
    VerifyReport::new(checks)
}
