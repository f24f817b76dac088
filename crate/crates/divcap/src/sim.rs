//! Monte Carlo simulation of the refracted and reflected surplus processes.
//!
//! Every path owns a ChaCha8 stream selected by its index, so results do not
//! depend on thread count or scheduling. Coarser time steps (`2h`, `4h`) are
//! driven by the same Brownian increments as the fine grid.

use std::io::Write;

use divcap_core::{ode::local_roots, ModelParams, RateCap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SimError {
    #[error("truncation bound {bound:e} exceeds tolerance {tol:e}; lengthen the horizon")]
    TruncationTooLoose { bound: f64, tol: f64 },
    #[error("invalid simulation setting: {0}")]
    BadConfig(&'static str),
}

pub type SimResult<T> = Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// `None` picks `ln(1e6)/q`.
    pub horizon: Option<f64>,
    pub n_paths: u64,
    pub seed: u64,
    pub antithetic: bool,
    /// Brownian-bridge crossing correction for ruin and reflection.
    pub bridge: bool,
    pub truncation_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: None,
            n_paths: 200_000,
            seed: 0,
            antithetic: false,
            bridge: false,
            truncation_tol: 1e-3,
        }
    }
}

impl SimConfig {
    pub fn horizon(&self, q: f64) -> f64 {
        self.horizon.unwrap_or(1e6f64.ln() / q)
    }

    pub fn validate(&self) -> SimResult<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::BadConfig("dt must be positive"));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) || !h.is_finite() {
                return Err(SimError::BadConfig("horizon must be positive"));
            }
        }
        if self.n_paths == 0 || (self.antithetic && self.n_paths < 2) {
            return Err(SimError::BadConfig("n_paths must be positive (at least 2 with antithetic)"));
        }
        if !(self.truncation_tol > 0.0) {
            return Err(SimError::BadConfig("truncation_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_effective: u64,
    pub truncation_bound: f64,
}

/// Barrier strategy being simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    /// Pay `F(x)` above `b`, stop at the first negative state.
    Refracted { b: f64 },
    /// Pay `F(x)` above `b`, inject just enough to stay nonnegative.
    Reflected { b: f64 },
}

impl Control {
    fn barrier(&self) -> f64 {
        match *self {
            Control::Refracted { b } | Control::Reflected { b } => b,
        }
    }
}

/// Outcome of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathRecord {
    pub dividends: f64,
    pub injections: f64,
    pub ruined: bool,
    /// `exp(-q τ₀)` for ruined paths, 0 otherwise.
    pub ruin_discount: f64,
    /// Discount factor at the last simulated time.
    pub final_discount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub path_id: u64,
    pub t: f64,
    pub state: f64,
    pub rate: f64,
    pub injection_increment: f64,
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.s + v;
        if self.s.abs() >= v.abs() {
            self.c += (self.s - t) + v;
        } else {
            self.c += (v - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

impl MCEstimate {
    /// Mean and standard error of i.i.d. samples.
    pub fn from_samples(xs: impl Iterator<Item = f64> + Clone, truncation_bound: f64) -> Self {
        let mut n = 0u64;
        let mut s = Sum::default();
        for x in xs.clone() {
            s.add(x);
            n += 1;
        }
        let mean = s.value() / n as f64;
        let mut ss = Sum::default();
        for x in xs {
            ss.add((x - mean) * (x - mean));
        }
        let var = if n > 1 { ss.value() / (n - 1) as f64 } else { 0.0 };
        Self { mean, stderr: (var / n as f64).sqrt(), n_effective: n, truncation_bound }
    }
}

struct Walker<'a> {
    params: &'a ModelParams,
    cap: &'a RateCap,
    control: Control,
    bridge: bool,
    dt: f64,
    decay: f64,
    x: f64,
    t: f64,
    disc: f64,
    alive: bool,
    rec: PathRecord,
}

impl<'a> Walker<'a> {
    fn new(params: &'a ModelParams, cap: &'a RateCap, control: Control, x0: f64, dt: f64, bridge: bool) -> Self {
        let mut w = Self {
            params,
            cap,
            control,
            bridge,
            dt,
            decay: (-params.q * dt).exp(),
            x: x0,
            t: 0.0,
            disc: 1.0,
            alive: true,
            rec: PathRecord { final_discount: 1.0, ..PathRecord::default() },
        };
        match control {
            Control::Refracted { .. } if x0 <= 0.0 => {
                w.alive = false;
                w.rec.ruined = true;
                w.rec.ruin_discount = 1.0;
            }
            Control::Reflected { .. } if x0 < 0.0 => {
                w.rec.injections = -x0;
                w.x = 0.0;
            }
            _ => {}
        }
        w
    }

    fn rate(&self) -> f64 {
        if self.x >= self.control.barrier() {
            self.cap.value(self.x.max(0.0))
        } else {
            0.0
        }
    }

    /// Advances one step with Brownian increment `dw`; `uniform` feeds the bridge.
    /// Returns `(rate, injection increment)`.
    fn step(&mut self, dw: f64, uniform: &mut impl FnMut() -> f64) -> (f64, f64) {
        let rate = self.rate();
        let s = self.params.sigma;
        let (dt, x) = (self.dt, self.x);
        let disc_end = self.disc * self.decay;
        self.rec.dividends += rate * (self.disc - disc_end) / self.params.q;
        let xn = x + (self.params.mu - rate) * dt + s * dw;
        let mut inj = 0.0;
        match self.control {
            Control::Refracted { .. } => {
                let crossed = xn < 0.0
                    || (self.bridge && {
                        let a = 2.0 * x * xn / (s * s * dt);
                        a < 40.0 && uniform() < (-a).exp()
                    });
                if crossed {
                    self.alive = false;
                    self.rec.ruined = true;
                    self.rec.ruin_discount = disc_end;
                }
                self.x = xn;
            }
            Control::Reflected { .. } => {
                let lowest = if self.bridge {
                    let a = 2.0 * x * xn.max(0.0) / (s * s * dt);
                    if xn < 0.0 || a < 40.0 {
                        let d = xn - x;
                        0.5 * (x + xn - (d * d - 2.0 * s * s * dt * uniform().ln()).sqrt())
                    } else {
                        0.0
                    }
                } else {
                    xn
                };
                inj = (-lowest).max(0.0);
                self.rec.injections += disc_end * inj;
                self.x = xn + inj;
            }
        }
        self.t += dt;
        self.disc = disc_end;
        self.rec.final_discount = disc_end;
        (rate, inj)
    }
}

const BRIDGE_SALT: [u64; 3] = [0x9e37_79b9_7f4a_7c15, 0xbf58_476d_1ce4_e5b9, 0x94d0_49bb_1331_11eb];

fn normal_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Simulates one Brownian path (sign-flipped if `antithetic`) on up to three
/// nested grids `h, 2h, 4h`.
#[allow(clippy::too_many_arguments)]
fn simulate_levels(
    params: &ModelParams,
    cap: &RateCap,
    control: Control,
    x0: f64,
    cfg: &SimConfig,
    path_id: u64,
    flip: bool,
    levels: usize,
) -> [PathRecord; 3] {
    let h = cfg.dt;
    let n_steps = steps(cfg, params.q);
    let mut normals = normal_stream(cfg.seed, path_id);
    let mut uniforms: Vec<ChaCha8Rng> = if cfg.bridge {
        (0..levels)
            .map(|k| normal_stream(cfg.seed ^ BRIDGE_SALT[k], path_id ^ u64::from(flip) << 63))
            .collect()
    } else {
        Vec::new()
    };
    let mut walkers: Vec<Walker> = (0..levels)
        .map(|k| Walker::new(params, cap, control, x0, h * (1u64 << k) as f64, cfg.bridge))
        .collect();
    let mut acc = [0.0f64; 3];
    let sqrt_h = h.sqrt();
    let sign = if flip { -1.0 } else { 1.0 };
    for n in 0..n_steps {
        if walkers.iter().all(|w| !w.alive) {
            break;
        }
        let z: f64 = normals.sample(StandardNormal);
        let dw = sign * sqrt_h * z;
        for k in 0..levels {
            acc[k] += dw;
            if (n + 1) % (1 << k) == 0 {
                let w = &mut walkers[k];
                if w.alive {
                    let mut u = || -> f64 { uniforms[k].gen::<f64>().max(f64::MIN_POSITIVE) };
                    w.step(acc[k], &mut u);
                }
                acc[k] = 0.0;
            }
        }
    }
    let mut out = [PathRecord::default(); 3];
    for (k, w) in walkers.into_iter().enumerate() {
        out[k] = w.rec;
    }
    out
}

/// Fine steps to cover the horizon, a multiple of 4 so every level ends together.
fn steps(cfg: &SimConfig, q: f64) -> u64 {
    let n = (cfg.horizon(q) / cfg.dt).ceil() as u64;
    n.div_ceil(4) * 4
}

fn simulate(params: &ModelParams, cap: &RateCap, control: Control, x0: f64, cfg: &SimConfig) -> SimResult<Vec<PathRecord>> {
    cfg.validate()?;
    Ok((0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let (id, flip) = if cfg.antithetic { (i / 2, i % 2 == 1) } else { (i, false) };
            simulate_levels(params, cap, control, x0, cfg, id, flip, 1)[0]
        })
        .collect())
}

/// Per-path records for the refracted strategy at level `b`.
pub fn simulate_refracted(
    params: &ModelParams,
    cap: &RateCap,
    b: f64,
    x0: f64,
    cfg: &SimConfig,
) -> SimResult<Vec<PathRecord>> {
    simulate(params, cap, Control::Refracted { b }, x0, cfg)
}

/// Per-path records for the reflected strategy at level `b`.
pub fn simulate_reflected(
    params: &ModelParams,
    cap: &RateCap,
    b: f64,
    x0: f64,
    cfg: &SimConfig,
) -> SimResult<Vec<PathRecord>> {
    simulate(params, cap, Control::Reflected { b }, x0, cfg)
}

/// Quantity estimated from simulated paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// Discounted dividends of the refracted strategy until ruin.
    Jd { b: f64 },
    /// Discounted dividends minus `β` times discounted injections, reflected strategy.
    Jc { b: f64 },
    /// Discounted full-rate cap along the reflected process.
    IF,
    /// `E[exp(-q τ₀)]` for the refracted process; survivors count 0.
    Laplace { b: f64 },
}

impl Functional {
    fn control(&self) -> Control {
        match *self {
            Functional::Jd { b } | Functional::Laplace { b } => Control::Refracted { b },
            Functional::Jc { b } => Control::Reflected { b },
            Functional::IF => Control::Reflected { b: 0.0 },
        }
    }

    fn payoff(&self, r: &PathRecord, beta: f64) -> f64 {
        match self {
            Functional::Jd { .. } | Functional::IF => r.dividends,
            Functional::Jc { .. } => r.dividends - beta * r.injections,
            Functional::Laplace { .. } => r.ruin_discount,
        }
    }
}

/// Bound on what the paths would still have collected after the horizon.
pub fn truncation_bound(params: &ModelParams, cap: &RateCap, f: Functional, x0: f64, cfg: &SimConfig) -> f64 {
    let h = cfg.horizon(params.q);
    let tail = (-params.q * h).exp();
    let f_sup = cap.value(x0.max(0.0) + params.mu.abs() * h + 6.0 * params.sigma * h.sqrt());
    match f {
        Functional::Jd { .. } | Functional::IF => tail * f_sup / params.q,
        Functional::Jc { .. } => {
            let (theta1, _) = local_roots(params, params.mu - f_sup);
            tail * (f_sup / params.q + params.beta / theta1)
        }
        Functional::Laplace { .. } => tail,
    }
}

fn unit_count(cfg: &SimConfig) -> u64 {
    if cfg.antithetic {
        cfg.n_paths / 2
    } else {
        cfg.n_paths
    }
}

/// Per-unit payoffs on `levels` nested grids; antithetic pairs are averaged.
fn payoffs(
    params: &ModelParams,
    cap: &RateCap,
    f: Functional,
    x0: f64,
    cfg: &SimConfig,
    levels: usize,
    pay: impl Fn(&PathRecord) -> f64 + Sync,
) -> SimResult<Vec<[f64; 3]>> {
    cfg.validate()?;
    let control = f.control();
    Ok((0..unit_count(cfg))
        .into_par_iter()
        .map(|i| {
            let a = simulate_levels(params, cap, control, x0, cfg, i, false, levels);
            let mut out = [0.0; 3];
            if cfg.antithetic {
                let b = simulate_levels(params, cap, control, x0, cfg, i, true, levels);
                for k in 0..levels {
                    out[k] = 0.5 * (pay(&a[k]) + pay(&b[k]));
                }
            } else {
                for k in 0..levels {
                    out[k] = pay(&a[k]);
                }
            }
            out
        })
        .collect())
}

fn checked_bound(params: &ModelParams, cap: &RateCap, f: Functional, x0: f64, cfg: &SimConfig) -> SimResult<f64> {
    let bound = truncation_bound(params, cap, f, x0, cfg);
    if bound > cfg.truncation_tol {
        return Err(SimError::TruncationTooLoose { bound, tol: cfg.truncation_tol });
    }
    Ok(bound)
}

pub fn estimate(params: &ModelParams, cap: &RateCap, f: Functional, x0: f64, cfg: &SimConfig) -> SimResult<MCEstimate> {
    let bound = checked_bound(params, cap, f, x0, cfg)?;
    let beta = params.beta;
    let p = payoffs(params, cap, f, x0, cfg, 1, |r| f.payoff(r, beta))?;
    Ok(MCEstimate::from_samples(p.iter().map(|v| v[0]), bound))
}

pub fn estimate_j_d(params: &ModelParams, cap: &RateCap, x0: f64, b: f64, cfg: &SimConfig) -> SimResult<MCEstimate> {
    estimate(params, cap, Functional::Jd { b }, x0, cfg)
}

pub fn estimate_j_c(params: &ModelParams, cap: &RateCap, x0: f64, b: f64, cfg: &SimConfig) -> SimResult<MCEstimate> {
    estimate(params, cap, Functional::Jc { b }, x0, cfg)
}

pub fn estimate_if(params: &ModelParams, cap: &RateCap, x0: f64, cfg: &SimConfig) -> SimResult<MCEstimate> {
    estimate(params, cap, Functional::IF, x0, cfg)
}

/// First-passage transform with survivors counted as 0 (`lower`) and as
/// `exp(-q·horizon)` (`upper`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEstimate {
    pub lower: MCEstimate,
    pub upper: MCEstimate,
}

pub fn estimate_laplace_tau0(
    params: &ModelParams,
    cap: &RateCap,
    x0: f64,
    b: f64,
    cfg: &SimConfig,
) -> SimResult<LaplaceEstimate> {
    let f = Functional::Laplace { b };
    let tail = truncation_bound(params, cap, f, x0, cfg);
    let p = payoffs(params, cap, f, x0, cfg, 1, |r| {
        if r.ruined {
            r.ruin_discount
        } else {
            r.ruin_discount - r.final_discount
        }
    })?;
    let lower = MCEstimate::from_samples(p.iter().map(|v| v[0].max(0.0)), tail);
    let upper = MCEstimate::from_samples(p.iter().map(|v| v[0].abs()), tail);
    Ok(LaplaceEstimate { lower, upper })
}

/// Estimates on grids `h, 2h, 4h` driven by common Brownian increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multilevel {
    /// Estimates at `h`, `2h`, `4h`.
    pub levels: [MCEstimate; 3],
    /// Paired difference `est(h) - est(2h)`.
    pub fine_gap: MCEstimate,
    /// Paired difference `est(2h) - est(4h)`.
    pub coarse_gap: MCEstimate,
    /// Assumed weak order of the scheme.
    pub order: f64,
    /// Richardson-style bound on the bias of the `h` estimate.
    pub bias_budget: f64,
    /// The gap between successive grids shrinks under refinement (within noise).
    pub shrinks: bool,
}

impl Multilevel {
    pub fn fine(&self) -> &MCEstimate {
        &self.levels[0]
    }

    /// Error allowance: three standard errors, the bias budget and the truncation bound.
    pub fn tolerance(&self) -> f64 {
        3.0 * self.fine().stderr + self.bias_budget + self.fine().truncation_bound
    }

    pub fn agrees_with(&self, target: f64) -> bool {
        (self.fine().mean - target).abs() <= self.tolerance()
    }
}

pub fn estimate_multilevel(
    params: &ModelParams,
    cap: &RateCap,
    f: Functional,
    x0: f64,
    cfg: &SimConfig,
) -> SimResult<Multilevel> {
    let bound = checked_bound(params, cap, f, x0, cfg)?;
    let beta = params.beta;
    let p = payoffs(params, cap, f, x0, cfg, 3, |r| f.payoff(r, beta))?;
    let level = |k: usize| MCEstimate::from_samples(p.iter().map(move |v| v[k]), bound);
    let fine_gap = MCEstimate::from_samples(p.iter().map(|v| v[0] - v[1]), 0.0);
    let coarse_gap = MCEstimate::from_samples(p.iter().map(|v| v[1] - v[2]), 0.0);
    // with the bridge correction the killing/reflection error is first order,
    // otherwise discrete monitoring limits it to order one half
    let order = if cfg.bridge { 1.0 } else { 0.5 };
    let richardson = 1.0 / (2f64.powf(order) - 1.0);
    let bias_budget = richardson * (fine_gap.mean.abs() + 2.0 * fine_gap.stderr);
    let noise = (fine_gap.stderr.powi(2) + coarse_gap.stderr.powi(2)).sqrt();
    let shrinks = fine_gap.mean.abs() <= coarse_gap.mean.abs() + 3.0 * noise;
    Ok(Multilevel { levels: [level(0), level(1), level(2)], fine_gap, coarse_gap, order, bias_budget, shrinks })
}

/// Writes `path_id,t,state,rate,injection_increment` rows for the first `n` paths.
pub fn write_trace<W: Write>(
    mut out: W,
    params: &ModelParams,
    cap: &RateCap,
    control: Control,
    x0: f64,
    cfg: &SimConfig,
    n: u64,
) -> std::io::Result<()> {
    writeln!(out, "path_id,t,state,rate,injection_increment")?;
    let n_steps = steps(cfg, params.q);
    for id in 0..n {
        let mut normals = normal_stream(cfg.seed, id);
        let mut uniforms = normal_stream(cfg.seed ^ BRIDGE_SALT[0], id);
        let mut w = Walker::new(params, cap, control, x0, cfg.dt, cfg.bridge);
        let mut row = TraceRow { path_id: id, t: 0.0, state: w.x, rate: w.rate(), injection_increment: 0.0 };
        write_row(&mut out, &row)?;
        for _ in 0..n_steps {
            if !w.alive {
                break;
            }
            let z: f64 = normals.sample(StandardNormal);
            let mut u = || -> f64 { uniforms.gen::<f64>().max(f64::MIN_POSITIVE) };
            let (rate, inj) = w.step(cfg.dt.sqrt() * z, &mut u);
            row = TraceRow { path_id: id, t: w.t, state: w.x, rate, injection_increment: inj };
            write_row(&mut out, &row)?;
        }
    }
    Ok(())
}

fn write_row<W: Write>(out: &mut W, r: &TraceRow) -> std::io::Result<()> {
    writeln!(out, "{},{:?},{:?},{:?},{:?}", r.path_id, r.t, r.state, r.rate, r.injection_increment)
}

/// Dividend-rate rule for the domination harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSpec {
    Zero,
    /// `min(c, F(x))`.
    Constant(f64),
    Full,
    /// `F(x)·1{x >= b}`.
    Barrier(f64),
    /// The rate paid by the original strategy at the same time (dominating side only).
    Original,
}

impl RateSpec {
    fn rate(&self, cap: &RateCap, x: f64) -> f64 {
        let f = cap.value(x.max(0.0));
        match *self {
            RateSpec::Zero => 0.0,
            RateSpec::Constant(c) => c.min(f),
            RateSpec::Full | RateSpec::Original => f,
            RateSpec::Barrier(b) => {
                if x >= b {
                    f
                } else {
                    0.0
                }
            }
        }
    }
}

/// Capital-injection rule for the domination harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InjectionSpec {
    None,
    Reflect,
    /// A single injection of the given size at time 0.
    LumpAtStart(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySpec {
    pub rate: RateSpec,
    pub injection: InjectionSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DominationReport {
    pub paths: u64,
    pub steps: u64,
    /// Steps where the dominating state exceeded the original.
    pub state_violations: u64,
    /// Paths whose termination steps differ.
    pub termination_mismatches: u64,
    /// Equal-rate case: cumulative or discounted injections exceeded the original's.
    pub injection_violations: u64,
    /// Steps where the dominating rate was below the original rate.
    pub premise_violations: u64,
}

impl DominationReport {
    pub fn passed(&self) -> bool {
        self.state_violations == 0 && self.termination_mismatches == 0 && self.injection_violations == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct Side {
    x: f64,
    cum: f64,
    disc_inj: f64,
    dead_at: Option<u64>,
}

/// Runs `original` and `dominating` (rate at least as large, reflection-only
/// injections stopped at the original's ruin) on common noise and counts
/// steps on which the ordering of surpluses or injections is broken.
pub fn domination_check(
    params: &ModelParams,
    cap: &RateCap,
    original: StrategySpec,
    dominating: StrategySpec,
    x0: f64,
    cfg: &SimConfig,
) -> SimResult<DominationReport> {
    cfg.validate()?;
    let n_steps = steps(cfg, params.q);
    if original.rate == RateSpec::Original {
        return Err(SimError::BadConfig("the original strategy needs its own rate rule"));
    }
    let equal_rates = dominating.rate == RateSpec::Original;
    let reports: Vec<DominationReport> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|id| {
            let mut rep = DominationReport { paths: 1, ..Default::default() };
            let mut normals = normal_stream(cfg.seed, id);
            let dt = cfg.dt;
            let (sqrt_dt, decay) = (dt.sqrt(), (-params.q * dt).exp());
            let lump = |s: &StrategySpec| match s.injection {
                InjectionSpec::LumpAtStart(a) => a,
                _ => 0.0,
            };
            let start = |s: &StrategySpec| {
                let a = lump(s);
                Side { x: x0 + a, cum: a, disc_inj: a, dead_at: None }
            };
            let mut o = start(&original);
            let mut d = start(&dominating);
            if o.x < 0.0 && original.injection != InjectionSpec::Reflect {
                o.dead_at = Some(0);
            }
            if o.dead_at.is_none() && d.x < 0.0 && dominating.injection == InjectionSpec::Reflect {
                let inj = -d.x;
                d.x = 0.0;
                d.cum += inj;
                d.disc_inj += inj;
            } else if d.x < 0.0 {
                d.dead_at = Some(0);
            }
            let mut disc = 1.0;
            for n in 0..n_steps {
                if o.dead_at.is_some() && d.dead_at.is_some() {
                    break;
                }
                let z: f64 = normals.sample(StandardNormal);
                let dw = sqrt_dt * z;
                let disc_end = disc * decay;
                let ro = original.rate.rate(cap, o.x);
                let rd = match dominating.rate {
                    RateSpec::Original if o.dead_at.is_none() => ro,
                    _ => dominating.rate.rate(cap, d.x),
                };
                if o.dead_at.is_none() && rd < ro {
                    rep.premise_violations += 1;
                }
                if o.dead_at.is_none() {
                    o.x += (params.mu - ro) * dt + params.sigma * dw;
                    if original.injection == InjectionSpec::Reflect && o.x < 0.0 {
                        o.cum -= o.x;
                        o.disc_inj -= disc_end * o.x;
                        o.x = 0.0;
                    }
                    if o.x < 0.0 {
                        o.dead_at = Some(n + 1);
                    }
                }
                if d.dead_at.is_none() {
                    d.x += (params.mu - rd) * dt + params.sigma * dw;
                    let reflect = dominating.injection == InjectionSpec::Reflect && o.dead_at.is_none();
                    if reflect && d.x < 0.0 {
                        d.cum -= d.x;
                        d.disc_inj -= disc_end * d.x;
                        d.x = 0.0;
                    }
                    if d.x < 0.0 {
                        d.dead_at = Some(n + 1);
                    }
                }
                disc = disc_end;
                rep.steps += 1;
                if o.dead_at.is_none() {
                    if d.x > o.x {
                        rep.state_violations += 1;
                    }
                    if equal_rates && d.cum > o.cum * (1.0 + 1e-12) + 1e-12 {
                        rep.injection_violations += 1;
                    }
                }
            }
            if o.dead_at != d.dead_at {
                rep.termination_mismatches += 1;
            }
            if equal_rates && d.disc_inj > o.disc_inj * (1.0 + 1e-12) + 1e-12 {
                rep.injection_violations += 1;
            }
            rep
        })
        .collect();
    let mut total = DominationReport::default();
    for r in reports {
        total.paths += r.paths;
        total.steps += r.steps;
        total.state_violations += r.state_violations;
        total.termination_mismatches += r.termination_mismatches;
        total.injection_violations += r.injection_violations;
        total.premise_violations += r.premise_violations;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(1.0, 1.0, 2.0, 1.5).unwrap()
    }

    fn cfg(n: u64) -> SimConfig {
        SimConfig { dt: 1e-2, n_paths: n, seed: 7, ..SimConfig::default() }
    }

    #[test]
    fn zero_cap_pays_nothing() {
        let cap = RateCap::constant(0.0).unwrap();
        for r in simulate_refracted(&params(), &cap, 0.0, 1.0, &cfg(200)).unwrap() {
            assert_eq!(r.dividends, 0.0);
        }
    }

    #[test]
    fn unreachable_barrier_pays_nothing() {
        let cap = RateCap::constant(1.0).unwrap();
        let c = cfg(200);
        let h = c.horizon(2.0);
        let b = 1.0 + h + 10.0 * h.sqrt();
        let paid = simulate_refracted(&params(), &cap, b, 1.0, &c).unwrap().iter().filter(|r| r.dividends > 0.0).count();
        assert_eq!(paid, 0);
    }

    #[test]
    fn ruin_at_zero_start_is_immediate() {
        let cap = RateCap::constant(1.0).unwrap();
        let e = estimate_j_d(&params(), &cap, 0.0, 0.5, &cfg(100)).unwrap();
        assert_eq!((e.mean, e.stderr), (0.0, 0.0));
        let l = estimate_laplace_tau0(&params(), &cap, 0.0, 0.5, &cfg(100)).unwrap();
        assert_eq!(l.lower.mean, 1.0);
        assert_eq!(l.upper.mean, 1.0);
    }

    #[test]
    fn reflected_state_is_nonnegative_and_injects_only_at_zero() {
        let cap = RateCap::constant(3.0).unwrap();
        for bridge in [false, true] {
            let c = SimConfig { bridge, ..cfg(20) };
            let mut buf = Vec::new();
            write_trace(&mut buf, &params(), &cap, Control::Reflected { b: 0.3 }, 0.2, &c, 20).unwrap();
            let text = String::from_utf8(buf).unwrap();
            let mut injected = 0;
            for line in text.lines().skip(1) {
                let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
                assert!(f[2] >= 0.0);
                if f[4] > 0.0 {
                    injected += 1;
                    if !bridge {
                        assert_eq!(f[2], 0.0);
                    }
                }
            }
            assert!(injected > 0);
        }
    }

    #[test]
    fn constant_cap_if_is_s_over_q() {
        let cap = RateCap::constant(1.0).unwrap();
        let e = estimate_if(&params(), &cap, 0.5, &cfg(500)).unwrap();
        assert!((e.mean - 0.5).abs() < 1e-6 && e.stderr < 1e-12);
    }

    #[test]
    fn estimates_are_deterministic_and_thread_independent() {
        let cap = RateCap::linear(0.5).unwrap();
        let c = SimConfig { antithetic: true, ..cfg(400) };
        let a = estimate_j_c(&params(), &cap, 0.5, 0.4, &c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| estimate_j_c(&params(), &cap, 0.5, 0.4, &c).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.n_effective, 200);
    }

    #[test]
    fn truncation_is_enforced() {
        let cap = RateCap::constant(1.0).unwrap();
        let c = SimConfig { horizon: Some(0.5), ..cfg(10) };
        assert!(matches!(estimate_j_d(&params(), &cap, 1.0, 0.5, &c), Err(SimError::TruncationTooLoose { .. })));
    }

    #[test]
    fn domination_identical_strategies_coincide() {
        let cap = RateCap::constant(2.0).unwrap();
        let s = StrategySpec { rate: RateSpec::Barrier(0.5), injection: InjectionSpec::Reflect };
        let rep = domination_check(&params(), &cap, s, s, 0.5, &cfg(200)).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.premise_violations, 0);
    }

    #[test]
    fn neumaier_sum_recovers_small_terms() {
        let mut s = Sum::default();
        for v in [1e16, 1.0, -1e16, 1.0] {
            s.add(v);
        }
        assert_eq!(s.value(), 2.0);
    }
}
