//! Semi-infinite boundary-value problems for `φ` and `I_F`.
//!
//! Both problems are solved by invariant imbedding. With `m(x) = μ - F(x)` the
//! log-derivative `r = φ'/φ` obeys the Riccati equation
//! `r' = (2/σ²)(q - m r) - r²` and the defect `s = u' - r u` of the linear-growth
//! solution obeys `s' = -(2m/σ² + r) s - (2/σ²) F`. Both are stable when swept
//! from `x_max` down to 0, so a single backward sweep followed by a forward
//! quadrature (`u' = r u + s`, `u'(0) = 0`) yields both solutions without ever
//! touching the growing mode.

use alloc::vec::Vec;

use libm::{exp, log, sqrt};

use crate::error::{Error, Result};
use crate::hermite::{self, Jet};
use crate::integrate::dopri5;
use crate::model::{ModelParams, RateCap};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const RESIDUAL_TOL: f64 = 1e-7;
pub const DEFAULT_GRID_N: usize = 200;

/// Far-field information must be forgotten by a factor `exp(-DAMPING)`.
const DAMPING: f64 = 30.0;
/// Largest `h t₁` per grid interval, inside the explicit integrator's stability region.
const STIFF_STEP: f64 = 2.0;

const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionKind {
    Phi,
    IF,
}

/// Grid and tolerance settings shared by both solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    /// `None` picks [`default_x_max`].
    pub x_max: Option<f64>,
    pub tol: f64,
    /// Minimum number of grid intervals on `[0, x_max]`.
    pub grid_n: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { x_max: None, tol: DEFAULT_TOL, grid_n: DEFAULT_GRID_N }
    }
}

/// Roots `(θ₁, θ₂)` of `(σ²/2)θ² + mθ - q = 0`.
pub fn local_roots(params: &ModelParams, m: f64) -> (f64, f64) {
    let s2 = params.sigma2();
    let d = sqrt(m * m + 2.0 * params.q * s2);
    if m >= 0.0 {
        let t2 = (-m - d) / s2;
        (-2.0 * params.q / (s2 * t2), t2)
    } else {
        let t1 = (-m + d) / s2;
        (t1, -2.0 * params.q / (s2 * t1))
    }
}

fn far_field_exact(cap: &RateCap, x_max: f64) -> bool {
    cap.slope_at_infinity() == 0.0 && cap.breakpoints().last().map_or(true, |&k| k <= x_max)
}

/// `∫_a^b θ₁(x) dx`, the backward damping rate of the `s` sweep.
fn damping(params: &ModelParams, cap: &RateCap, a: f64, b: f64) -> f64 {
    let n = 400;
    let h = (b - a) / n as f64;
    let k = |x: f64| local_roots(params, params.mu - cap.value(x)).0;
    let mut acc = 0.5 * (k(a) + k(b));
    for i in 1..n {
        acc += k(a + i as f64 * h);
    }
    acc * h
}

/// Default truncation point of the half-line.
pub fn default_x_max(params: &ModelParams, cap: &RateCap) -> f64 {
    let kit = crate::fluctuation::build_kit(*params);
    let ell = 1.0 / kit.alpha1.min(-kit.alpha2);
    let mut x = (10.0 * ell).max(2.0 * cap.breakpoints().last().copied().unwrap_or(0.0));
    for _ in 0..60 {
        let (_, t2) = local_roots(params, params.mu - cap.value(x));
        let bounded = cap.slope_at_infinity() == 0.0;
        let decayed = !bounded || t2 * x < log(1e-10);
        let damped = far_field_exact(cap, x) || damping(params, cap, 0.5 * x, x) >= DAMPING;
        if decayed && damped {
            return x;
        }
        x *= 2.0;
    }
    x
}

/// A grid-backed solution with quintic Hermite interpolation.
///
/// `Phi` stores `ln φ` with its first two derivatives; `IF` stores `I_F` directly.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    kind: SolutionKind,
    params: ModelParams,
    cap: RateCap,
    xs: Vec<f64>,
    jets: Vec<Jet>,
    x_trust: f64,
    residual_sup: f64,
    /// Exact `λφ` terms added to an `I_F` solution.
    shifts: Vec<(f64, OdeSolution)>,
}

/// Solves both problems on a common grid: `(φ, I_F)`.
pub fn solve(params: &ModelParams, cap: &RateCap, num: &Numerics) -> Result<(OdeSolution, OdeSolution)> {
    let x_max = num.x_max.unwrap_or_else(|| default_x_max(params, cap));
    if !(x_max > 0.0) || !x_max.is_finite() {
        return Err(Error::DomainTooSmall { x_max });
    }
    let exact = far_field_exact(cap, x_max);
    if !exact && damping(params, cap, 0.0, x_max) < DAMPING {
        return Err(Error::DomainTooSmall { x_max });
    }
    let tol = num.tol;
    let s2 = params.sigma2();
    let q = params.q;
    let xs = layout(params, cap, x_max, tol, num.grid_n.max(1));
    let n = xs.len();

    let rhs = |x: f64, y: &[f64; 2]| {
        let f = cap.value(x);
        let m = params.mu - f;
        let r = y[0];
        [2.0 / s2 * (q - m * r) - r * r, -(2.0 * m / s2 + r) * y[1] - 2.0 / s2 * f]
    };
    let jets_at = |x: f64, r: f64, s: f64| {
        let (f, fp) = cap.eval_unchecked(x);
        let m = params.mu - f;
        let r1 = 2.0 / s2 * (q - m * r) - r * r;
        let r2 = 2.0 / s2 * (fp * r - m * r1) - 2.0 * r * r1;
        let s1 = -(2.0 * m / s2 + r) * s - 2.0 / s2 * f;
        let s2_ = -(-2.0 * fp / s2 + r1) * s - (2.0 * m / s2 + r) * s1 - 2.0 / s2 * fp;
        (Jet::new(r, r1, r2), Jet::new(s, s1, s2_))
    };

    let mut rj = alloc::vec![Jet::new(0.0, 0.0, 0.0); n];
    let mut sj = rj.clone();
    let rtol = tol * 1e-2;
    // frozen-coefficient data, relaxed onto the slow solution before x_max
    let (t1, _) = local_roots(params, params.mu - cap.value(x_max));
    let x_start = if exact { x_max } else { x_max + DAMPING / t1 };
    let (f_end, _) = cap.eval_unchecked(x_start);
    let (t1, t2) = local_roots(params, params.mu - f_end);
    let mut y = [t2, 2.0 * f_end / (s2 * t1)];
    y = dopri5(rhs, x_start, y, x_max, rtol, rtol * 1e-2).map_err(|at| Error::IntegrationFailed { at })?;
    (rj[n - 1], sj[n - 1]) = jets_at(x_max, y[0], y[1]);
    for i in (0..n - 1).rev() {
        y = dopri5(rhs, xs[i + 1], y, xs[i], rtol, rtol * 1e-2)
            .map_err(|at| Error::IntegrationFailed { at })?;
        if !(y[0] < 0.0) || !y[1].is_finite() {
            return Err(Error::IntegrationFailed { at: xs[i] });
        }
        (rj[i], sj[i]) = jets_at(xs[i], y[0], y[1]);
    }

    let mut lj = Vec::with_capacity(n);
    let mut uj = Vec::with_capacity(n);
    let ode_u = |x: f64, u: f64, d1: f64| {
        let f = cap.value(x);
        2.0 / s2 * (q * u - (params.mu - f) * d1 - f)
    };
    let mut l = 0.0;
    let mut u = -sj[0].v / rj[0].v;
    lj.push(Jet::new(l, rj[0].v, rj[0].d1));
    uj.push(Jet::new(u, 0.0, ode_u(0.0, u, 0.0)));
    for i in 0..n - 1 {
        let h = xs[i + 1] - xs[i];
        let l_next = l + hermite::quintic_integral(h, &rj[i], &rj[i + 1]);
        let la = Jet::new(l, rj[i].v, rj[i].d1);
        let lb = Jet::new(l_next, rj[i + 1].v, rj[i + 1].d1);
        let mut acc = 0.0;
        for (g, w) in GAUSS5 {
            let t = 0.5 * (g + 1.0);
            let ly = hermite::quintic(t, h, &la, &lb).v;
            let sy = hermite::quintic(t, h, &sj[i], &sj[i + 1]).v;
            acc += w * exp(l_next - ly) * sy;
        }
        u = u * exp(l_next - l) + 0.5 * h * acc;
        l = l_next;
        if !u.is_finite() || !l.is_finite() {
            return Err(Error::IntegrationFailed { at: xs[i + 1] });
        }
        let d1 = rj[i + 1].v * u + sj[i + 1].v;
        lj.push(lb);
        uj.push(Jet::new(u, d1, ode_u(xs[i + 1], u, d1)));
    }

    let x_trust = if exact { x_max } else { trust_point(params, cap, &xs) };
    let phi = OdeSolution::assemble(SolutionKind::Phi, *params, cap.clone(), xs.clone(), lj, x_trust);
    let iff = OdeSolution::assemble(SolutionKind::IF, *params, cap.clone(), xs, uj, x_trust);
    Ok((phi, iff))
}

pub fn solve_phi(params: &ModelParams, cap: &RateCap, x_max: f64, tol: f64) -> Result<OdeSolution> {
    let num = Numerics { x_max: Some(x_max), tol, ..Numerics::default() };
    solve(params, cap, &num).map(|p| p.0)
}

pub fn solve_if(params: &ModelParams, cap: &RateCap, x_max: f64, tol: f64) -> Result<OdeSolution> {
    let num = Numerics { x_max: Some(x_max), tol, ..Numerics::default() };
    solve(params, cap, &num).map(|p| p.1)
}

fn layout(params: &ModelParams, cap: &RateCap, x_max: f64, tol: f64, grid_n: usize) -> Vec<f64> {
    let c = 0.05 * libm::pow(tol / DEFAULT_TOL, 0.25);
    let h_glob = x_max / grid_n as f64;
    let knots: Vec<f64> = cap.breakpoints().iter().copied().filter(|&k| k > 0.0 && k < x_max).collect();
    let mut next_knot = 0;
    let mut xs = alloc::vec![0.0];
    let mut x = 0.0;
    while x < x_max {
        // φ and I_F vary on the decaying scale and as fast as the roots move;
        // the growing root only bounds the step for stability
        let (f, fp) = cap.eval_unchecked(x);
        let m = params.mu - f;
        let (t1, t2) = local_roots(params, m);
        let drift_scale = sqrt(m * m + 2.0 * params.q * params.sigma2()) / fp.abs().max(1e-300);
        let mut h = h_glob.min(c / -t2).min(STIFF_STEP / t1).min(c * drift_scale);
        let mut nx = x + h;
        if next_knot < knots.len() && nx >= knots[next_knot] - 1e-9 * h {
            nx = knots[next_knot];
            next_knot += 1;
        }
        if nx > x_max - 0.5 * h {
            nx = x_max;
        }
        h = nx - x;
        if h <= 0.0 {
            break;
        }
        xs.push(nx);
        x = nx;
    }
    xs
}

fn trust_point(params: &ModelParams, cap: &RateCap, xs: &[f64]) -> f64 {
    let k = |x: f64| local_roots(params, params.mu - cap.value(x)).0;
    let mut acc = 0.0;
    for i in (0..xs.len() - 1).rev() {
        acc += 0.5 * (xs[i + 1] - xs[i]) * (k(xs[i]) + k(xs[i + 1]));
        if acc >= DAMPING {
            return xs[i];
        }
    }
    0.0
}

impl OdeSolution {
    fn assemble(
        kind: SolutionKind,
        params: ModelParams,
        cap: RateCap,
        xs: Vec<f64>,
        jets: Vec<Jet>,
        x_trust: f64,
    ) -> Self {
        let mut sol = Self { kind, params, cap, xs, jets, x_trust, residual_sup: 0.0, shifts: Vec::new() };
        sol.residual_sup = sol.residual();
        sol
    }

    /// Builds a solution from sampled `(x, value, deriv)` triples; second
    /// derivatives at the nodes are taken from the ODE.
    pub fn from_samples(
        kind: SolutionKind,
        params: ModelParams,
        cap: RateCap,
        xs: Vec<f64>,
        values: &[f64],
        derivs: &[f64],
    ) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() || xs.len() != derivs.len() {
            return Err(Error::BadCoefficients("sample arrays must have equal length >= 2"));
        }
        if xs[0] != 0.0 || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadCoefficients("sample grid must start at 0 and increase"));
        }
        let s2 = params.sigma2();
        let q = params.q;
        let mut jets = Vec::with_capacity(xs.len());
        for ((&x, &v), &d) in xs.iter().zip(values).zip(derivs) {
            let f = cap.value(x);
            let m = params.mu - f;
            jets.push(match kind {
                SolutionKind::Phi => {
                    if !(v > 0.0) {
                        return Err(Error::BadCoefficients("phi samples must be positive"));
                    }
                    let r = d / v;
                    Jet::new(log(v), r, 2.0 / s2 * (q - m * r) - r * r)
                }
                SolutionKind::IF => Jet::new(v, d, 2.0 / s2 * (q * v - m * d - f)),
            });
        }
        let x_max = xs[xs.len() - 1];
        Ok(Self::assemble(kind, params, cap, xs, jets, x_max))
    }

    /// `I_F + λφ`, evaluated exactly rather than resampled.
    pub fn add_phi(&self, phi: &OdeSolution, lambda: f64) -> Result<Self> {
        if self.kind != SolutionKind::IF || phi.kind != SolutionKind::Phi {
            return Err(Error::BadCoefficients("add_phi needs an I_F solution and a phi solution"));
        }
        let mut out = self.clone();
        out.shifts.push((lambda, phi.clone()));
        out.x_trust = self.x_trust.min(phi.x_trust);
        out.residual_sup = out.residual();
        Ok(out)
    }

    /// Same grid with every value multiplied by `factor` and derivatives kept.
    pub fn with_scaled_values(&self, factor: f64) -> Result<Self> {
        let values: Vec<f64> = self.xs.iter().map(|&x| factor * self.value_d1(x).0).collect();
        let derivs: Vec<f64> = self.xs.iter().map(|&x| self.value_d1(x).1).collect();
        Self::from_samples(self.kind, self.params, self.cap.clone(), self.xs.clone(), &values, &derivs)
    }

    pub fn kind(&self) -> SolutionKind {
        self.kind
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cap(&self) -> &RateCap {
        &self.cap
    }

    pub fn grid(&self) -> &[f64] {
        &self.xs
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Right end of the region where truncation effects are negligible.
    pub fn x_trust(&self) -> f64 {
        self.x_trust
    }

    pub fn residual_sup(&self) -> f64 {
        self.residual_sup
    }

    /// Interpolated jet of the stored variable (`ln φ` or `I_F`), second
    /// derivative taken from the interpolant rather than the ODE.
    #[inline]
    pub fn jet(&self, x: f64) -> Jet {
        let i = hermite::locate(&self.xs, x);
        let h = self.xs[i + 1] - self.xs[i];
        let mut j = hermite::quintic((x - self.xs[i]) / h, h, &self.jets[i], &self.jets[i + 1]);
        for (lambda, phi) in &self.shifts {
            let l = phi.jet(x);
            let p = lambda * exp(l.v);
            j = Jet::new(j.v + p, j.d1 + p * l.d1, j.d2 + p * (l.d2 + l.d1 * l.d1));
        }
        j
    }

    /// Value and first derivative; no domain check.
    #[inline]
    pub fn value_d1(&self, x: f64) -> (f64, f64) {
        let j = self.jet(x);
        match self.kind {
            SolutionKind::Phi => {
                let p = exp(j.v);
                (p, j.d1 * p)
            }
            SolutionKind::IF => (j.v, j.d1),
        }
    }

    /// `ln φ(x)` and `φ'(x)/φ(x)`; meaningful for `Phi` only.
    #[inline]
    pub fn log_jet(&self, x: f64) -> (f64, f64) {
        let j = self.jet(x);
        (j.v, j.d1)
    }

    /// Value, first derivative, and the second derivative implied by the ODE.
    pub fn eval(&self, x: f64) -> Result<(f64, f64, f64)> {
        let x_max = self.x_max();
        if !(x >= 0.0 && x <= x_max * (1.0 + 1e-12)) {
            return Err(Error::OutOfDomain { x, x_max });
        }
        let (v, d1) = self.value_d1(x);
        Ok((v, d1, self.second_from_ode(x, v, d1)))
    }

    /// `d2 = 2(q v - (μ - F) d1 - source)/σ²`.
    pub fn second_from_ode(&self, x: f64, v: f64, d1: f64) -> f64 {
        let f = self.cap.value(x);
        let src = if self.kind == SolutionKind::IF { f } else { 0.0 };
        2.0 * (self.params.q * v - (self.params.mu - f) * d1 - src) / self.params.sigma2()
    }

    /// Sup of the normalized ODE defect at interior points between nodes,
    /// with `d2` taken from the interpolant itself.
    pub fn residual(&self) -> f64 {
        let s2 = self.params.sigma2();
        let q = self.params.q;
        let mut sup: f64 = 0.0;
        for i in 0..self.xs.len() - 1 {
            let h = self.xs[i + 1] - self.xs[i];
            for t in [0.25, 0.5, 0.75] {
                let x = self.xs[i] + t * h;
                let j = self.jet(x);
                let f = self.cap.value(x);
                let m = self.params.mu - f;
                let res = match self.kind {
                    SolutionKind::Phi => {
                        let p = exp(j.v);
                        p * (0.5 * s2 * (j.d2 + j.d1 * j.d1) + m * j.d1 - q).abs() / (1.0 + p)
                    }
                    SolutionKind::IF => {
                        (0.5 * s2 * j.d2 + m * j.d1 - q * j.v + f).abs() / (1.0 + j.v.abs())
                    }
                };
                sup = if res.is_nan() { f64::INFINITY } else { sup.max(res) };
            }
        }
        sup
    }

    /// `(x, value, deriv)` at every node.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.xs.iter().map(move |&x| {
            let (v, d) = self.value_d1(x);
            (x, v, d)
        })
    }
}

/// Free-function form of [`OdeSolution::eval`].
pub fn eval_solution(sol: &OdeSolution, x: f64) -> Result<(f64, f64, f64)> {
    sol.eval(x)
}

/// Free-function form of [`OdeSolution::residual`].
pub fn ode_residual(sol: &OdeSolution) -> f64 {
    sol.residual()
}
