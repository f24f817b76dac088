//! Barrier strategies: performance functions, optimal levels and the regime decision.
//!
//! All formulas are evaluated through ratios (`ψ(x)/ψ(b)`, `φ(x)/φ(b)`, log
//! slopes) so that nothing overflows for large barriers.

use alloc::vec::Vec;

use libm::{exp, log};

use crate::error::{Error, Result};
use crate::fluctuation::{build_kit, FluctuationKit, ScaledBasis};
use crate::hermite::Jet;
use crate::model::{ModelParams, RateCap};
use crate::ode::{self, Numerics, OdeSolution};
use crate::roots;

/// Geometric scan resolution for barrier equations.
const SCAN_POINTS: usize = 400;
const ROOT_XTOL: f64 = 1e-12;
pub const BORDERLINE: f64 = 1e-8;
/// `|V_c(0)|` below this is treated as zero when checking the discriminants.
pub const VC_ZERO_TOL: f64 = 1e-8;

/// Solved `φ`, `I_F` and the fluctuation kit for one parameter point.
#[derive(Debug, Clone)]
pub struct Problem {
    pub params: ModelParams,
    pub kit: FluctuationKit,
    phi: OdeSolution,
    iff: OdeSolution,
}

#[derive(Debug, Clone, Copy)]
struct Local {
    i: f64,
    di: f64,
    r: f64,
    ln_phi: f64,
    s: ScaledBasis,
}

impl Local {
    fn rho(&self) -> f64 {
        self.s.values.psi_prime / self.s.values.psi
    }

    fn big_p(&self) -> f64 {
        self.s.values.big_psi_prime / self.s.values.big_psi
    }
}

impl Problem {
    pub fn new(params: ModelParams, cap: &RateCap, num: &Numerics) -> Result<Self> {
        let (phi, iff) = ode::solve(&params, cap, num)?;
        Ok(Self::from_solutions(phi, iff))
    }

    pub fn from_solutions(phi: OdeSolution, iff: OdeSolution) -> Self {
        let params = *phi.params();
        Self { params, kit: build_kit(params), phi, iff }
    }

    /// Same problem with `I_F` replaced by another particular solution.
    pub fn with_if(&self, iff: OdeSolution) -> Self {
        Self { iff, ..self.clone() }
    }

    pub fn phi(&self) -> &OdeSolution {
        &self.phi
    }

    pub fn iff(&self) -> &OdeSolution {
        &self.iff
    }

    pub fn cap(&self) -> &RateCap {
        self.phi.cap()
    }

    pub fn x_max(&self) -> f64 {
        self.phi.x_max()
    }

    pub fn x_trust(&self) -> f64 {
        self.phi.x_trust().min(self.iff.x_trust())
    }

    /// Characteristic length `1/min(α₁, |α₂|)`.
    pub fn length_scale(&self) -> f64 {
        1.0 / self.kit.alpha1.min(-self.kit.alpha2)
    }

    fn check(&self, x: f64) -> Result<()> {
        let x_max = self.x_max();
        if x >= 0.0 && x <= x_max * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { x, x_max })
        }
    }

    fn local(&self, b: f64) -> Local {
        let (i, di) = self.iff.value_d1(b);
        let (ln_phi, r) = self.phi.log_jet(b);
        Local { i, di, r, ln_phi, s: self.kit.scaled(b) }
    }

    /// `(φ, φ', φ'')(x) / φ(b)` with `φ''` from the interpolant.
    fn phi_ratio(&self, x: f64, ln_phi_b: f64) -> Jet {
        let j = self.phi.jet(x);
        let e = exp(j.v - ln_phi_b);
        Jet::new(e, j.d1 * e, (j.d2 + j.d1 * j.d1) * e)
    }

    /// `(ψ, ψ', ψ'')(x)` and `(Ψ, Ψ', Ψ'')(x)`, each times `exp(-log_scale)`.
    fn basis_jets(&self, x: f64) -> (Jet, Jet, f64) {
        let s = self.kit.scaled(x);
        let v = s.values;
        let (mu, q, s2) = (self.params.mu, self.params.q, self.params.sigma2());
        let psi2 = 2.0 / s2 * (q * v.psi - mu * v.psi_prime);
        (
            Jet::new(v.psi, v.psi_prime, psi2),
            Jet::new(v.big_psi, v.big_psi_prime, q * v.psi_prime),
            s.log_scale,
        )
    }

    /// Jet at `x` of the homogeneous solution `g` with `g'(b) = r g(b)` and
    /// `g(b) = sign·exp(ln_g)`, as a sum of two exponentials anchored at `b`.
    /// Avoids cancelling two `O(exp(α₁ b))` terms for large `α₁ b`.
    fn pinned_mode(&self, x: f64, b: f64, r: f64, sign: f64, ln_g: f64) -> Jet {
        let (a1, a2) = (self.kit.alpha1, self.kit.alpha2);
        let wa = sign * (r - a2) / (a1 - a2) * exp(ln_g + a1 * (x - b));
        let wb = sign * (a1 - r) / (a1 - a2) * exp(ln_g + a2 * (x - b));
        Jet::new(wa + wb, a1 * wa + a2 * wb, a1 * a1 * wa + a2 * a2 * wb)
    }

    /// `ln W(b)` for the Wronskian `Ψψ' - Ψ'ψ`.
    fn ln_wronskian(&self, b: f64) -> f64 {
        let s2 = self.params.sigma2();
        log(2.0 / s2) - 2.0 * self.params.mu * b / s2
    }

    /// `I_F'(0) - I_F(0) φ'(0)`.
    pub fn bd_condition(&self) -> f64 {
        let l = self.local(0.0);
        l.di - l.i * l.r
    }

    fn k(&self) -> f64 {
        0.5 * self.params.beta * self.params.sigma2()
    }
}

/// Which closed-form piece to evaluate at (or near) the barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

fn side_of(x: f64, b: f64, side: Option<Side>) -> Side {
    side.unwrap_or(if x < b { Side::Below } else { Side::Above })
}

/// Coefficients of the refracted (no-injection) performance function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierCoeffsD {
    pub b: f64,
    pub d1: f64,
    pub d2: f64,
    below: f64,
    above: f64,
    ln_phi_b: f64,
}

pub fn coeffs_d(p: &Problem, b: f64) -> Result<BarrierCoeffsD> {
    p.check(b)?;
    let l = p.local(b);
    if b == 0.0 {
        let d1 = (l.di - l.r * l.i) / p.kit.basis(0.0).psi_prime;
        return Ok(BarrierCoeffsD { b, d1, d2: -l.i, below: 0.0, above: -l.i, ln_phi_b: 0.0 });
    }
    let rho = l.rho();
    let den = rho - l.r;
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::SingularDenominator { b });
    }
    let below = (l.di - l.r * l.i) / den;
    let above = (l.di - rho * l.i) / den;
    Ok(BarrierCoeffsD {
        b,
        d1: below / (l.s.values.psi * exp(l.s.log_scale)),
        d2: above / exp(l.ln_phi),
        below,
        above,
        ln_phi_b: l.ln_phi,
    })
}

/// `(J_d, J_d', J_d'')` at `x`; `side` forces one piece at `x = b`.
pub fn j_d_jet(p: &Problem, c: &BarrierCoeffsD, x: f64, side: Option<Side>) -> Result<Jet> {
    p.check(x)?;
    if c.b > 0.0 && side_of(x, c.b, side) == Side::Below {
        let (psi, _, ls) = p.basis_jets(x);
        let sb = p.kit.scaled(c.b);
        let f = c.below * exp(ls - sb.log_scale) / sb.values.psi;
        return Ok(Jet::new(f * psi.v, f * psi.d1, f * psi.d2));
    }
    let u = p.iff.jet(x);
    let e = p.phi_ratio(x, c.ln_phi_b);
    Ok(Jet::new(u.v + c.above * e.v, u.d1 + c.above * e.d1, u.d2 + c.above * e.d2))
}

pub fn j_d(p: &Problem, c: &BarrierCoeffsD, x: f64) -> Result<f64> {
    j_d_jet(p, c, x, None).map(|j| j.v)
}

/// `J_d'(b; b) - 1`, positive at `0+` exactly when the zero barrier is not optimal.
fn bd_residual(p: &Problem, b: f64) -> f64 {
    let l = p.local(b);
    let rho = l.rho();
    (l.di - l.r * l.i) * rho / (rho - l.r) - 1.0
}

/// Result of a barrier search.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSearch {
    pub b: f64,
    /// Every root found by the scan.
    pub roots: Vec<f64>,
    /// More than one root was found.
    pub multiple: bool,
    /// The zero-barrier test was within [`BORDERLINE`] of its threshold.
    pub borderline: bool,
}

fn scan_roots(p: &Problem, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let lo = 1e-6 * p.length_scale();
    let hi = p.x_trust();
    if !(hi > lo) {
        return Err(Error::NoBracketFound { lo, hi });
    }
    roots::scan_geometric(&f, lo, hi, SCAN_POINTS)
        .into_iter()
        .map(|(a, b)| roots::brent(&f, a, b, ROOT_XTOL))
        .collect()
}

fn pick_best(cands: &[f64], value_at: impl Fn(f64, f64) -> Result<f64>) -> Result<f64> {
    let probe = cands.iter().copied().fold(0.0, f64::max);
    let mut best = (cands[0], f64::NEG_INFINITY);
    for &b in cands {
        let v = value_at(probe, b)?;
        if v > best.1 {
            best = (b, v);
        }
    }
    Ok(best.0)
}

pub fn find_b_d(p: &Problem) -> Result<BarrierSearch> {
    let cond = p.bd_condition();
    let borderline = (cond - 1.0).abs() < BORDERLINE;
    if cond <= 1.0 && !borderline {
        return Ok(BarrierSearch { b: 0.0, roots: Vec::new(), multiple: false, borderline });
    }
    let roots = match scan_roots(p, |b| bd_residual(p, b)) {
        Ok(r) => r,
        Err(e) if !borderline => return Err(e),
        Err(_) => Vec::new(),
    };
    if roots.is_empty() && !borderline {
        return Err(Error::NoBracketFound { lo: 0.0, hi: p.x_trust() });
    }
    let mut cands = roots.clone();
    if borderline {
        cands.push(0.0);
    }
    let b = pick_best(&cands, |x, b| j_d(p, &coeffs_d(p, b)?, x))?;
    Ok(BarrierSearch { b, multiple: roots.len() > 1, roots, borderline })
}

/// `V_d'(0+)`.
pub fn vd_prime_zero(p: &Problem, b_d: f64) -> f64 {
    if b_d > 0.0 {
        let k = &p.kit;
        let (a1, a2) = (k.alpha1, k.alpha2);
        // divide through by exp(α₁ b) so large barriers do not overflow
        let den = a1 - a2 * exp((a2 - a1) * b_d);
        2.0 / p.params.sigma2() * k.delta * exp(-a1 * b_d) / den
    } else {
        p.bd_condition()
    }
}

/// Coefficients of the reflected (bail-out) performance function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierCoeffsC {
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// `C₁Ψ(b)`.
    a: f64,
    /// `C₂φ(b)`.
    bc: f64,
    /// `C₄φ(b)`.
    cw: f64,
    ln_phi_b: f64,
    /// `φ'(b)/φ(b)`.
    r_b: f64,
    /// `ln |ψ(b) - C₃Ψ(b)|`.
    ln_g: f64,
}

impl BarrierCoeffsC {
    /// `J_c(0; b) = C₁ - β(σ²/2)C₃`.
    pub fn value_at_zero(&self, beta: f64, sigma2: f64) -> f64 {
        self.c1 - 0.5 * beta * sigma2 * self.c3
    }
}

pub fn coeffs_c(p: &Problem, b: f64) -> Result<BarrierCoeffsC> {
    p.check(b)?;
    if !(b > 0.0) {
        return Err(Error::SingularDenominator { b });
    }
    let l = p.local(b);
    let v = l.s.values;
    let big_p = l.big_p();
    let den = big_p - l.r;
    let den_s = v.big_psi_prime - l.r * v.big_psi;
    if !(den > 0.0) || !den.is_finite() || !(den_s > 0.0) {
        return Err(Error::SingularDenominator { b });
    }
    let g = exp(l.s.log_scale);
    let a = (l.di - l.r * l.i) / den;
    let bc = (l.di - big_p * l.i) / den;
    let cw = p.kit.wronskian(b) / (g * v.big_psi) / den;
    let phi_b = exp(l.ln_phi);
    Ok(BarrierCoeffsC {
        b,
        c1: a / (g * v.big_psi),
        c2: bc / phi_b,
        c3: (v.psi_prime - l.r * v.psi) / den_s,
        c4: cw / phi_b,
        a,
        bc,
        cw,
        ln_phi_b: l.ln_phi,
        r_b: l.r,
        ln_g: p.ln_wronskian(b) - l.s.log_scale - log(den_s),
    })
}

pub fn j_c_jet(p: &Problem, c: &BarrierCoeffsC, x: f64, side: Option<Side>) -> Result<Jet> {
    p.check(x)?;
    let k = p.k();
    if side_of(x, c.b, side) == Side::Below {
        let (_, big, ls) = p.basis_jets(x);
        let sb = p.kit.scaled(c.b);
        let fa = c.a * exp(ls - sb.log_scale) / sb.values.big_psi;
        // ψ - C₃Ψ is negative and pinned by its log-slope at b
        let g = p.pinned_mode(x, c.b, c.r_b, -1.0, c.ln_g);
        return Ok(Jet::new(fa * big.v + k * g.v, fa * big.d1 + k * g.d1, fa * big.d2 + k * g.d2));
    }
    let u = p.iff.jet(x);
    let e = p.phi_ratio(x, c.ln_phi_b);
    let w = c.bc - k * c.cw;
    Ok(Jet::new(u.v + w * e.v, u.d1 + w * e.d1, u.d2 + w * e.d2))
}

pub fn j_c(p: &Problem, c: &BarrierCoeffsC, x: f64) -> Result<f64> {
    j_c_jet(p, c, x, None).map(|j| j.v)
}

/// `J_c'(b; b) - 1`; equals `β - 1 > 0` at `0+`.
fn bc_residual(p: &Problem, b: f64) -> f64 {
    let l = p.local(b);
    let v = l.s.values;
    let big_p = l.big_p();
    let w_over = p.kit.wronskian(b) / (exp(l.s.log_scale) * v.big_psi);
    ((l.di - l.r * l.i) * big_p - p.k() * l.r * w_over) / (big_p - l.r) - 1.0
}

pub fn find_b_c(p: &Problem) -> Result<BarrierSearch> {
    let roots = scan_roots(p, |b| bc_residual(p, b))?;
    if roots.is_empty() {
        return Err(Error::NoBracketFound { lo: 0.0, hi: p.x_trust() });
    }
    let b = pick_best(&roots, |x, b| j_c(p, &coeffs_c(p, b)?, x))?;
    Ok(BarrierSearch { b, multiple: roots.len() > 1, roots, borderline: false })
}

fn normalized_gap(l: f64, r: f64) -> f64 {
    (l - r).abs() / 1f64.max(l.abs()).max(r.abs())
}

/// Normalized residuals of the two supercontact equations at `b`.
pub fn supercontact_residuals(p: &Problem, c: &BarrierCoeffsC) -> (f64, f64) {
    let b = c.b;
    let k = p.k();
    let l = p.local(b);
    let g = exp(l.s.log_scale);
    let psi_p = g * l.s.values.psi_prime;
    let big_p = g * l.s.values.big_psi_prime;
    let eq1 = normalized_gap((1.0 - k * psi_p) / big_p, c.c1 - k * c.c3);
    let phi_p = l.r * exp(l.ln_phi);
    let eq2 = normalized_gap((1.0 - l.di) / phi_p, c.c2 - k * c.c4);
    (eq1, eq2)
}

/// `E_x[exp(-q τ₀)]` for the refracted process at level `b`.
pub fn first_passage_h(p: &Problem, x: f64, b: f64) -> Result<f64> {
    p.check(x)?;
    p.check(b)?;
    if b == 0.0 {
        return Ok(p.phi.value_d1(x).0);
    }
    let l = p.local(b);
    let v = l.s.values;
    let den = v.psi_prime - l.r * v.psi;
    let ln_h = p.ln_wronskian(b) - l.s.log_scale - log(den);
    if x <= b {
        Ok(p.pinned_mode(x, b, l.r, 1.0, ln_h).v)
    } else {
        Ok(p.phi_ratio(x, l.ln_phi).v * exp(ln_h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegimeKind {
    NoInjection { b_d: f64 },
    Bailout { b_c: f64 },
    Indifferent { b_d: f64, b_c: f64 },
}

impl RegimeKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegimeKind::NoInjection { .. } => "NoInjection",
            RegimeKind::Bailout { .. } => "Bailout",
            RegimeKind::Indifferent { .. } => "Indifferent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub kind: RegimeKind,
    pub b_d: BarrierSearch,
    pub b_c: BarrierSearch,
    pub vd_prime_zero: f64,
    pub vc_zero: f64,
}

impl Regime {
    pub fn tie_band(beta: f64) -> f64 {
        1e-6 * beta
    }
}

pub fn decide_regime(p: &Problem) -> Result<Regime> {
    let beta = p.params.beta;
    let bd = find_b_d(p)?;
    let bc = find_b_c(p)?;
    let vdp = vd_prime_zero(p, bd.b);
    let vc0 = coeffs_c(p, bc.b)?.value_at_zero(beta, p.params.sigma2());
    let eps = Regime::tie_band(beta);
    let diff = vdp - beta;
    if diff.abs() > eps && vc0.abs() > VC_ZERO_TOL && (diff > 0.0) != (vc0 > 0.0) {
        return Err(Error::InconsistentDiscriminants { vd_prime_zero: vdp, beta, vc_zero: vc0 });
    }
    let kind = if diff < -eps {
        RegimeKind::NoInjection { b_d: bd.b }
    } else if diff > eps {
        RegimeKind::Bailout { b_c: bc.b }
    } else {
        RegimeKind::Indifferent { b_d: bd.b, b_c: bc.b }
    };
    Ok(Regime { kind, b_d: bd, b_c: bc, vd_prime_zero: vdp, vc_zero: vc0 })
}

/// `V_d`, `V_c` and `V` for a decided regime.
#[derive(Debug, Clone)]
pub struct ValueFunctions {
    pub problem: Problem,
    pub regime: Regime,
    pub coeffs_d: BarrierCoeffsD,
    pub coeffs_c: BarrierCoeffsC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Vd,
    Vc,
    V,
}

impl ValueFunctions {
    pub fn new(problem: Problem) -> Result<Self> {
        let regime = decide_regime(&problem)?;
        let coeffs_d = coeffs_d(&problem, regime.b_d.b)?;
        let coeffs_c = coeffs_c(&problem, regime.b_c.b)?;
        Ok(Self { problem, regime, coeffs_d, coeffs_c })
    }

    pub fn solve(params: ModelParams, cap: &RateCap, num: &Numerics) -> Result<Self> {
        Self::new(Problem::new(params, cap, num)?)
    }

    pub fn vd_jet(&self, x: f64) -> Result<Jet> {
        j_d_jet(&self.problem, &self.coeffs_d, x, None)
    }

    pub fn vc_jet(&self, x: f64) -> Result<Jet> {
        j_c_jet(&self.problem, &self.coeffs_c, x, None)
    }

    pub fn v_d(&self, x: f64) -> Result<f64> {
        self.vd_jet(x).map(|j| j.v)
    }

    pub fn v_c(&self, x: f64) -> Result<f64> {
        self.vc_jet(x).map(|j| j.v)
    }

    /// `V` per the dichotomy; the larger candidate in the tie case.
    pub fn v_jet(&self, x: f64) -> Result<Jet> {
        match self.regime.kind {
            RegimeKind::NoInjection { .. } => self.vd_jet(x),
            RegimeKind::Bailout { .. } => self.vc_jet(x),
            RegimeKind::Indifferent { .. } => {
                let (d, c) = (self.vd_jet(x)?, self.vc_jet(x)?);
                Ok(if c.v > d.v { c } else { d })
            }
        }
    }

    pub fn value_v(&self, x: f64) -> Result<f64> {
        self.v_jet(x).map(|j| j.v)
    }

    pub fn jet(&self, which: Which, x: f64) -> Result<Jet> {
        match which {
            Which::Vd => self.vd_jet(x),
            Which::Vc => self.vc_jet(x),
            Which::V => self.v_jet(x),
        }
    }

    /// Barrier of the strategy that attains `V`.
    pub fn active_barrier(&self) -> f64 {
        match self.regime.kind {
            RegimeKind::NoInjection { b_d } => b_d,
            RegimeKind::Bailout { b_c } => b_c,
            RegimeKind::Indifferent { b_d, .. } => b_d,
        }
    }

    /// Optimal dividend rate `ℓ*(x) = F(x)·1{x >= b}`.
    pub fn optimal_rate(&self, x: f64) -> f64 {
        if x >= self.active_barrier() {
            self.problem.cap().value(x)
        } else {
            0.0
        }
    }

    /// Evenly spaced grid of `n + 1` points on `[0, x_hi]`, `x_hi` well past both barriers.
    pub fn audit_grid(&self, n: usize) -> Vec<f64> {
        let b = self.regime.b_d.b.max(self.regime.b_c.b);
        let hi = (4.0 * b).max(10.0 * self.problem.length_scale()).min(self.problem.x_trust());
        (0..=n).map(|i| hi * i as f64 / n as f64).collect()
    }
}

/// Sup over `grid` of `|q u - max_{l ∈ {0, F}} [(μ - l)u' + (σ²/2)u'' + l]| / (1 + |u|)`.
pub fn hjb_residual(
    params: &ModelParams,
    cap: &RateCap,
    grid: &[f64],
    mut u: impl FnMut(f64) -> Result<Jet>,
) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for &x in grid {
        let j = u(x)?;
        let f = cap.value(x);
        let base = params.mu * j.d1 + 0.5 * params.sigma2() * j.d2;
        let h = base.max(base - f * j.d1 + f);
        let res = (params.q * j.v - h).abs() / (1.0 + j.v.abs());
        sup = if res.is_nan() { f64::INFINITY } else { sup.max(res) };
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::sqrt;

    fn problem(mu: f64, sigma: f64, q: f64, beta: f64, cap: RateCap) -> Problem {
        let p = ModelParams::new(mu, sigma, q, beta).unwrap();
        Problem::new(p, &cap, &Numerics::default()).unwrap()
    }

    fn theta2(p: &ModelParams, s: f64) -> f64 {
        let m = p.mu - s;
        (-m - sqrt(m * m + 2.0 * p.q * p.sigma2())) / p.sigma2()
    }

    #[test]
    fn coeffs_d_at_zero_and_constant_cap_oracle() {
        let pr = problem(1.0, 1.0, 1.0, 2.0, RateCap::constant(2.0).unwrap());
        let c0 = coeffs_d(&pr, 0.0).unwrap();
        assert!((c0.d2 + 2.0).abs() < 1e-12);

        let t2 = theta2(&pr.params, 2.0);
        for b in [0.3, 1.0, 2.5] {
            let c = coeffs_d(&pr, b).unwrap();
            let phi = exp(t2 * b);
            let dphi = t2 * phi;
            let v = pr.kit.basis(b);
            let den = phi * v.psi_prime - dphi * v.psi;
            assert!((c.d1 - 2.0 * (-dphi) / den).abs() < 1e-10 * c.d1.abs());
            let d2 = (v.psi * 0.0 - v.psi_prime * 2.0) / den;
            assert!((c.d2 - d2).abs() < 1e-10 * d2.abs());
        }
    }

    #[test]
    fn j_d_is_zero_at_zero_and_smooth_at_barrier() {
        let pr = problem(0.5, 1.2, 0.3, 2.0, RateCap::affine(0.4, 0.2).unwrap());
        for b in [0.5, 2.0, 6.0] {
            let c = coeffs_d(&pr, b).unwrap();
            assert_eq!(j_d(&pr, &c, 0.0).unwrap(), 0.0);
            let l = j_d_jet(&pr, &c, b, Some(Side::Below)).unwrap();
            let r = j_d_jet(&pr, &c, b, Some(Side::Above)).unwrap();
            assert!((l.v - r.v).abs() < 1e-10 * (1.0 + l.v.abs()));
            assert!((l.d1 - r.d1).abs() < 1e-8 * (1.0 + l.d1.abs()));
        }
    }

    #[test]
    fn zero_cap_gives_zero_barrier_and_zero_value() {
        let pr = problem(1.0, 1.0, 1.0, 2.0, RateCap::constant(0.0).unwrap());
        let s = find_b_d(&pr).unwrap();
        assert_eq!(s.b, 0.0);
        let c = coeffs_d(&pr, 0.0).unwrap();
        for x in [0.0, 1.0, 5.0] {
            assert!(j_d(&pr, &c, x).unwrap().abs() < 1e-14);
        }
        let reg = decide_regime(&pr).unwrap();
        assert!(matches!(reg.kind, RegimeKind::NoInjection { .. }));
        assert!(reg.vc_zero < 0.0);
    }

    #[test]
    fn small_constant_cap_has_zero_barrier() {
        let pr = problem(1.0, 1.0, 1.0, 2.0, RateCap::constant(0.5).unwrap());
        let t2 = theta2(&pr.params, 0.5);
        let cond = -(0.5 / 1.0) * t2;
        assert!(cond <= 1.0);
        assert!((pr.bd_condition() - cond).abs() < 1e-10);
        assert_eq!(find_b_d(&pr).unwrap().b, 0.0);
        assert!((vd_prime_zero(&pr, 0.0) - cond).abs() < 1e-10);
    }

    #[test]
    fn optimal_b_d_satisfies_smooth_fit_at_one() {
        let pr = problem(1.0, 1.0, 1.0, 2.0, RateCap::constant(4.0).unwrap());
        let s = find_b_d(&pr).unwrap();
        assert!(s.b > 0.0 && !s.multiple);
        let c = coeffs_d(&pr, s.b).unwrap();
        let j = j_d_jet(&pr, &c, s.b, None).unwrap();
        assert!((j.d1 - 1.0).abs() < 1e-7);
        let psi0 = pr.kit.basis(0.0).psi_prime;
        let psib = pr.kit.basis(s.b).psi_prime;
        assert!((vd_prime_zero(&pr, s.b) - psi0 / psib).abs() < 1e-12);
    }

    #[test]
    fn vd_prime_zero_hyperbolic_case() {
        let pr = problem(0.0, sqrt(2.0), 1.0, 2.0, RateCap::constant(1.0).unwrap());
        for b in [0.1, 1.0, 3.0] {
            assert!((vd_prime_zero(&pr, b) - 1.0 / libm::cosh(b)).abs() < 1e-14);
        }
    }

    #[test]
    fn gluing_identities_and_j_c_slope_at_zero() {
        let pr = problem(0.8, 1.1, 0.4, 1.7, RateCap::linear(0.6).unwrap());
        let k = 0.5 * 1.7 * 1.21;
        for b in [0.2, 1.0, 3.0] {
            let c = coeffs_c(&pr, b).unwrap();
            let v = pr.kit.basis(b);
            let (_, di, _) = pr.iff().eval(b).unwrap();
            let (_, dphi, _) = pr.phi().eval(b).unwrap();
            let g1 = c.c1 * v.big_psi_prime - c.c2 * dphi - di;
            assert!(g1.abs() < 1e-10 * (1.0 + di.abs()));
            let g2 = c.c3 * v.big_psi_prime - v.psi_prime - c.c4 * dphi;
            assert!(g2.abs() < 1e-10 * (1.0 + v.psi_prime.abs()));
            let j0 = j_c_jet(&pr, &c, 0.0, None).unwrap();
            assert!((j0.d1 - 1.7).abs() < 1e-8);
            assert!((j0.v - (c.c1 - k * c.c3)).abs() < 1e-12 * (1.0 + j0.v.abs()));
            let l = j_c_jet(&pr, &c, b, Some(Side::Below)).unwrap();
            let r = j_c_jet(&pr, &c, b, Some(Side::Above)).unwrap();
            assert!((l.v - r.v).abs() < 1e-10 * (1.0 + l.v.abs()));
            assert!((l.d1 - r.d1).abs() < 1e-8 * (1.0 + l.d1.abs()));
        }
    }

    #[test]
    fn b_c_satisfies_supercontact() {
        let pr = problem(1.0, 1.0, 1.0, 2.0, RateCap::constant(2.0).unwrap());
        let s = find_b_c(&pr).unwrap();
        assert!(s.b > 0.0 && s.b < pr.x_max());
        let c = coeffs_c(&pr, s.b).unwrap();
        let (e1, e2) = supercontact_residuals(&pr, &c);
        assert!(e1 < 1e-7 && e2 < 1e-7, "{e1} {e2}");
        let l = j_c_jet(&pr, &c, s.b, Some(Side::Below)).unwrap();
        let r = j_c_jet(&pr, &c, s.b, Some(Side::Above)).unwrap();
        assert!((l.d1 - 1.0).abs() < 1e-7);
        assert!((l.d2 - r.d2).abs() < 1e-6 * (1.0 + l.d2.abs()));
    }

    #[test]
    fn first_passage_examples() {
        let pr = problem(0.5, 1.0, 0.5, 2.0, RateCap::constant(1.5).unwrap());
        assert!((first_passage_h(&pr, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
        for x in [0.0, 0.7, 2.0] {
            let h = first_passage_h(&pr, x, 0.0).unwrap();
            assert!((h - pr.phi().eval(x).unwrap().0).abs() < 1e-15);
        }
        let mut prev = 1.0 + 1e-12;
        for i in 0..40 {
            let x = i as f64 * 0.2;
            let h = first_passage_h(&pr, x, 2.0).unwrap();
            assert!(h > 0.0 && h <= prev);
            prev = h;
        }
        // continuity at the barrier
        let a = first_passage_h(&pr, 2.0, 2.0).unwrap();
        let b = first_passage_h(&pr, 2.0 + 1e-9, 2.0).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn hjb_detects_corruption() {
        let vf = ValueFunctions::solve(
            ModelParams::new(1.0, 1.0, 1.0, 2.0).unwrap(),
            &RateCap::constant(2.0).unwrap(),
            &Numerics::default(),
        )
        .unwrap();
        let grid = vf.audit_grid(500);
        let pr = &vf.problem;
        let cap = pr.cap().clone();
        let r = hjb_residual(&pr.params, &cap, &grid, |x| vf.vc_jet(x)).unwrap();
        assert!(r < 1e-6, "{r}");
        let r = hjb_residual(&pr.params, &cap, &grid, |x| vf.vd_jet(x)).unwrap();
        assert!(r < 1e-6, "{r}");
        let bad = hjb_residual(&pr.params, &cap, &grid, |x| {
            vf.vc_jet(x).map(|j| Jet::new(1.01 * j.v, 1.01 * j.d1, 1.01 * j.d2))
        })
        .unwrap();
        assert!(bad > 1e-6);
    }
}
