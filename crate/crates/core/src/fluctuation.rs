//! Closed-form fluctuation functions of a Brownian motion with drift killed at rate `q`.

use libm::{exp, expm1, sqrt};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Characteristic data `Δ, α₁, α₂` for one drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationKit {
    pub params: ModelParams,
    pub delta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// `ψ, ψ', Ψ, Ψ', ψ̄, Ψ̄` at a common point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisValues {
    pub psi: f64,
    pub psi_prime: f64,
    pub big_psi: f64,
    pub big_psi_prime: f64,
    pub psi_bar: f64,
    pub big_psi_bar: f64,
}

/// Basis values multiplied by `exp(-log_scale)`; `log_scale = α₁ x` beyond `α₁ x = 1`.
///
/// `big_psi_bar` holds `Ψ̄ + μ/q` here, the combination that stays positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledBasis {
    pub values: BasisValues,
    pub log_scale: f64,
}

pub fn build_kit(params: ModelParams) -> FluctuationKit {
    let ModelParams { mu, q, .. } = params;
    let s2 = params.sigma2();
    let delta = sqrt(mu * mu + 2.0 * q * s2);
    // take the root without cancellation, recover the other from α₁α₂ = -2q/σ²
    let (alpha1, alpha2) = if mu >= 0.0 {
        let a2 = (-mu - delta) / s2;
        (-2.0 * q / (s2 * a2), a2)
    } else {
        let a1 = (-mu + delta) / s2;
        (a1, -2.0 * q / (s2 * a1))
    };
    FluctuationKit { params, delta, alpha1, alpha2 }
}

/// Kit for the drift `μ - rate`.
pub fn shifted_kit(params: ModelParams, rate: f64) -> FluctuationKit {
    build_kit(params.with_drift(params.mu - rate))
}

impl FluctuationKit {
    pub fn new(params: ModelParams) -> Self {
        build_kit(params)
    }

    #[inline]
    fn s2(&self) -> f64 {
        self.params.sigma2()
    }

    /// `(σ²/2)v'' + μv' - qv` for a supplied jet.
    #[inline]
    pub fn generator(&self, v: f64, d1: f64, d2: f64) -> f64 {
        0.5 * self.s2() * d2 + self.params.mu * d1 - self.params.q * v
    }

    pub fn eval_basis(&self, x: f64) -> Result<BasisValues> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::NegativeArgument(x));
        }
        Ok(self.basis(x))
    }

    /// Unchecked basis evaluation; accurate near zero, overflows for large `α₁ x`.
    pub fn basis(&self, x: f64) -> BasisValues {
        let (a1, a2, d, q) = (self.alpha1, self.alpha2, self.delta, self.params.q);
        let e1 = exp(a1 * x);
        let e2 = exp(a2 * x);
        let m1 = expm1(a1 * x);
        let m2 = expm1(a2 * x);
        let psi = e2 * expm1((a1 - a2) * x) / d;
        let psi_prime = (a1 * e1 - a2 * e2) / d;
        let psi_bar = m1 / (a1 * d) - m2 / (a2 * d);
        BasisValues {
            psi,
            psi_prime,
            big_psi: 1.0 + q * psi_bar,
            big_psi_prime: q * psi,
            psi_bar,
            big_psi_bar: q * (m1 / (a1 * a1 * d) - m2 / (a2 * a2 * d)),
        }
    }

    /// `ψ''(x)`.
    pub fn psi_second(&self, x: f64) -> f64 {
        let (a1, a2) = (self.alpha1, self.alpha2);
        (a1 * a1 * exp(a1 * x) - a2 * a2 * exp(a2 * x)) / self.delta
    }

    /// Overflow-free basis; see [`ScaledBasis`].
    pub fn scaled(&self, x: f64) -> ScaledBasis {
        let (a1, a2, d, q) = (self.alpha1, self.alpha2, self.delta, self.params.q);
        let mu_q = self.params.mu / q;
        if a1 * x <= 1.0 {
            let mut values = self.basis(x);
            values.big_psi_bar += mu_q;
            return ScaledBasis { values, log_scale: 0.0 };
        }
        let r = exp((a2 - a1) * x);
        let e = exp(-a1 * x);
        let psi = -expm1((a2 - a1) * x) / d;
        let psi_bar = (1.0 - e) / (a1 * d) - (r - e) / (a2 * d);
        let values = BasisValues {
            psi,
            psi_prime: (a1 - a2 * r) / d,
            big_psi: e + q * psi_bar,
            big_psi_prime: q * psi,
            psi_bar,
            big_psi_bar: q / (a1 * a1 * d) - q * r / (a2 * a2 * d),
        };
        ScaledBasis { values, log_scale: a1 * x }
    }

    /// `ln ψ(x)` for `x > 0`.
    pub fn ln_psi(&self, x: f64) -> f64 {
        let s = self.scaled(x);
        libm::log(s.values.psi) + s.log_scale
    }

    /// `ln Ψ(x)`.
    pub fn ln_big_psi(&self, x: f64) -> f64 {
        let s = self.scaled(x);
        libm::log(s.values.big_psi) + s.log_scale
    }

    /// `ψ(x)/ψ(b)`.
    pub fn psi_ratio(&self, x: f64, b: f64) -> f64 {
        let (sx, sb) = (self.scaled(x), self.scaled(b));
        exp(sx.log_scale - sb.log_scale) * sx.values.psi / sb.values.psi
    }

    /// `Ψ(x)/Ψ(b)`.
    pub fn big_psi_ratio(&self, x: f64, b: f64) -> f64 {
        let (sx, sb) = (self.scaled(x), self.scaled(b));
        exp(sx.log_scale - sb.log_scale) * sx.values.big_psi / sb.values.big_psi
    }

    /// `ψ'(x)/ψ(x)`.
    pub fn psi_log_slope(&self, x: f64) -> f64 {
        let v = self.scaled(x).values;
        v.psi_prime / v.psi
    }

    /// `Ψ'(x)/Ψ(x)`.
    pub fn big_psi_log_slope(&self, x: f64) -> f64 {
        let v = self.scaled(x).values;
        v.big_psi_prime / v.big_psi
    }

    /// Wronskian `Ψψ' - Ψ'ψ = (2/σ²) exp(-2μx/σ²)`.
    pub fn wronskian(&self, x: f64) -> f64 {
        let s2 = self.s2();
        2.0 / s2 * exp(-2.0 * self.params.mu * x / s2)
    }

    /// `u₀,b(x)` and its derivative, for `0 <= x <= b`.
    pub fn u_zero_b(&self, x: f64, b: f64) -> Result<(f64, f64)> {
        if !(b > 0.0) || !(0.0..=b).contains(&x) {
            return Err(Error::ArgumentOutOfRange { x, lo: 0.0, hi: b });
        }
        let (v, d, _) = self.u_zero_b_jet(x, b);
        Ok((v, d))
    }

    /// `(u₀,b, u₀,b', u₀,b'')` without argument checks.
    pub fn u_zero_b_jet(&self, x: f64, b: f64) -> (f64, f64, f64) {
        let q = self.params.q;
        let sb = self.scaled(b).values;
        let rb = sb.big_psi_bar / sb.big_psi;
        let sx = self.scaled(x);
        let g = exp(sx.log_scale);
        let v = sx.values;
        (
            g * (v.big_psi * rb - v.big_psi_bar),
            g * (v.big_psi_prime * rb - v.big_psi),
            g * q * (v.psi_prime * rb - v.psi),
        )
    }
}
