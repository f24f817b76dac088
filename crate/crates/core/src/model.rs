//! Model parameters and the level-dependent dividend-rate cap `F`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hermite;

/// Drift, volatility, discount rate and injection cost of the surplus model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma: f64,
    pub q: f64,
    pub beta: f64,
}

impl ModelParams {
    /// Validates a raw parameter record.
    pub fn new(mu: f64, sigma: f64, q: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("mu", mu), ("sigma", sigma), ("q", q), ("beta", beta)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        if sigma <= 0.0 {
            return Err(Error::NonPositiveSigma(sigma));
        }
        if q <= 0.0 {
            return Err(Error::NonPositiveQ(q));
        }
        if beta <= 1.0 {
            return Err(Error::BetaNotAboveOne(beta));
        }
        Ok(Self { mu, sigma, q, beta })
    }

    /// Same parameters with the drift lowered by `rate`.
    pub fn with_drift(&self, mu: f64) -> Self {
        Self { mu, ..*self }
    }

    #[inline]
    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Number of points on the default concavity/monotonicity audit grid.
pub const AUDIT_POINTS: usize = 10_000;

/// Shape of the dividend-rate cap.
#[derive(Debug, Clone, PartialEq)]
pub enum CapKind {
    Constant(f64),
    Linear(f64),
    Affine { c0: f64, c1: f64 },
    /// Knots `(x, F(x))` with `x` strictly increasing from 0; interpolated by a
    /// shape-preserving C¹ quadratic spline and extended linearly past the last knot.
    Tabulated(Vec<(f64, f64)>),
}

/// Quadratic piece `y + d (x - x0) + c (x - x0)²` starting at `x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    y: f64,
    d: f64,
    c: f64,
}

/// Schumaker's shape-preserving quadratic spline: C¹, and monotone / concave
/// whenever the data are.
#[derive(Debug, Clone, PartialEq)]
struct Table {
    /// Piece boundaries: the knots plus at most one inserted point per interval.
    xs: Vec<f64>,
    pieces: Vec<Piece>,
    /// Right end and slope used for linear extension.
    x_end: f64,
    y_end: f64,
    d_end: f64,
}

impl Table {
    fn new(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::BadCoefficients("tabulated cap needs at least two knots"));
        }
        if knots[0].0 != 0.0 {
            return Err(Error::BadCoefficients("first tabulated knot must sit at x = 0"));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite("cap knots"));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::BadCoefficients("knot abscissae must be strictly increasing"));
        }
        let t: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let z: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let s = knot_slopes(&t, &z);
        let mut xs = Vec::new();
        let mut pieces = Vec::new();
        for i in 0..t.len() - 1 {
            let h = t[i + 1] - t[i];
            let del = (z[i + 1] - z[i]) / h;
            let (s0, s1) = (s[i], s[i + 1]);
            xs.push(t[i]);
            if ((s0 + s1) - 2.0 * del).abs() <= 1e-14 * (s0.abs() + s1.abs() + del.abs()) {
                pieces.push(Piece { y: z[i], d: s0, c: (s1 - s0) / (2.0 * h) });
                continue;
            }
            // Schumaker's knot placement keeps the middle slope between s0 and s1
            let xi = if (s0 - del) * (s1 - del) >= 0.0 {
                t[i] + 0.5 * h
            } else if (s1 - del).abs() < (s0 - del).abs() {
                t[i] + h * (s1 - del) / (s1 - s0)
            } else {
                t[i + 1] + h * (s0 - del) / (s1 - s0)
            };
            let (a, b) = (xi - t[i], t[i + 1] - xi);
            let sbar = (2.0 * (z[i + 1] - z[i]) - a * s0 - b * s1) / h;
            pieces.push(Piece { y: z[i], d: s0, c: (sbar - s0) / (2.0 * a) });
            xs.push(xi);
            pieces.push(Piece { y: z[i] + 0.5 * (s0 + sbar) * a, d: sbar, c: (s1 - sbar) / (2.0 * b) });
        }
        let n = t.len();
        xs.push(t[n - 1]);
        Ok(Self { xs, pieces, x_end: t[n - 1], y_end: z[n - 1], d_end: s[n - 1] })
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        if x >= self.x_end {
            return (self.y_end + self.d_end * (x - self.x_end), self.d_end);
        }
        let i = hermite::locate(&self.xs, x).min(self.pieces.len() - 1);
        let p = self.pieces[i];
        let u = x - self.xs[i];
        (p.y + u * (p.d + p.c * u), p.d + 2.0 * p.c * u)
    }
}

/// Knot slopes: arc-length weighted secant averages, zero at local extrema,
/// and end slopes that make the outer intervals single quadratics.
fn knot_slopes(t: &[f64], z: &[f64]) -> Vec<f64> {
    let n = t.len();
    let del: Vec<f64> = (0..n - 1).map(|i| (z[i + 1] - z[i]) / (t[i + 1] - t[i])).collect();
    if n == 2 {
        return alloc::vec![del[0], del[0]];
    }
    let len: Vec<f64> = (0..n - 1).map(|i| libm::hypot(t[i + 1] - t[i], z[i + 1] - z[i])).collect();
    let mut s = alloc::vec![0.0; n];
    for i in 1..n - 1 {
        if del[i - 1] * del[i] > 0.0 {
            s[i] = (len[i - 1] * del[i - 1] + len[i] * del[i]) / (len[i - 1] + len[i]);
        }
    }
    let end = |d: f64, inner: f64| {
        let v = 2.0 * d - inner;
        if d >= 0.0 {
            v.max(0.0)
        } else {
            v.min(0.0)
        }
    };
    s[0] = end(del[0], s[1]);
    s[n - 1] = end(del[n - 2], s[n - 2]);
    s
}

/// The dividend-rate bound `F`: nondecreasing, concave, C¹, with `F(0) >= 0`.
///
/// Immutable after construction; every constructor audits the shape constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCap {
    kind: CapKind,
    table: Option<Table>,
}

impl RateCap {
    /// Builds and audits a cap on the default grid.
    pub fn new(kind: CapKind) -> Result<Self> {
        let cap = Self::unchecked(kind)?;
        cap.audit(cap.audit_domain(), AUDIT_POINTS)?;
        Ok(cap)
    }

    fn unchecked(kind: CapKind) -> Result<Self> {
        let check = |name, v: f64| if v.is_finite() { Ok(()) } else { Err(Error::NonFinite(name)) };
        let table = match &kind {
            CapKind::Constant(s) => {
                check("cap constant", *s)?;
                None
            }
            CapKind::Linear(k) => {
                check("cap slope", *k)?;
                None
            }
            CapKind::Affine { c0, c1 } => {
                check("cap intercept", *c0)?;
                check("cap slope", *c1)?;
                None
            }
            CapKind::Tabulated(knots) => Some(Table::new(knots)?),
        };
        Ok(Self { kind, table })
    }

    pub fn constant(s: f64) -> Result<Self> {
        Self::new(CapKind::Constant(s))
    }

    pub fn linear(k: f64) -> Result<Self> {
        Self::new(CapKind::Linear(k))
    }

    pub fn affine(c0: f64, c1: f64) -> Result<Self> {
        Self::new(CapKind::Affine { c0, c1 })
    }

    pub fn tabulated(knots: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(CapKind::Tabulated(knots))
    }

    pub fn kind(&self) -> &CapKind {
        &self.kind
    }

    /// Same shape with the coefficient at `index` replaced (knot ordinates for
    /// tabulated caps). Used by parameter sweeps.
    pub fn with_coefficient(&self, index: usize, value: f64) -> Result<Self> {
        let kind = match (&self.kind, index) {
            (CapKind::Constant(_), 0) => CapKind::Constant(value),
            (CapKind::Linear(_), 0) => CapKind::Linear(value),
            (CapKind::Affine { c1, .. }, 0) => CapKind::Affine { c0: value, c1: *c1 },
            (CapKind::Affine { c0, .. }, 1) => CapKind::Affine { c0: *c0, c1: value },
            (CapKind::Tabulated(k), i) if i < k.len() => {
                let mut k = k.clone();
                k[i].1 = value;
                CapKind::Tabulated(k)
            }
            _ => return Err(Error::BadCoefficients("coefficient index out of range")),
        };
        Self::new(kind)
    }

    /// `(F(x), F'(x))`, rejecting negative arguments.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::NegativeArgument(x));
        }
        Ok(self.eval_unchecked(x))
    }

    /// `(F(x), F'(x))` for `x >= 0`; no argument check.
    #[inline]
    pub fn eval_unchecked(&self, x: f64) -> (f64, f64) {
        match &self.kind {
            CapKind::Constant(s) => (*s, 0.0),
            CapKind::Linear(k) => (k * x, *k),
            CapKind::Affine { c0, c1 } => (c0 + c1 * x, *c1),
            CapKind::Tabulated(_) => self.table.as_ref().map_or((0.0, 0.0), |t| t.eval(x)),
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.eval_unchecked(x).0
    }

    /// `lim F'(x)` as `x -> infinity`.
    pub fn slope_at_infinity(&self) -> f64 {
        match &self.kind {
            CapKind::Constant(_) => 0.0,
            CapKind::Linear(k) => *k,
            CapKind::Affine { c1, .. } => *c1,
            CapKind::Tabulated(_) => self.table.as_ref().map_or(0.0, |t| t.d_end),
        }
    }

    /// Upper end of the interval on which the shape audit is run by default.
    pub fn audit_domain(&self) -> f64 {
        match &self.table {
            Some(t) => (2.0 * t.x_end).max(10.0),
            None => 10.0,
        }
    }

    /// Points where `F''` may jump: the knots and the spline's inserted points.
    pub fn breakpoints(&self) -> &[f64] {
        self.table.as_ref().map_or(&[], |t| &t.xs)
    }

    /// Certifies `F(0) >= 0`, `F' >= 0` and `F'` nonincreasing on `n` points of `[0, x_hi]`.
    pub fn audit(&self, x_hi: f64, n: usize) -> Result<()> {
        let (f0, d0) = self.eval_unchecked(0.0);
        if f0 < 0.0 {
            return Err(Error::NegativeAtZero(f0));
        }
        let scale = 1.0 + d0.abs();
        let eps = 1e-12 * scale;
        let mut prev_d = d0;
        let mut prev_f = f0;
        let n = n.max(2);
        for i in 0..n {
            let x = x_hi * i as f64 / (n - 1) as f64;
            let (f, d) = self.eval_unchecked(x);
            if d < -eps || f < prev_f - eps * (1.0 + f.abs()) {
                return Err(Error::NotNondecreasing { at: x });
            }
            if d > prev_d + eps {
                return Err(Error::NotConcave { at: x });
            }
            prev_d = d;
            prev_f = f;
        }
        Ok(())
    }
}
