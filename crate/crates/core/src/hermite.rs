//! Piecewise Hermite interpolation helpers.

/// Value and first derivative of the cubic Hermite interpolant on `[x0, x0 + h]`.
#[inline]
pub fn cubic(t: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    let dv = (6.0 * t2 - 6.0 * t) / h * (y0 - y1)
        + (3.0 * t2 - 4.0 * t + 1.0) * d0
        + (3.0 * t2 - 2.0 * t) * d1;
    (v, dv)
}

/// Node data for quintic Hermite interpolation: value, first and second derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }
}

/// Quintic Hermite interpolant on `[x0, x0 + h]` at `t = (x - x0) / h`.
///
/// Returns value, first and second derivative with respect to `x`.
#[inline]
pub fn quintic(t: f64, h: f64, a: &Jet, b: &Jet) -> Jet {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;

    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h5 = 1.0 - h0;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h3 = 0.5 * (t3 - 2.0 * t4 + t5);

    let dh0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let dh1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let dh2 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4);
    let dh4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let dh3 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4);

    let ddh0 = -60.0 * t + 180.0 * t2 - 120.0 * t3;
    let ddh1 = -36.0 * t + 96.0 * t2 - 60.0 * t3;
    let ddh2 = 0.5 * (2.0 - 18.0 * t + 36.0 * t2 - 20.0 * t3);
    let ddh4 = -24.0 * t + 84.0 * t2 - 60.0 * t3;
    let ddh3 = 0.5 * (6.0 * t - 24.0 * t2 + 20.0 * t3);

    let hh = h * h;
    let v = h0 * a.v + h * h1 * a.d1 + hh * h2 * a.d2 + h5 * b.v + h * h4 * b.d1 + hh * h3 * b.d2;
    let d1 = dh0 * (a.v - b.v) / h + dh1 * a.d1 + h * dh2 * a.d2 + dh4 * b.d1 + h * dh3 * b.d2;
    let d2 = ddh0 * (a.v - b.v) / hh + (ddh1 * a.d1 + ddh4 * b.d1) / h + ddh2 * a.d2 + ddh3 * b.d2;
    Jet { v, d1, d2 }
}

/// Exact integral of the quintic Hermite interpolant over `[x0, x0 + h]`.
#[inline]
pub fn quintic_integral(h: f64, a: &Jet, b: &Jet) -> f64 {
    h * 0.5 * (a.v + b.v) + h * h * (a.d1 - b.d1) / 10.0 + h * h * h * (a.d2 + b.d2) / 120.0
}

/// Index `i` such that `xs[i] <= x <= xs[i + 1]`, clamped to the valid interval range.
#[inline]
pub fn locate(xs: &[f64], x: f64) -> usize {
    debug_assert!(xs.len() >= 2);
    let last = xs.len() - 2;
    match xs.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => i.min(last),
        Err(i) => i.saturating_sub(1).min(last),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quintic_reproduces_quintic_polynomials() {
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x - 0.25 * x.powi(5);
        let dp = |x: f64| -2.0 + 1.5 * x * x - 1.25 * x.powi(4);
        let ddp = |x: f64| 3.0 * x - 5.0 * x.powi(3);
        let (x0, x1) = (0.3, 1.1);
        let a = Jet::new(p(x0), dp(x0), ddp(x0));
        let b = Jet::new(p(x1), dp(x1), ddp(x1));
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let x = x0 + t * (x1 - x0);
            let j = quintic(t, x1 - x0, &a, &b);
            assert!((j.v - p(x)).abs() < 1e-13);
            assert!((j.d1 - dp(x)).abs() < 1e-12);
            assert!((j.d2 - ddp(x)).abs() < 1e-11);
        }
        // closed-form antiderivative
        let int = |x: f64| x - x * x + 0.125 * x.powi(4) - x.powi(6) / 24.0;
        assert!((quintic_integral(x1 - x0, &a, &b) - (int(x1) - int(x0))).abs() < 1e-14);
    }

    #[test]
    fn cubic_matches_endpoints() {
        let (v, d) = cubic(0.0, 0.5, 1.0, 2.0, 3.0, 4.0);
        assert_eq!((v, d), (1.0, 2.0));
        let (v, d) = cubic(1.0, 0.5, 1.0, 2.0, 3.0, 4.0);
        assert!((v - 3.0).abs() < 1e-15 && (d - 4.0).abs() < 1e-14);
    }

    #[test]
    fn locate_clamps() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(locate(&xs, -1.0), 0);
        assert_eq!(locate(&xs, 0.0), 0);
        assert_eq!(locate(&xs, 1.5), 1);
        assert_eq!(locate(&xs, 3.0), 2);
        assert_eq!(locate(&xs, 9.0), 2);
    }
}
