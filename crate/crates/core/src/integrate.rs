//! Adaptive Dormand–Prince 5(4) integration of small fixed-size systems.

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus the embedded fourth-order ones
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(x, y)` from `x0` to `x1` (either direction).
///
/// Returns the abscissa where integration broke down on failure.
pub fn dopri5<const N: usize, F>(
    mut f: F,
    x0: f64,
    y0: [f64; N],
    x1: f64,
    rtol: f64,
    atol: f64,
) -> Result<[f64; N], f64>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let span = x1 - x0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = span;
    let mut k1 = f(x, &y);
    let mut steps = 0usize;
    while (x1 - x) * dir > 0.0 {
        steps += 1;
        if steps > 1_000_000 || h.abs() < 1e-14 * (1.0 + x.abs()) {
            return Err(x);
        }
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        let mut k = [[0.0; N]; 7];
        k[0] = k1;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            k[s] = f(x + C[s] * h, &ys);
        }
        let mut y_new = y;
        for i in 0..N {
            for s in 0..6 {
                y_new[i] += h * A[6][s] * k[s][i];
            }
        }
        let mut err: f64 = 0.0;
        for i in 0..N {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * k[s][i];
            }
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((h * e / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            x = if (x + h - x1) * dir >= 0.0 { x1 } else { x + h };
            y = y_new;
            k1 = f(x, &y);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(x);
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_backward_and_forward() {
        let y = dopri5(|_, y: &[f64; 1]| [-2.0 * y[0]], 0.0, [1.0], 3.0, 1e-12, 1e-14).unwrap();
        assert!((y[0] - libm::exp(-6.0)).abs() < 1e-13);
        let y = dopri5(|_, y: &[f64; 1]| [-2.0 * y[0]], 3.0, [1.0], 0.0, 1e-12, 1e-14).unwrap();
        assert!((y[0] / libm::exp(6.0) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator() {
        let f = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let y = dopri5(f, 0.0, [0.0, 1.0], 10.0, 1e-11, 1e-13).unwrap();
        assert!((y[0] - libm::sin(10.0)).abs() < 1e-9);
        assert!((y[1] - libm::cos(10.0)).abs() < 1e-9);
    }

    #[test]
    fn blow_up_is_reported() {
        let r = dopri5(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], 2.0, 1e-8, 1e-10);
        assert!(r.is_err());
    }
}
