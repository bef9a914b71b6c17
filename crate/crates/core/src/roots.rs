//! Bracketing scalar root finding (Brent's method).

/// Outcome of [`brent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out before the tolerance was met.
    pub converged: bool,
}

/// Finds a zero of `f` in `[a, b]`, given `f(a)` and `f(b)` of opposite
/// sign (or one of them zero).
///
/// Stops when the bracket is narrower than `2 eps |x| + xtol / 2`, or when
/// `|f(x)| <= ftol`. Returns `None` if the endpoints do not bracket a root.
pub fn brent(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, xtol: f64, ftol: f64, max_iter: usize) -> Option<Root> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(Root {
            x: a,
            fx: fa,
            iterations: 0,
            converged: true,
        });
    }
    if fb == 0.0 {
        return Some(Root {
            x: b,
            fx: fb,
            iterations: 0,
            converged: true,
        });
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return None;
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for iter in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }

        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 || fb.abs() <= ftol {
            return Some(Root {
                x: b,
                fx: fb,
                iterations: iter,
                converged: true,
            });
        }

        if e.abs() >= tol && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, or secant when a == c
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }

        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Some(Root {
        x: b,
        fx: fb,
        iterations: max_iter,
        converged: false,
    })
}
