//! Root finding for scalar monotone functions.
//!
//! Everything in this crate that inverts a monotone map (the inverse of `f'`,
//! the per-context normalizer) goes through [`newton_bisect`]: a Newton
//! iteration that is kept inside a sign-changing bracket and falls back to
//! bisection whenever the Newton step would leave it.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Absolute tolerance on |g(x)| required at return.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            ftol: 1e-12,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Finds the root of `g` inside `[lo, hi]`.
///
/// `g` returns `(value, derivative)`. The endpoints must bracket a sign change.
/// Iteration continues past `ftol` until the step falls to a few ulps, so the
/// returned root is polished to machine precision whenever the function is
/// well conditioned.
pub fn newton_bisect<G>(mut g: G, lo: f64, hi: f64, start: Option<f64>, opts: RootOptions) -> Result<Root>
where
    G: FnMut(f64) -> (f64, f64),
{
    let (a, b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let ga = g(a).0;
    let gb = g(b).0;
    if ga == 0.0 {
        return Ok(Root { x: a, residual: 0.0, iterations: 0 });
    }
    if gb == 0.0 {
        return Ok(Root { x: b, residual: 0.0, iterations: 0 });
    }
    if ga.is_nan() || gb.is_nan() || ga.signum() == gb.signum() {
        return Err(Error::Domain(format!(
            "root not bracketed on [{a}, {b}]: g(a)={ga:e}, g(b)={gb:e}"
        )));
    }
    iterate(g, a, b, ga.signum(), start, opts)
}

/// [`newton_bisect`] for an increasing `g` whose bracket is known to hold
/// (`g(lo) ≤ 0 ≤ g(hi)`), skipping the two endpoint evaluations.
pub fn newton_bisect_increasing<G>(g: G, lo: f64, hi: f64, start: Option<f64>, opts: RootOptions) -> Result<Root>
where
    G: FnMut(f64) -> (f64, f64),
{
    iterate(g, lo, hi, -1.0, start, opts)
}

fn iterate<G>(mut g: G, mut a: f64, mut b: f64, sign_a: f64, start: Option<f64>, opts: RootOptions) -> Result<Root>
where
    G: FnMut(f64) -> (f64, f64),
{
    let mut x = match start {
        Some(s) if s > a && s < b => s,
        _ => 0.5 * (a + b),
    };
    let mut best = (x, f64::INFINITY);
    // step sizes of the last two iterations; Newton must keep halving them
    let mut step = b - a;
    let mut step_old = step;
    for it in 1..=opts.max_iter {
        let (gx, dx) = g(x);
        if gx.abs() >= best.1 && best.1 <= opts.ftol {
            // within tolerance and no longer improving: rounding noise
            return finish(best, it, opts);
        }
        if gx.abs() < best.1 {
            best = (x, gx.abs());
        }
        if gx == 0.0 {
            return Ok(Root { x, residual: 0.0, iterations: it });
        }
        if gx.signum() == sign_a {
            a = x;
        } else {
            b = x;
        }
        let newton = x - gx / dx;
        let fast = (2.0 * gx).abs() <= (step_old * dx).abs();
        step_old = step;
        let next = if newton.is_finite() && newton > a && newton < b && fast {
            newton
        } else {
            0.5 * (a + b)
        };
        step = next - x;
        let scale = x.abs().max(next.abs()).max(1e-300);
        let converged = (next - x).abs() <= 4.0 * f64::EPSILON * scale
            || (b - a) <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(1e-300);
        if converged {
            let (gn, _) = g(next);
            if gn.abs() < best.1 {
                best = (next, gn.abs());
            }
            return finish(best, it, opts);
        }
        x = next;
    }
    finish(best, opts.max_iter, opts)
}

fn finish(best: (f64, f64), iterations: usize, opts: RootOptions) -> Result<Root> {
    if best.1 <= opts.ftol {
        Ok(Root {
            x: best.0,
            residual: best.1,
            iterations,
        })
    } else {
        Err(Error::Solver {
            context: format!("monotone root search stalled at x={}", best.0),
            iterations,
            residual: best.1,
        })
    }
}

/// Grows `[center - w, center + w]` geometrically until an increasing `g`
/// changes sign across it.
pub fn expand_bracket_increasing<G>(mut g: G, center: f64, max_doublings: usize) -> Result<(f64, f64)>
where
    G: FnMut(f64) -> f64,
{
    let mut w = 1.0;
    let mut lo = center - w;
    let mut hi = center + w;
    for _ in 0..max_doublings {
        let glo = g(lo);
        let ghi = g(hi);
        if glo <= 0.0 && ghi >= 0.0 {
            return Ok((lo, hi));
        }
        w *= 2.0;
        if glo > 0.0 {
            lo = center - w;
        }
        if ghi < 0.0 {
            hi = center + w;
        }
    }
    Err(Error::Domain(format!(
        "could not bracket a root around {center} within {max_doublings} doublings"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root_to_machine_precision() {
        let r = newton_bisect(|x| (x * x * x - 2.0, 3.0 * x * x), 0.0, 2.0, None, RootOptions::default()).unwrap();
        assert!((r.x - 2f64.cbrt()).abs() < 1e-15);
    }

    #[test]
    fn decreasing_function() {
        let r = newton_bisect(|x| (1.0 - x.exp(), -x.exp()), -3.0, 5.0, Some(4.0), RootOptions::default()).unwrap();
        assert!(r.x.abs() < 1e-15);
    }

    #[test]
    fn unbracketed_is_domain_error() {
        let e = newton_bisect(|x| (x * x + 1.0, 2.0 * x), -1.0, 1.0, None, RootOptions::default()).unwrap_err();
        assert!(matches!(e, Error::Domain(_)));
    }

    #[test]
    fn zero_derivative_falls_back_to_bisection() {
        // flat Newton direction at the start point
        let r = newton_bisect(|x| (x.powi(3), 3.0 * x * x), -1.0, 2.0, Some(0.5), RootOptions::default()).unwrap();
        assert!(r.x.abs() < 1e-4);
    }

    #[test]
    fn bracket_expansion() {
        let (lo, hi) = expand_bracket_increasing(|x| x - 100.0, 0.0, 64).unwrap();
        assert!(lo <= 100.0 && hi >= 100.0);
    }
}
