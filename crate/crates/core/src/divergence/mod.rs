//! Registry of f-divergences whose derivative `f'` is invertible with `0`
//! outside its domain, so that the regularized optimal policy has the
//! closed form `π(a) = π₀(a) h(η (r(a) − λ))` with `h = (f')⁻¹`.

mod constants;

pub use constants::{constant_c, constant_m, HullSampling};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{expand_bracket_increasing, newton_bisect, newton_bisect_increasing, RootOptions};

/// Open interval `(lo, hi)`; infinite endpoints allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REALS: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, y: f64) -> bool {
        y > self.lo && y < self.hi
    }
}

/// A registered divergence. Each variant carries exact `f`, `f'`, `f''`
/// together with the inverse `h = (f')⁻¹` and its derivative `h' = 1/f''∘h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FDivergence {
    /// `f(x) = x log x`
    ReverseKl,
    /// `f(x) = −log x`
    ForwardKl,
    /// Jensen–Shannon, `f(x) = x log x − (x+1) log((x+1)/2)`
    Js,
    /// `f(x) = x log x + (x−1)²`
    Chi2MixedKl,
    /// `f(x) = x log x − log x`
    XlogxMinusLogx,
}

/// Divergences that are well defined but fail the invertibility condition.
const EXCLUDED: [&str; 2] = ["total_variation", "chi_squared"];

impl FDivergence {
    pub const ALL: [FDivergence; 5] = [
        FDivergence::ReverseKl,
        FDivergence::ForwardKl,
        FDivergence::Js,
        FDivergence::Chi2MixedKl,
        FDivergence::XlogxMinusLogx,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FDivergence::ReverseKl => "reverse_kl",
            FDivergence::ForwardKl => "forward_kl",
            FDivergence::Js => "js",
            FDivergence::Chi2MixedKl => "chi2_mixed_kl",
            FDivergence::XlogxMinusLogx => "xlogx_minus_logx",
        }
    }

    /// Whether `h` is evaluated in closed form rather than by numeric inversion.
    pub fn has_closed_form_h(self) -> bool {
        !matches!(self, FDivergence::Chi2MixedKl | FDivergence::XlogxMinusLogx)
    }

    /// Arguments `y` for which `h(y)` is a positive real.
    pub fn h_domain(self) -> Interval {
        match self {
            FDivergence::ForwardKl => Interval { lo: f64::NEG_INFINITY, hi: 0.0 },
            FDivergence::Js => Interval {
                lo: f64::NEG_INFINITY,
                hi: std::f64::consts::LN_2,
            },
            _ => Interval::REALS,
        }
    }

    /// `f(x)` for `x ≥ 0`, using the continuous extension at `x = 0`.
    pub fn f(self, x: f64) -> f64 {
        if x < 0.0 || x.is_nan() {
            return f64::NAN;
        }
        if x == 0.0 {
            return match self {
                FDivergence::ReverseKl => 0.0,
                FDivergence::ForwardKl | FDivergence::XlogxMinusLogx => f64::INFINITY,
                FDivergence::Js => std::f64::consts::LN_2,
                FDivergence::Chi2MixedKl => 1.0,
            };
        }
        let xlogx = x * x.ln();
        match self {
            FDivergence::ReverseKl => xlogx,
            FDivergence::ForwardKl => -x.ln(),
            FDivergence::Js => xlogx - (x + 1.0) * ((x + 1.0) / 2.0).ln(),
            FDivergence::Chi2MixedKl => xlogx + (x - 1.0) * (x - 1.0),
            FDivergence::XlogxMinusLogx => xlogx - x.ln(),
        }
    }

    pub fn f_prime(self, x: f64) -> f64 {
        match self {
            FDivergence::ReverseKl => x.ln() + 1.0,
            FDivergence::ForwardKl => -1.0 / x,
            FDivergence::Js => (2.0 * x / (1.0 + x)).ln(),
            FDivergence::Chi2MixedKl => x.ln() + 2.0 * x - 1.0,
            FDivergence::XlogxMinusLogx => x.ln() + 1.0 - 1.0 / x,
        }
    }

    pub fn f_second(self, x: f64) -> f64 {
        match self {
            FDivergence::ReverseKl => 1.0 / x,
            FDivergence::ForwardKl => 1.0 / (x * x),
            FDivergence::Js => 1.0 / (x * (1.0 + x)),
            FDivergence::Chi2MixedKl => 1.0 / x + 2.0,
            FDivergence::XlogxMinusLogx => 1.0 / x + 1.0 / (x * x),
        }
    }

    fn check_domain(self, y: f64) -> Result<()> {
        if y.is_finite() && self.h_domain().contains(y) {
            Ok(())
        } else {
            let d = self.h_domain();
            Err(Error::Domain(format!(
                "h argument {y} outside ({}, {}) for {}",
                d.lo,
                d.hi,
                self.name()
            )))
        }
    }

    /// `h(y) = (f')⁻¹(y)`.
    pub fn h(self, y: f64) -> Result<f64> {
        self.check_domain(y)?;
        Ok(match self {
            FDivergence::ReverseKl => (y - 1.0).exp(),
            FDivergence::ForwardKl => -1.0 / y,
            FDivergence::Js => 1.0 / (2.0 * (-y).exp() - 1.0),
            _ => return self.h_numeric(y),
        })
    }

    /// `h'(y) = 1 / f''(h(y))`.
    pub fn h_prime(self, y: f64) -> Result<f64> {
        match self {
            FDivergence::ReverseKl => self.h(y),
            FDivergence::ForwardKl => {
                self.check_domain(y)?;
                Ok(1.0 / (y * y))
            }
            FDivergence::Js => {
                let x = self.h(y)?;
                Ok(x * (1.0 + x))
            }
            _ => {
                let x = self.h(y)?;
                Ok(1.0 / self.f_second(x))
            }
        }
    }

    /// `(h(y), h'(y))` with a single inversion.
    pub fn h_and_prime(self, y: f64) -> Result<(f64, f64)> {
        let x = self.h(y)?;
        let d = match self {
            FDivergence::ReverseKl => x,
            FDivergence::ForwardKl => 1.0 / (y * y),
            FDivergence::Js => x * (1.0 + x),
            _ => 1.0 / self.f_second(x),
        };
        Ok((x, d))
    }

    /// A bracket `[lo, hi]` on `u = ln h(y)` known in closed form.
    fn log_bracket(self, y: f64) -> Option<(f64, f64)> {
        match self {
            // u + 2e^u − 1 = y: e^u > 0 gives u < y + 1, and u ≥ min(y − 1, 0);
            // for y > 1 the root is positive, so 2e^u < y + 1
            FDivergence::Chi2MixedKl => Some(if y <= 1.0 {
                (y - 1.0, y + 1.0)
            } else {
                (0.0, ((y + 1.0) / 2.0).ln())
            }),
            // u + 1 − e^{−u} = y: the root shares the sign of y and |u| ≤ |y|
            FDivergence::XlogxMinusLogx => Some(if y >= 0.0 { (0.0, y) } else { (y, 0.0) }),
            _ => None,
        }
    }

    /// Inverts `f'` numerically in log-space: solves `f'(e^u) = y` by
    /// safeguarded Newton from `u = 0` (i.e. `x = 1`) inside a geometrically
    /// expanded bracket. Available for every divergence; closed-form `h` is
    /// checked against it in tests.
    pub fn h_numeric(self, y: f64) -> Result<f64> {
        self.h_numeric_from(y, 0.0)
    }

    /// [`FDivergence::h_numeric`] started from `ln x = log_guess`.
    pub fn h_numeric_from(self, y: f64, log_guess: f64) -> Result<f64> {
        self.check_domain(y)?;
        let g = |u: f64| {
            let x = u.exp();
            (self.f_prime(x) - y, self.f_second(x) * x)
        };
        let bracket = self.log_bracket(y);
        let (lo, hi) = match bracket {
            Some(b) => b,
            None => expand_bracket_increasing(|u| g(u).0, 0.0, 64)?,
        };
        let opts = RootOptions {
            ftol: 1e-12 * y.abs().max(1.0),
            max_iter: 200,
        };
        let start = Some(log_guess.clamp(lo, hi));
        let root = if bracket.is_some() {
            newton_bisect_increasing(g, lo, hi, start, opts)
        } else {
            newton_bisect(g, lo, hi, start, opts)
        };
        let root = root.map_err(|e| match e {
            Error::Solver { iterations, residual, .. } => Error::Solver {
                context: format!("inverting f' of {} at y={y}", self.name()),
                iterations,
                residual,
            },
            other => other,
        })?;
        Ok(root.x.exp())
    }
}

impl fmt::Display for FDivergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FDivergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        registry_get(s)
    }
}

/// Looks up a registered divergence by name.
pub fn registry_get(name: &str) -> Result<FDivergence> {
    if let Some(d) = FDivergence::ALL.iter().find(|d| d.name() == name) {
        return Ok(*d);
    }
    if EXCLUDED.contains(&name) {
        return Err(Error::ExcludedDivergence(name.to_string()));
    }
    Err(Error::UnknownDivergence(name.to_string()))
}

/// `h(y)`, rejecting arguments outside the divergence's admissible domain.
pub fn h_eval(spec: FDivergence, y: f64) -> Result<f64> {
    spec.h(y)
}

/// `D_f(p‖q) = Σ_i q_i f(p_i / q_i)`. The reference `q` must have full support.
pub fn divergence_value(p: &[f64], q: &[f64], spec: FDivergence) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("p has {} entries, q has {}", p.len(), q.len())));
    }
    if let Some(i) = q.iter().position(|&qi| !(qi > 0.0)) {
        return Err(Error::Domain(format!("reference q[{i}] = {} is not positive", q[i])));
    }
    if let Some(i) = p.iter().position(|&pi| !(pi >= 0.0)) {
        return Err(Error::Domain(format!("p[{i}] = {} is negative", p[i])));
    }
    let (sp, sq) = (p.iter().sum::<f64>(), q.iter().sum::<f64>());
    if (sp - 1.0).abs() > 1e-9 || (sq - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("distributions must sum to 1 (got {sp}, {sq})")));
    }
    Ok(p.iter().zip(q).map(|(&pi, &qi)| qi * spec.f(pi / qi)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid() -> Vec<f64> {
        // log-spaced over (1e-3, 1e3)
        (0..=120).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 120.0)).collect()
    }

    #[test]
    fn f_vanishes_at_one() {
        for d in FDivergence::ALL {
            assert!(d.f(1.0).abs() <= 1e-12, "{d}");
        }
    }

    #[test]
    fn registry_lookups() {
        assert_eq!(registry_get("reverse_kl").unwrap().f(1.0), 0.0);
        assert_abs_diff_eq!(registry_get("chi2_mixed_kl").unwrap().f_prime(1.0), 1.0, epsilon = 1e-15);
        assert_eq!(
            registry_get("total_variation").unwrap_err(),
            Error::ExcludedDivergence("total_variation".into())
        );
        assert!(matches!(registry_get("chi_squared"), Err(Error::ExcludedDivergence(_))));
        assert!(matches!(registry_get("hellinger"), Err(Error::UnknownDivergence(_))));
        for d in FDivergence::ALL {
            assert_eq!(d.name().parse::<FDivergence>().unwrap(), d);
            let json = serde_json::to_string(&d).unwrap();
            assert_eq!(json, format!("\"{}\"", d.name()));
        }
    }

    #[test]
    fn f_prime_strictly_increasing() {
        for d in FDivergence::ALL {
            let g = grid();
            for w in g.windows(2) {
                assert!(d.f_prime(w[1]) > d.f_prime(w[0]), "{d} at {}", w[0]);
            }
        }
    }

    #[test]
    fn h_inverts_f_prime_on_grid() {
        for d in FDivergence::ALL {
            for x in grid() {
                let back = d.h(d.f_prime(x)).unwrap();
                assert!((back - x).abs() <= 1e-9 * x.max(1.0), "{d}: x={x} back={back}");
            }
        }
    }

    #[test]
    fn h_prime_times_f_second_is_one() {
        for d in FDivergence::ALL {
            for x in grid() {
                let y = d.f_prime(x);
                let prod = d.h_prime(y).unwrap() * d.f_second(d.h(y).unwrap());
                assert!((prod - 1.0).abs() <= 1e-8, "{d}: x={x} prod={prod}");
            }
        }
    }

    #[test]
    fn closed_forms_agree_with_numeric_inversion() {
        for d in [FDivergence::ReverseKl, FDivergence::ForwardKl, FDivergence::Js] {
            for x in grid() {
                let y = d.f_prime(x);
                let a = d.h(y).unwrap();
                let b = d.h_numeric(y).unwrap();
                assert!((a - b).abs() <= 1e-10 * a.max(1.0), "{d}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn h_examples() {
        assert_eq!(h_eval(FDivergence::ReverseKl, 1.0).unwrap(), 1.0);
        assert_eq!(h_eval(FDivergence::ForwardKl, -1.0).unwrap(), 1.0);
        // bisection oracle on log x + 2x − 1 = 1
        let (mut lo, mut hi) = (1e-6f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid.ln() + 2.0 * mid - 1.0 < 1.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert_abs_diff_eq!(oracle, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h_eval(FDivergence::Chi2MixedKl, 1.0).unwrap(), oracle, epsilon = 1e-12);
    }

    #[test]
    fn h_domain_violations() {
        assert!(matches!(h_eval(FDivergence::ForwardKl, 0.5), Err(Error::Domain(_))));
        assert!(matches!(h_eval(FDivergence::ForwardKl, 0.0), Err(Error::Domain(_))));
        assert!(matches!(h_eval(FDivergence::Js, 0.7), Err(Error::Domain(_))));
        assert!(matches!(h_eval(FDivergence::Chi2MixedKl, f64::NAN), Err(Error::Domain(_))));
        assert!(h_eval(FDivergence::Js, 0.69).unwrap() > 0.0);
    }

    #[test]
    fn zero_is_not_in_range_of_f_prime_preimage() {
        // f' is defined only on (0, ∞); every h maps its domain into (0, ∞).
        for d in FDivergence::ALL {
            for y in [-50.0, -5.0, -1.0, -1e-3] {
                assert!(d.h(y).unwrap() > 0.0);
            }
            assert!(d.f_prime(0.0).is_infinite() || d.f_prime(0.0).is_nan());
        }
    }

    #[test]
    fn divergence_examples() {
        let p = [0.2, 0.3, 0.5];
        for d in FDivergence::ALL {
            assert_abs_diff_eq!(divergence_value(&p, &p, d).unwrap(), 0.0, epsilon = 1e-15);
        }
        let v = divergence_value(&[1.0, 0.0], &[0.5, 0.5], FDivergence::ReverseKl).unwrap();
        assert_abs_diff_eq!(v, 2f64.ln(), epsilon = 1e-15);
        let v = divergence_value(&[0.75, 0.25], &[0.5, 0.5], FDivergence::ForwardKl).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (-(1.5f64).ln()) + 0.5 * (-(0.5f64).ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.1438, epsilon = 1e-4);
    }

    #[test]
    fn divergence_errors() {
        assert!(matches!(
            divergence_value(&[0.5, 0.5], &[1.0, 0.0], FDivergence::ReverseKl),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            divergence_value(&[1.0], &[0.5, 0.5], FDivergence::ReverseKl),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            divergence_value(&[0.6, 0.6], &[0.5, 0.5], FDivergence::ReverseKl),
            Err(Error::Domain(_))
        ));
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn h_round_trip_on_domain(idx in 0usize..5, t in -0.999f64..0.999) {
            let d = FDivergence::ALL[idx];
            let dom = d.h_domain();
            // map t into the domain: finite endpoints are approached but not reached
            let y = match (dom.lo.is_finite(), dom.hi.is_finite()) {
                (false, false) => 30.0 * t,
                (false, true) => dom.hi - 30.0 * (1.0 - t) / 2.0 - 1e-6,
                _ => unreachable!(),
            };
            let x = d.h(y).unwrap();
            prop_assert!((d.f_prime(x) - y).abs() <= 1e-9 * y.abs().max(1.0));
        }

        #[test]
        fn nonnegative_and_jointly_convex(
            idx in 0usize..5,
            p1 in simplex(4), q1 in simplex(4), p2 in simplex(4), q2 in simplex(4),
        ) {
            let d = FDivergence::ALL[idx];
            let d1 = divergence_value(&p1, &q1, d).unwrap();
            let d2 = divergence_value(&p2, &q2, d).unwrap();
            prop_assert!(d1 >= -1e-12 && d2 >= -1e-12);
            for alpha in [0.25, 0.5, 0.75] {
                let p: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
                let q: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
                let mix = divergence_value(&p, &q, d).unwrap();
                prop_assert!(mix <= alpha * d1 + (1.0 - alpha) * d2 + 1e-9);
            }
        }
    }
}
