//! Per-context regularized optimal policy and the derivative-based
//! exploration distributions built from it.
//!
//! For a reward row `r`, reference row `π₀` and strength `η` the optimal
//! policy is `π(a) = π₀(a) h(η(r(a) − λ))`, where the normalizer `λ` is the
//! unique root of the strictly decreasing map
//! `F(λ) = Σ_a π₀(a) h(η(r(a) − λ))` at level 1.

use rand::Rng;

use crate::divergence::FDivergence;
use crate::error::{Error, Result};
use crate::roots::{newton_bisect, RootOptions};

/// Default tolerance on `|F(λ) − 1|`.
pub const LAMBDA_TOL: f64 = 1e-12;

/// A probability vector over a finite action set.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePolicy {
    probs: Vec<f64>,
}

impl DiscretePolicy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Shape("policy over an empty action set".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain(format!("policy has a negative or non-finite entry: {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("policy sums to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            probs: vec![1.0 / m as f64; m],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Inverse-CDF draw from one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // u landed in the rounding gap above the last partial sum
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(self.probs.len() - 1)
    }

    /// Total-variation distance.
    pub fn tv_distance(&self, other: &DiscretePolicy) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// The normalizer `λ` together with its residual certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSolution {
    pub lambda: f64,
    /// `|Σ_a π₀(a) h(η(r(a) − λ)) − 1|`
    pub residual: f64,
    pub iterations: usize,
}

fn check_row(ref_row: &[f64], rewards_row: &[f64], eta: f64) -> Result<()> {
    if ref_row.len() != rewards_row.len() || ref_row.is_empty() {
        return Err(Error::Shape(format!(
            "reference row has {} actions, reward row {}",
            ref_row.len(),
            rewards_row.len()
        )));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    if let Some(p) = ref_row.iter().find(|p| !(**p > 0.0)) {
        return Err(Error::Domain(format!("reference policy must have full support (found {p})")));
    }
    if let Some(r) = rewards_row.iter().find(|r| !r.is_finite()) {
        return Err(Error::Domain(format!("non-finite reward {r}")));
    }
    Ok(())
}

/// `(h(y), h'(y))`, saturating to `+∞` above the admissible domain. For
/// numerically inverted `h` the previous `ln h` of the same action seeds the
/// inversion and is updated in place.
fn h_saturating(spec: FDivergence, y: f64, log_guess: &mut f64) -> Result<(f64, f64)> {
    if y >= spec.h_domain().hi {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    if spec.has_closed_form_h() {
        return spec.h_and_prime(y);
    }
    let x = spec.h_numeric_from(y, *log_guess)?;
    *log_guess = x.ln();
    Ok((x, 1.0 / spec.f_second(x)))
}

/// Solves `Σ_a π₀(a) h(η(r(a) − λ)) = 1` for `λ`.
///
/// Since `h(f'(1)) = 1` and `h` is increasing, the root lies in
/// `[min r − f'(1)/η, max r − f'(1)/η]`. Where the left end pushes some
/// argument past the top of `h`'s domain, `F` is treated as `+∞` there, which
/// keeps the bracket valid for divergences with a bounded domain.
pub fn solve_lambda(
    spec: FDivergence,
    ref_row: &[f64],
    rewards_row: &[f64],
    eta: f64,
    tol: f64,
) -> Result<LambdaSolution> {
    check_row(ref_row, rewards_row, eta)?;
    let (r_min, r_max) = rewards_row
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    let anchor = spec.f_prime(1.0) / eta;
    let ref_mass: f64 = ref_row.iter().sum();
    if r_min == r_max {
        return Ok(LambdaSolution {
            lambda: r_min - anchor,
            residual: (ref_mass - 1.0).abs(),
            iterations: 0,
        });
    }

    let mut failure = None;
    let mut guesses = vec![0.0; ref_row.len()];
    let mut g = |lambda: f64| -> (f64, f64) {
        let mut value = -1.0;
        let mut slope = 0.0;
        for ((&p0, &r), guess) in ref_row.iter().zip(rewards_row).zip(guesses.iter_mut()) {
            match h_saturating(spec, eta * (r - lambda), guess) {
                Ok((h, hp)) => {
                    value += p0 * h;
                    slope -= eta * p0 * hp;
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    return (f64::NAN, f64::NAN);
                }
            }
        }
        (value, slope)
    };
    let opts = RootOptions { ftol: tol, max_iter: 300 };
    let root = newton_bisect(&mut g, r_min - anchor, r_max - anchor, None, opts);
    if let Some(e) = failure {
        return Err(e);
    }
    let root = root.map_err(|e| match e {
        Error::Solver { iterations, residual, .. } => Error::Solver {
            context: format!("normalizer for {}", spec.name()),
            iterations,
            residual,
        },
        other => other,
    })?;
    Ok(LambdaSolution {
        lambda: root.x,
        residual: root.residual,
        iterations: root.iterations,
    })
}

/// Optimal policy row and its normalizer.
pub fn optimal_policy_with_lambda(
    spec: FDivergence,
    ref_row: &[f64],
    rewards_row: &[f64],
    eta: f64,
) -> Result<(DiscretePolicy, LambdaSolution)> {
    let sol = solve_lambda(spec, ref_row, rewards_row, eta, LAMBDA_TOL)?;
    let first = rewards_row[0];
    if rewards_row.iter().all(|&r| r == first) {
        return Ok((DiscretePolicy { probs: ref_row.to_vec() }, sol));
    }
    let probs = ref_row
        .iter()
        .zip(rewards_row)
        .map(|(&p0, &r)| Ok(p0 * spec.h(eta * (r - sol.lambda))?))
        .collect::<Result<Vec<f64>>>()?;
    Ok((DiscretePolicy::new(probs)?, sol))
}

/// `π(a) = π₀(a) h(η(r(a) − λ))`.
pub fn optimal_policy_row(
    spec: FDivergence,
    ref_row: &[f64],
    rewards_row: &[f64],
    eta: f64,
) -> Result<DiscretePolicy> {
    optimal_policy_with_lambda(spec, ref_row, rewards_row, eta).map(|(p, _)| p)
}

/// Stationarity residual `max_a |r(a) − f'(π(a)/π₀(a))/η − λ|`.
pub fn kkt_residual(
    spec: FDivergence,
    ref_row: &[f64],
    rewards_row: &[f64],
    eta: f64,
    policy: &DiscretePolicy,
    lambda: f64,
) -> f64 {
    ref_row
        .iter()
        .zip(rewards_row)
        .zip(policy.probs())
        .map(|((&p0, &r), &p)| (r - spec.f_prime(p / p0) / eta - lambda).abs())
        .fold(0.0, f64::max)
}

/// Which branch of the mixture sampler produced an action pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Both actions from `π′`.
    Prime,
    /// `a¹ ~ π⁺`, `a² ~ π⁻`.
    PlusMinus,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Prime => "prime",
            Branch::PlusMinus => "plus_minus",
        }
    }
}

/// Threshold below which `T̄` is treated as having underflowed.
pub const DEGENERATE_T_BAR: f64 = 1e-300;

/// Quantities of the derivative-based sampler at one context.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationBundle {
    /// `π′(a) ∝ π₀(a) h'(η(r(a) − λ))`
    pub pi_prime: DiscretePolicy,
    /// `T̄ = Σ_a π₀(a) h'(η(r(a) − λ))`
    pub t_bar: f64,
    pub z_plus: f64,
    pub z_minus: f64,
    /// `Z⁺Z⁻ / (1 + Z⁺Z⁻)`
    pub p_mix: f64,
    /// `T̄ + Z⁺Z⁻T̄`, the unnormalized loss weight of this context.
    pub omega_raw: f64,
    pub lambda: LambdaSolution,
    /// `T̄` underflowed and `π′` fell back to `π₀`.
    pub degenerate: bool,
}

pub fn exploration_bundle(
    spec: FDivergence,
    ref_row: &[f64],
    rewards_row: &[f64],
    eta: f64,
) -> Result<ExplorationBundle> {
    let lambda = solve_lambda(spec, ref_row, rewards_row, eta, LAMBDA_TOL)?;
    let weights = ref_row
        .iter()
        .zip(rewards_row)
        .map(|(&p0, &r)| Ok(p0 * spec.h_prime(eta * (r - lambda.lambda))?))
        .collect::<Result<Vec<f64>>>()?;
    let t_bar: f64 = weights.iter().sum();
    let (pi_prime, t_bar, degenerate) = if t_bar < DEGENERATE_T_BAR || !t_bar.is_finite() {
        (ref_row.to_vec(), DEGENERATE_T_BAR.max(t_bar.min(f64::MAX)), true)
    } else {
        (weights.iter().map(|w| w / t_bar).collect(), t_bar, false)
    };
    let z_plus: f64 = pi_prime.iter().zip(rewards_row).map(|(p, r)| p * r.exp()).sum();
    let z_minus: f64 = pi_prime.iter().zip(rewards_row).map(|(p, r)| p * (-r).exp()).sum();
    let zz = z_plus * z_minus;
    Ok(ExplorationBundle {
        pi_prime: DiscretePolicy::new(pi_prime)?,
        t_bar,
        z_plus,
        z_minus,
        p_mix: zz / (1.0 + zz),
        omega_raw: t_bar + zz * t_bar,
        lambda,
        degenerate,
    })
}

/// `π⁺(a) ∝ π′(a) e^{r(a)}` and `π⁻(a) ∝ π′(a) e^{−r(a)}`.
pub fn plus_minus_rows(
    bundle: &ExplorationBundle,
    rewards_row: &[f64],
) -> Result<(DiscretePolicy, DiscretePolicy)> {
    if rewards_row.len() != bundle.pi_prime.len() {
        return Err(Error::Shape("reward row does not match the bundle".into()));
    }
    let tilt = |sign: f64, z: f64| {
        bundle
            .pi_prime
            .probs()
            .iter()
            .zip(rewards_row)
            .map(|(p, r)| p * (sign * r).exp() / z)
            .collect::<Vec<f64>>()
    };
    Ok((
        DiscretePolicy::new(tilt(1.0, bundle.z_plus))?,
        DiscretePolicy::new(tilt(-1.0, bundle.z_minus))?,
    ))
}

/// With probability `1 − p_mix` both actions come from `π′`; otherwise
/// `a¹ ~ π⁺` and `a² ~ π⁻`.
pub fn sample_action_pair<R: Rng + ?Sized>(
    bundle: &ExplorationBundle,
    pi_plus: &DiscretePolicy,
    pi_minus: &DiscretePolicy,
    rng: &mut R,
) -> (usize, usize, Branch) {
    let u: f64 = rng.random();
    if u < bundle.p_mix {
        (pi_plus.sample(rng), pi_minus.sample(rng), Branch::PlusMinus)
    } else {
        let pi = &bundle.pi_prime;
        (pi.sample(rng), pi.sample(rng), Branch::Prime)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const HALF: [f64; 2] = [0.5, 0.5];

    /// π₀-weighted softmax of η·r, computed with a max shift.
    fn softmax_oracle(ref_row: &[f64], r: &[f64], eta: f64) -> Vec<f64> {
        let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = ref_row.iter().zip(r).map(|(p, x)| p * (eta * (x - m)).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn lambda_examples() {
        let s = solve_lambda(FDivergence::ReverseKl, &HALF, &[0.3, 0.3], 1.0, LAMBDA_TOL).unwrap();
        assert_abs_diff_eq!(s.lambda, 0.3 - 1.0, epsilon = 1e-15);

        let s = solve_lambda(FDivergence::ForwardKl, &HALF, &[1.0, 0.0], 1.0, LAMBDA_TOL).unwrap();
        assert_abs_diff_eq!(s.lambda, 1.0 + 0.5 * 2f64.sqrt(), epsilon = 1e-12);
        assert!(s.residual <= 1e-12);

        let s = solve_lambda(FDivergence::ReverseKl, &HALF, &[1.0, 0.0], 1.0, LAMBDA_TOL).unwrap();
        assert_abs_diff_eq!(s.lambda, ((1.0 + (-1f64).exp()) / 2.0).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.lambda, -0.379885, epsilon = 1e-6);
    }

    #[test]
    fn policy_examples() {
        for d in FDivergence::ALL {
            let p = optimal_policy_row(d, &[0.2, 0.3, 0.5], &[0.4, 0.4, 0.4], 2.0).unwrap();
            assert_eq!(p.probs(), &[0.2, 0.3, 0.5]);
        }
        let e = std::f64::consts::E;
        let p = optimal_policy_row(FDivergence::ReverseKl, &HALF, &[1.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(p.probs()[0], e / (e + 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(p.probs()[1], 1.0 / (e + 1.0), epsilon = 1e-12);

        let p = optimal_policy_row(FDivergence::ForwardKl, &HALF, &[1.0, 0.0], 1.0).unwrap();
        let lambda = 1.0 + 0.5 * 2f64.sqrt();
        assert_abs_diff_eq!(p.probs()[0], 0.5 / (lambda - 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(p.probs()[1], 0.5 / lambda, epsilon = 1e-12);
        assert_abs_diff_eq!(p.probs()[0], 0.70711, epsilon = 1e-5);
    }

    #[test]
    fn js_bracket_respects_domain() {
        // large η gap pushes the left bracket end outside (−∞, log 2)
        let s = solve_lambda(FDivergence::Js, &[0.25; 4], &[0.0, 0.1, 0.9, 1.0], 8.0, LAMBDA_TOL).unwrap();
        assert!(s.residual <= 1e-12);
        let p = optimal_policy_row(FDivergence::Js, &[0.25; 4], &[0.0, 0.1, 0.9, 1.0], 8.0).unwrap();
        assert!(p.probs().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            solve_lambda(FDivergence::ReverseKl, &[1.0, 0.0], &[0.0, 1.0], 1.0, 1e-12),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            solve_lambda(FDivergence::ReverseKl, &HALF, &[0.0], 1.0, 1e-12),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            solve_lambda(FDivergence::ReverseKl, &HALF, &[0.0, 1.0], 0.0, 1e-12),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bundle_at_zero_rewards() {
        let refs = [0.1, 0.2, 0.3, 0.4];
        let b = exploration_bundle(FDivergence::ReverseKl, &refs, &[0.0; 4], 1.7).unwrap();
        for (a, b) in b.pi_prime.probs().iter().zip(refs) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(b.t_bar, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.z_plus, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.z_minus, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.p_mix, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.omega_raw, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn constant_rewards_give_half_mixing() {
        for d in FDivergence::ALL {
            let b = exploration_bundle(d, &[0.3, 0.7], &[0.6, 0.6], 1.0).unwrap();
            assert_abs_diff_eq!(b.z_plus * b.z_minus, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(b.p_mix, 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn reverse_kl_prime_equals_optimal() {
        let b = exploration_bundle(FDivergence::ReverseKl, &HALF, &[1.0, 0.0], 1.0).unwrap();
        let p = optimal_policy_row(FDivergence::ReverseKl, &HALF, &[1.0, 0.0], 1.0).unwrap();
        let oracle = softmax_oracle(&HALF, &[1.0, 0.0], 1.0);
        for i in 0..2 {
            assert_abs_diff_eq!(b.pi_prime.probs()[i], p.probs()[i], epsilon = 1e-12);
            assert_abs_diff_eq!(b.pi_prime.probs()[i], oracle[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn plus_minus_examples() {
        let r0 = [0.0, 0.0, 0.0];
        let b = exploration_bundle(FDivergence::Chi2MixedKl, &[0.2, 0.3, 0.5], &r0, 1.0).unwrap();
        let (plus, minus) = plus_minus_rows(&b, &r0).unwrap();
        assert_eq!(plus.probs(), b.pi_prime.probs());
        assert_eq!(minus.probs(), b.pi_prime.probs());

        // π′ = (½, ½) at r = (1, 0): reverse KL at zero rewards has π′ = π₀
        let b = exploration_bundle(FDivergence::ReverseKl, &HALF, &[0.0, 0.0], 1.0).unwrap();
        let (plus, minus) = plus_minus_rows(&b, &[0.0, 0.0]).unwrap();
        assert_eq!(plus, minus);
        let mut b1 = b.clone();
        b1.z_plus = 0.5 * (1f64.exp() + 1.0);
        b1.z_minus = 0.5 * ((-1f64).exp() + 1.0);
        let (plus, minus) = plus_minus_rows(&b1, &[1.0, 0.0]).unwrap();
        let sp = softmax_oracle(&HALF, &[1.0, 0.0], 1.0);
        let sm = softmax_oracle(&HALF, &[-1.0, 0.0], 1.0);
        assert_abs_diff_eq!(plus.probs()[0], sp[0], epsilon = 1e-12);
        assert_abs_diff_eq!(minus.probs()[0], sm[0], epsilon = 1e-12);
        assert_abs_diff_eq!(plus.probs()[0], 0.73106, epsilon = 1e-5);
        assert_abs_diff_eq!(minus.probs()[0], 0.26894, epsilon = 1e-5);
    }

    fn fixed_bundle(p_mix: f64) -> (ExplorationBundle, DiscretePolicy, DiscretePolicy) {
        let mut b = exploration_bundle(FDivergence::ReverseKl, &[0.25; 4], &[0.1, 0.5, 0.2, 0.9], 1.0).unwrap();
        b.p_mix = p_mix;
        let (p, m) = plus_minus_rows(&b, &[0.1, 0.5, 0.2, 0.9]).unwrap();
        (b, p, m)
    }

    #[test]
    fn degenerate_mixing_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (b, p, m) = fixed_bundle(0.0);
        assert!((0..1000).all(|_| sample_action_pair(&b, &p, &m, &mut rng).2 == Branch::Prime));
        let (b, p, m) = fixed_bundle(1.0);
        assert!((0..1000).all(|_| sample_action_pair(&b, &p, &m, &mut rng).2 == Branch::PlusMinus));
    }

    #[test]
    fn branch_frequency_matches_p_mix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (b, p, m) = fixed_bundle(0.37);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_action_pair(&b, &p, &m, &mut rng).2 == Branch::PlusMinus)
            .count();
        let sigma = (0.37 * 0.63 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.37).abs() <= 3.0 * sigma);
    }

    #[test]
    fn categorical_sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pol = DiscretePolicy::new(vec![0.1, 0.0, 0.6, 0.3]).unwrap();
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[pol.sample(&mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        for (c, p) in counts.iter().zip(pol.probs()) {
            assert!((*c as f64 / 1e5 - p).abs() < 0.01);
        }
    }

    fn instance() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, f64)> {
        (2usize..8).prop_flat_map(|m| {
            (
                0usize..5,
                prop::collection::vec(0.05f64..1.0, m),
                prop::collection::vec(0.0f64..1.0, m),
                prop::sample::select(vec![0.5, 1.0, 2.0]),
            )
        })
        .prop_map(|(d, refs, r, eta)| {
            let s: f64 = refs.iter().sum();
            (d, refs.into_iter().map(|x| x / s).collect(), r, eta)
        })
    }

    proptest! {
        #[test]
        fn kkt_and_normalization((d, refs, r, eta) in instance()) {
            let spec = FDivergence::ALL[d];
            let (p, sol) = optimal_policy_with_lambda(spec, &refs, &r, eta).unwrap();
            prop_assert!(sol.residual <= 1e-10);
            prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(kkt_residual(spec, &refs, &r, eta, &p, sol.lambda) <= 1e-7);
        }

        #[test]
        fn shift_invariance((d, refs, r, eta) in instance(), shift in -3.0f64..3.0) {
            let spec = FDivergence::ALL[d];
            let (p, s) = optimal_policy_with_lambda(spec, &refs, &r, eta).unwrap();
            let shifted: Vec<f64> = r.iter().map(|x| x + shift).collect();
            let (q, t) = optimal_policy_with_lambda(spec, &refs, &shifted, eta).unwrap();
            prop_assert!((t.lambda - s.lambda - shift).abs() <= 1e-8);
            for (a, b) in p.probs().iter().zip(q.probs()) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }

        #[test]
        fn reverse_kl_matches_softmax((_d, refs, r, eta) in instance()) {
            let p = optimal_policy_row(FDivergence::ReverseKl, &refs, &r, eta).unwrap();
            for (a, b) in p.probs().iter().zip(softmax_oracle(&refs, &r, eta)) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
            let b = exploration_bundle(FDivergence::ReverseKl, &refs, &r, eta).unwrap();
            prop_assert!(b.pi_prime.tv_distance(&p) <= 1e-9);
        }

        #[test]
        fn raising_a_reward_raises_its_probability((d, refs, r, eta) in instance(), bump in 0.01f64..0.5) {
            let spec = FDivergence::ALL[d];
            let p = optimal_policy_row(spec, &refs, &r, eta).unwrap();
            let mut r2 = r.clone();
            r2[0] += bump;
            let q = optimal_policy_row(spec, &refs, &r2, eta).unwrap();
            prop_assert!(q.probs()[0] > p.probs()[0]);
        }

        #[test]
        fn bundle_invariants((d, refs, r, eta) in instance()) {
            let b = exploration_bundle(FDivergence::ALL[d], &refs, &r, eta).unwrap();
            let zz = b.z_plus * b.z_minus;
            prop_assert!((b.p_mix - zz / (1.0 + zz)).abs() <= 1e-15);
            prop_assert!(b.t_bar > 0.0);
            prop_assert!((b.pi_prime.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}
