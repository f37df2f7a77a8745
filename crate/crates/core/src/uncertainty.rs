//! Uncertainty quantification for optimism: elliptical bonuses for linear
//! rewards and Eluder-style uncertainty over a finite reward class.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::reward::{feature, FiniteRewardClass};

/// `Σ = (ξ/B) I + Σ_i v_i v_iᵀ` with its Cholesky factor kept current.
#[derive(Debug, Clone)]
pub struct GramState {
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
    mean_ref_feature: Vec<f64>,
    count: usize,
}

impl GramState {
    pub fn new(d: usize, xi: f64, b: f64, mean_ref_feature: Vec<f64>) -> Result<Self> {
        if !(xi > 0.0 && b > 0.0) {
            return Err(Error::Domain(format!("need xi > 0 and B > 0, got {xi}, {b}")));
        }
        if mean_ref_feature.len() != d {
            return Err(Error::Shape("mean feature dimension differs from d".into()));
        }
        let sigma = DMatrix::identity(d, d) * (xi / b);
        let chol = DMatrix::identity(d, d) * (xi / b).sqrt();
        Ok(Self {
            sigma,
            chol,
            mean_ref_feature,
            count: 0,
        })
    }

    pub fn push(&mut self, v: &[f64]) -> Result<()> {
        let v = DVector::from_column_slice(v);
        self.sigma.ger(1.0, &v, &v, 1.0);
        self.chol = self
            .sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("Gram matrix lost positive definiteness".into()))?
            .l();
        self.count += 1;
        Ok(())
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn mean_ref_feature(&self) -> &[f64] {
        &self.mean_ref_feature
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `vᵀ Σ⁻¹ v` through a triangular solve.
    pub fn inv_norm_sq(&self, v: &[f64]) -> Result<f64> {
        let rhs = DVector::from_column_slice(v);
        let y = self
            .chol
            .solve_lower_triangular(&rhs)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        Ok(y.norm_squared())
    }
}

/// Monte-Carlo estimate of `E_x[Σ_a π₀(a|x) φ(x, a)]`.
pub fn mean_ref_feature<R: Rng + ?Sized>(env: &Environment, contexts: usize, rng: &mut R) -> Vec<f64> {
    let scale = env.truth.scale();
    let mut mean = vec![0.0; env.k * env.k];
    for _ in 0..contexts {
        let x = env.sample_context(rng);
        for (a, &p) in env.actions.iter().zip(env.ref_row(&x)) {
            for (m, v) in mean.iter_mut().zip(feature(&x, a, scale)) {
                *m += p * v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= contexts as f64);
    mean
}

/// `β ‖φ(x, a) − φ̄‖_{Σ⁻¹}`.
pub fn linear_bonus(state: &GramState, phi: &[f64], beta: f64) -> Result<f64> {
    if beta == 0.0 {
        return Ok(0.0);
    }
    let centered: Vec<f64> = phi.iter().zip(&state.mean_ref_feature).map(|(p, m)| p - m).collect();
    Ok(beta * state.inv_norm_sq(&centered)?.sqrt())
}

/// `min(1, β U)`.
pub fn bonus_pairwise(u: f64, beta: f64) -> f64 {
    (beta * u).min(1.0)
}

/// `β_T² = 4e log(N T / δ)`.
pub fn beta_sq_pairwise(class_size: usize, horizon: usize, delta: f64) -> f64 {
    4.0 * std::f64::consts::E * (class_size as f64 * horizon as f64 / delta).ln()
}

/// `β_T^RF = 16 log(N T / δ)`.
pub fn beta_reward_feedback(class_size: usize, horizon: usize, delta: f64) -> f64 {
    16.0 * (class_size as f64 * horizon as f64 / delta).ln()
}

/// A confidence set: indices into a finite class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub members: Vec<usize>,
    pub beta_sq: f64,
}

impl ConfidenceSet {
    /// The whole class.
    pub fn full(class_size: usize) -> Self {
        Self {
            members: (0..class_size).collect(),
            beta_sq: f64::INFINITY,
        }
    }
}

/// Accumulated squared historical gaps `S_mn = Σ_i ΔR_mn(i)²` between every
/// pair of class members.
#[derive(Debug, Clone)]
pub struct PairStats {
    n: usize,
    s: Vec<f64>,
    len: usize,
}

impl PairStats {
    pub fn new(class_size: usize) -> Self {
        Self {
            n: class_size,
            s: vec![0.0; class_size * class_size],
            len: 0,
        }
    }

    /// Adds a query given each member's contribution `g_m`; the pair gap is
    /// `g_m − g_n`.
    pub fn push(&mut self, g: &[f64]) {
        for m in 0..self.n {
            for n in 0..m {
                let d = g[m] - g[n];
                self.s[m * self.n + n] += d * d;
                self.s[n * self.n + m] += d * d;
            }
        }
        self.len += 1;
    }

    /// Pairwise-comparison query `(x, a¹, a²)`: `g_m = r_m(x, a¹) − r_m(x, a²)`.
    pub fn push_comparison(&mut self, class: &FiniteRewardClass, x: &[f64], a1: &[f64], a2: &[f64]) {
        let g: Vec<f64> = class.members.iter().map(|r| r.value(x, a1) - r.value(x, a2)).collect();
        self.push(&g);
    }

    /// Single-action query `(x, a)`: `g_m = r_m(x, a)`.
    pub fn push_action(&mut self, class: &FiniteRewardClass, x: &[f64], a: &[f64]) {
        let g: Vec<f64> = class.members.iter().map(|r| r.value(x, a)).collect();
        self.push(&g);
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.s[m * self.n + n]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// `sup_{m,n ∈ set} |g_m − g_n| / sqrt(ξ + S_mn)` for one query whose
/// member contributions are `g`.
pub fn uncertainty_from_stats(set: &ConfidenceSet, stats: &PairStats, g: &[f64], xi: f64) -> Result<f64> {
    if set.members.is_empty() {
        return Err(Error::EmptyConfidenceSet);
    }
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("xi must be positive, got {xi}")));
    }
    let mut best = 0.0f64;
    for (pos, &m) in set.members.iter().enumerate() {
        for &n in &set.members[..pos] {
            let u = (g[m] - g[n]).abs() / (xi + stats.get(m, n)).sqrt();
            best = best.max(u);
        }
    }
    Ok(best)
}

/// Eluder uncertainty of the comparison `(x, a_i, a_j)`, recomputed from the
/// raw history by exhaustive enumeration of member pairs.
pub fn eluder_uncertainty_finite(
    set: &ConfidenceSet,
    class: &FiniteRewardClass,
    actions: &[Vec<f64>],
    history: &[(Vec<f64>, usize, usize)],
    x: &[f64],
    i: usize,
    j: usize,
    xi: f64,
) -> Result<f64> {
    let mut stats = PairStats::new(class.len());
    for (hx, hi, hj) in history {
        stats.push_comparison(class, hx, &actions[*hi], &actions[*hj]);
    }
    let g: Vec<f64> = class
        .members
        .iter()
        .map(|r| r.value(x, &actions[i]) - r.value(x, &actions[j]))
        .collect();
    uncertainty_from_stats(set, &stats, &g, xi)
}

/// Members whose historical deviation from the fitted member, plus `ξ`,
/// stays within `β²`. The fitted member is always kept.
pub fn confidence_set_update(class_size: usize, fitted: usize, stats: &PairStats, xi: f64, beta_sq: f64) -> ConfidenceSet {
    let members = (0..class_size)
        .filter(|&m| m == fitted || stats.get(m, fitted) + xi <= beta_sq)
        .collect();
    ConfidenceSet { members, beta_sq }
}

/// Pairwise bonus `b(a, a′)` for every action pair at one context, given
/// each member's reward row there.
pub fn pairwise_bonus_matrix(
    set: &ConfidenceSet,
    stats: &PairStats,
    member_rows: &[Vec<f64>],
    xi: f64,
    beta: f64,
) -> Result<Vec<Vec<f64>>> {
    if set.members.is_empty() {
        return Err(Error::EmptyConfidenceSet);
    }
    let m = member_rows[0].len();
    let mut u = vec![vec![0.0f64; m]; m];
    for (pos, &p) in set.members.iter().enumerate() {
        for &q in &set.members[..pos] {
            let denom = (xi + stats.get(p, q)).sqrt();
            let gap: Vec<f64> = member_rows[p].iter().zip(&member_rows[q]).map(|(a, b)| a - b).collect();
            for a in 0..m {
                for b in 0..a {
                    let v = (gap[a] - gap[b]).abs() / denom;
                    if v > u[a][b] {
                        u[a][b] = v;
                        u[b][a] = v;
                    }
                }
            }
        }
    }
    Ok(u.into_iter()
        .map(|row| row.into_iter().map(|v| bonus_pairwise(v, beta)).collect())
        .collect())
}

/// Single-action bonus `min(1, β U_RF(x, a))` given each member's reward at
/// `(x, a)`.
pub fn bonus_rf(set: &ConfidenceSet, stats: &PairStats, member_values: &[f64], xi: f64, beta_rf: f64) -> Result<f64> {
    Ok(bonus_pairwise(uncertainty_from_stats(set, stats, member_values, xi)?, beta_rf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{stream_rng, EnvConfig, Stream};
    use crate::reward::LinearRewardModel;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn class() -> (FiniteRewardClass, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = LinearRewardModel::random_unit(3, &mut rng);
        let class = FiniteRewardClass::random_with_truth(&truth, 6, &mut rng).unwrap();
        let actions = (0..4).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        (class, actions)
    }

    #[test]
    fn singleton_set_has_no_uncertainty() {
        let (class, actions) = class();
        let set = ConfidenceSet { members: vec![2], beta_sq: 1.0 };
        let u = eluder_uncertainty_finite(&set, &class, &actions, &[], &[0.3, 0.4, 0.5], 0, 1, 1.0).unwrap();
        assert_eq!(u, 0.0);
        let empty = ConfidenceSet { members: vec![], beta_sq: 1.0 };
        assert_eq!(
            eluder_uncertainty_finite(&empty, &class, &actions, &[], &[0.3, 0.4, 0.5], 0, 1, 1.0),
            Err(Error::EmptyConfidenceSet)
        );
    }

    #[test]
    fn empty_history_is_gap_over_sqrt_xi() {
        let (class, actions) = class();
        let x = [0.2, 0.9, 0.4];
        let set = ConfidenceSet { members: vec![0, 3], beta_sq: 1.0 };
        let g = |m: usize| class.members[m].value(&x, &actions[1]) - class.members[m].value(&x, &actions[2]);
        let xi = 0.25;
        let u = eluder_uncertainty_finite(&set, &class, &actions, &[], &x, 1, 2, xi).unwrap();
        assert_abs_diff_eq!(u, (g(0) - g(3)).abs() / xi.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn repeated_queries_decrease_uncertainty() {
        let (class, actions) = class();
        let set = ConfidenceSet::full(class.len());
        let x = vec![0.6, 0.1, 0.8];
        let mut history = Vec::new();
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let u = eluder_uncertainty_finite(&set, &class, &actions, &history, &x, 0, 3, 1.0).unwrap();
            assert!(u < prev);
            prev = u;
            history.push((x.clone(), 0, 3));
        }
    }

    #[test]
    fn incremental_stats_match_exhaustive() {
        let (class, actions) = class();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut stats = PairStats::new(class.len());
        let mut history = Vec::new();
        let set = ConfidenceSet::full(class.len());
        for _ in 0..30 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let (i, j) = (rng.random_range(0..4), rng.random_range(0..4));
            stats.push_comparison(&class, &x, &actions[i], &actions[j]);
            history.push((x, i, j));
        }
        let x = [0.5, 0.5, 0.1];
        let g: Vec<f64> = class.members.iter().map(|r| r.value(&x, &actions[0]) - r.value(&x, &actions[1])).collect();
        let fast = uncertainty_from_stats(&set, &stats, &g, 1.0).unwrap();
        let slow = eluder_uncertainty_finite(&set, &class, &actions, &history, &x, 0, 1, 1.0).unwrap();
        assert_abs_diff_eq!(fast, slow, epsilon = 1e-14);

        let rows: Vec<Vec<f64>> = class.members.iter().map(|r| r.rewards_row(&x, &actions)).collect();
        let bonus = pairwise_bonus_matrix(&set, &stats, &rows, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(bonus[0][1], bonus_pairwise(slow, 2.0), epsilon = 1e-14);
        assert_eq!(bonus[2][2], 0.0);
    }

    #[test]
    fn pairwise_bonus_examples() {
        assert_eq!(bonus_pairwise(0.0, 3.0), 0.0);
        assert_eq!(bonus_pairwise(2.5, 2.0), 1.0);
        assert_abs_diff_eq!(bonus_pairwise(0.3, 2.0), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn radius_examples() {
        let b = beta_sq_pairwise(20, 2000, 0.1);
        assert_abs_diff_eq!(b, 4.0 * std::f64::consts::E * 400_000f64.ln(), epsilon = 1e-12);
        assert!((b - 140.3).abs() < 0.05, "{b}");
        assert_abs_diff_eq!(beta_reward_feedback(1, 1, 1.0), 0.0);
    }

    #[test]
    fn confidence_sets() {
        let (class, actions) = class();
        let empty = PairStats::new(class.len());
        let set = confidence_set_update(class.len(), 2, &empty, 1.0, 2.0);
        assert_eq!(set.members, (0..class.len()).collect::<Vec<_>>());

        let mut stats = PairStats::new(class.len());
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            stats.push_comparison(&class, &x, &actions[0], &actions[3]);
        }
        let wide = confidence_set_update(class.len(), 1, &stats, 1.0, f64::INFINITY);
        assert_eq!(wide.members.len(), class.len());
        let tight = confidence_set_update(class.len(), 1, &stats, 1.0, 1.0);
        assert_eq!(tight.members, vec![1]);
        for &m in &wide.members {
            assert!(m == 1 || stats.get(m, 1) + 1.0 <= wide.beta_sq);
        }
    }

    #[test]
    fn reward_feedback_bonus() {
        let (class, actions) = class();
        let x = [0.3, 0.3, 0.3];
        let values: Vec<f64> = class.members.iter().map(|r| r.value(&x, &actions[0])).collect();
        let stats = PairStats::new(class.len());
        let single = ConfidenceSet { members: vec![class.truth_index], beta_sq: 1.0 };
        assert_eq!(bonus_rf(&single, &stats, &values, 1.0, 5.0).unwrap(), 0.0);

        let full = ConfidenceSet::full(class.len());
        let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
        let b = bonus_rf(&full, &stats, &values, 4.0, 0.5).unwrap();
        assert_abs_diff_eq!(b, (0.5 * spread / 2.0).min(1.0), epsilon = 1e-15);
        assert_eq!(bonus_rf(&full, &stats, &values, 1e-12, 0.5).unwrap(), 1.0);

        let mut stats = PairStats::new(class.len());
        let mut prev = f64::INFINITY;
        for _ in 0..5 {
            let b = bonus_rf(&full, &stats, &values, 1.0, 0.5).unwrap();
            assert!(b < prev);
            prev = b;
            stats.push_action(&class, &x, &actions[0]);
        }
    }

    #[test]
    fn linear_bonus_properties() {
        let state = GramState::new(2, 1.0, 1.0, vec![0.1, 0.2]).unwrap();
        assert_eq!(linear_bonus(&state, &[0.7, 0.3], 0.0).unwrap(), 0.0);
        assert_eq!(linear_bonus(&state, &[0.1, 0.2], 1.0).unwrap(), 0.0);
        let phi = [0.5, -0.4];
        let before = linear_bonus(&state, &phi, 1.0).unwrap();
        assert_abs_diff_eq!(2.0 * before, linear_bonus(&state, &phi, 2.0).unwrap(), epsilon = 1e-15);

        // Sherman–Morrison: with Σ = I and v the centered query, the squared
        // norm drops from ‖v‖² to ‖v‖² − ‖v‖⁴/(1+‖v‖²).
        let v = [0.4, -0.6];
        let mut updated = state.clone();
        updated.push(&v).unwrap();
        let after = linear_bonus(&updated, &phi, 1.0).unwrap();
        let n2: f64 = v.iter().map(|a| a * a).sum();
        assert_abs_diff_eq!(after * after, n2 - n2 * n2 / (1.0 + n2), epsilon = 1e-14);
        assert!(after < before);
    }

    #[test]
    fn mean_reference_feature_matches_closed_form() {
        let env = Environment::new(EnvConfig::default()).unwrap();
        let mut rng = stream_rng(0, Stream::MonteCarlo);
        let est = mean_ref_feature(&env, 10_000, &mut rng);
        // E[x] = 1/2 per coordinate under the uniform context law
        let a_bar: Vec<f64> = (0..env.k)
            .map(|j| env.actions.iter().map(|a| a[j]).sum::<f64>() / env.m() as f64)
            .collect();
        for i in 0..env.k {
            for j in 0..env.k {
                let exact = env.truth.scale() * 0.5 * a_bar[j];
                assert!((est[i * env.k + j] - exact).abs() < 0.02 * env.truth.scale());
            }
        }
    }
}
