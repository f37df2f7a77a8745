//! Numerical checks of the structural identities behind the solver and the
//! learners. Each suite returns a report judged against [`tol`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};

use super::value::policy_value;
use crate::divergence::{constant_c, constant_m, FDivergence, HullSampling};
use crate::env::{stream_rng, EnvConfig, Environment, Stream};
use crate::error::Result;
use crate::policy::{exploration_bundle, kkt_residual, optimal_policy_with_lambda};
use crate::reward::{feature, LinearRewardModel, RewardTable};

/// A random full-support distribution with every entry at least `floor / m`.
fn random_simplex<R: Rng>(m: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| (1.0 - floor) * w / total + floor / m as f64).collect()
}

/// A solver instance: `k ≤ 5`, `m ≤ 10`, `η ∈ {0.5, 1, 2}`, rewards of a
/// random unit-box linear model at a random context.
struct Instance {
    ref_row: Vec<f64>,
    rewards: Vec<f64>,
    eta: f64,
}

fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let k = rng.random_range(1..=5);
    let m = rng.random_range(2..=10);
    let model = LinearRewardModel::random_unit(k, rng);
    let x: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let actions: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| rng.random::<f64>()).collect()).collect();
    Instance {
        ref_row: random_simplex(m, 0.05, rng),
        rewards: model.rewards_row(&x, &actions),
        eta: [0.5, 1.0, 2.0][rng.random_range(0..3)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub instances: usize,
    /// Largest `|Σ_a π₀(a) h(η(r(a) − λ)) − 1|`.
    pub max_normalization: f64,
    pub max_kkt: f64,
    /// Largest deviation from the `π₀`-weighted softmax (reverse KL only).
    pub max_softmax_dev: Option<f64>,
}

/// Normalization and KKT residuals over random instances.
pub fn solver_suite(spec: FDivergence, instances: usize, seed: u64) -> Result<SolverReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SolverReport {
        instances,
        max_normalization: 0.0,
        max_kkt: 0.0,
        max_softmax_dev: (spec == FDivergence::ReverseKl).then_some(0.0),
    };
    for _ in 0..instances {
        let inst = random_instance(&mut rng);
        let (pi, sol) = optimal_policy_with_lambda(spec, &inst.ref_row, &inst.rewards, inst.eta)?;
        let mass: f64 = pi.probs().iter().sum();
        report.max_normalization = report.max_normalization.max(sol.residual).max((mass - 1.0).abs());
        report.max_kkt = report
            .max_kkt
            .max(kkt_residual(spec, &inst.ref_row, &inst.rewards, inst.eta, &pi, sol.lambda));
        if let Some(dev) = report.max_softmax_dev.as_mut() {
            let top = inst.rewards.iter().cloned().fold(f64::MIN, f64::max);
            let w: Vec<f64> = inst
                .ref_row
                .iter()
                .zip(&inst.rewards)
                .map(|(p, r)| p * (inst.eta * (r - top)).exp())
                .collect();
            let z: f64 = w.iter().sum();
            for (p, w) in pi.probs().iter().zip(&w) {
                *dev = dev.max((p - w / z).abs());
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceReport {
    pub instances: usize,
    pub max_policy_dev: f64,
    /// Largest `|λ(r + A) − λ(r) − A|`.
    pub max_lambda_dev: f64,
}

/// Shifting every reward of a context by `A ∈ [−5, 5]` leaves the optimal
/// policy unchanged and shifts `λ` by `A`.
pub fn invariance_suite(spec: FDivergence, instances: usize, seed: u64) -> Result<InvarianceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InvarianceReport {
        instances,
        max_policy_dev: 0.0,
        max_lambda_dev: 0.0,
    };
    for _ in 0..instances {
        let inst = random_instance(&mut rng);
        let shift = rng.random_range(-5.0..5.0);
        let shifted: Vec<f64> = inst.rewards.iter().map(|r| r + shift).collect();
        let (p, l) = optimal_policy_with_lambda(spec, &inst.ref_row, &inst.rewards, inst.eta)?;
        let (q, ls) = optimal_policy_with_lambda(spec, &inst.ref_row, &shifted, inst.eta)?;
        let dev = p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        report.max_policy_dev = report.max_policy_dev.max(dev);
        report.max_lambda_dev = report.max_lambda_dev.max((ls.lambda - l.lambda - shift).abs());
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsReport {
    pub instances: usize,
    pub min_c: f64,
    pub max_c: f64,
    pub min_m: f64,
    pub max_m: f64,
    /// Largest `M − C` over instances.
    pub max_m_minus_c: f64,
}

/// Contexts per class instance; with ten actions this gives about 256
/// (context, action) pairs.
pub const CONSTANT_CONTEXTS: usize = 26;

/// `C` and `M` over random classes of 2 to 5 linear members on a 5×10
/// instance, evaluated on [`CONSTANT_CONTEXTS`] contexts.
pub fn constants_suite(spec: FDivergence, eta: f64, instances: usize, seed: u64) -> Result<ConstantsReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConstantsReport {
        instances,
        min_c: f64::INFINITY,
        max_c: f64::NEG_INFINITY,
        min_m: f64::INFINITY,
        max_m: f64::NEG_INFINITY,
        max_m_minus_c: f64::NEG_INFINITY,
    };
    for idx in 0..instances {
        let env = Environment::new(EnvConfig {
            seed: rng.random(),
            ..EnvConfig::default()
        })?;
        let contexts: Vec<Vec<f64>> = (0..CONSTANT_CONTEXTS).map(|_| env.sample_context(&mut rng)).collect();
        let size = rng.random_range(2..=5);
        let members: Vec<RewardTable> = (0..size)
            .map(|_| LinearRewardModel::random_unit(env.k, &mut rng).table(&contexts, &env.actions))
            .collect();
        let refs: Vec<Vec<f64>> = contexts.iter().map(|x| env.ref_row(x).to_vec()).collect();
        let sampling = HullSampling {
            seed: seed.wrapping_add(idx as u64),
            ..HullSampling::default()
        };
        let c = constant_c(spec, &members, eta, &refs, sampling)?;
        let m = constant_m(spec, &members, eta, &refs, sampling)?;
        report.min_c = report.min_c.min(c);
        report.max_c = report.max_c.max(c);
        report.min_m = report.min_m.min(m);
        report.max_m = report.max_m.max(m);
        report.max_m_minus_c = report.max_m_minus_c.max(m - c);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradHessReport {
    /// `‖∇_θ J‖_∞` at `θ*` by central differences.
    pub grad_inf: f64,
    /// Finite-difference Hessian, row-major `d × d`.
    pub hessian_fd: Vec<f64>,
    /// `−η E_x[T̄(x) Cov_{a∼π′}(φ(x, a))]`, row-major.
    pub hessian_pred: Vec<f64>,
    pub max_abs_dev: f64,
    /// `max_abs_dev / max |hessian_pred|`.
    pub max_rel_dev: f64,
}

/// Pool-averaged regularized value of the optimal policy of `r_θ`.
fn pool_value(spec: FDivergence, env: &Environment, eta: f64, theta: &[f64], pool: &[Vec<f64>], truth_rows: &[Vec<f64>]) -> Result<f64> {
    let model = LinearRewardModel::from_theta(env.k, theta, env.truth.scale())?;
    let mut total = 0.0;
    for (x, truth) in pool.iter().zip(truth_rows) {
        let (pi, _) = optimal_policy_with_lambda(spec, env.ref_row(x), &model.rewards_row(x, &env.actions), eta)?;
        total += policy_value(spec, env.ref_row(x), truth, eta, pi.probs())?;
    }
    Ok(total / pool.len() as f64)
}

/// Finite-difference gradient and Hessian of `θ ↦ J_f(π_θ)` at `θ*` next to
/// the predicted Hessian `−η Σ¹_*`, both over the same context pool.
pub fn gradient_hessian_check(spec: FDivergence, env: &Environment, eta: f64, pool_size: usize, fd_step: f64, seed: u64) -> Result<GradHessReport> {
    let mut rng = stream_rng(seed, Stream::Pool);
    let pool: Vec<Vec<f64>> = (0..pool_size).map(|_| env.sample_context(&mut rng)).collect();
    let truth_rows: Vec<Vec<f64>> = pool.iter().map(|x| env.true_rewards(x)).collect();
    let theta = env.truth.theta().to_vec();
    let d = theta.len();
    let h = fd_step;
    let j = |delta: &[(usize, f64)]| {
        let mut t = theta.clone();
        for &(i, s) in delta {
            t[i] += s;
        }
        pool_value(spec, env, eta, &t, &pool, &truth_rows)
    };

    let center = j(&[])?;
    let mut grad_inf = 0.0f64;
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    for i in 0..d {
        plus[i] = j(&[(i, h)])?;
        minus[i] = j(&[(i, -h)])?;
        grad_inf = grad_inf.max(((plus[i] - minus[i]) / (2.0 * h)).abs());
    }
    let mut hessian_fd = vec![0.0; d * d];
    for i in 0..d {
        hessian_fd[i * d + i] = (plus[i] - 2.0 * center + minus[i]) / (h * h);
        for k in 0..i {
            let v = (j(&[(i, h), (k, h)])? - j(&[(i, h), (k, -h)])? - j(&[(i, -h), (k, h)])? + j(&[(i, -h), (k, -h)])?)
                / (4.0 * h * h);
            hessian_fd[i * d + k] = v;
            hessian_fd[k * d + i] = v;
        }
    }

    let mut hessian_pred = vec![0.0; d * d];
    let scale = env.truth.scale();
    for (x, truth) in pool.iter().zip(&truth_rows) {
        let bundle = exploration_bundle(spec, env.ref_row(x), truth, eta)?;
        let feats: Vec<Vec<f64>> = env.actions.iter().map(|a| feature(x, a, scale)).collect();
        let probs = bundle.pi_prime.probs();
        let mean: Vec<f64> = (0..d).map(|c| feats.iter().zip(probs).map(|(f, p)| p * f[c]).sum()).collect();
        for (f, &p) in feats.iter().zip(probs) {
            for r in 0..d {
                let fr = f[r] - mean[r];
                for c in 0..d {
                    hessian_pred[r * d + c] -= eta * bundle.t_bar * p * fr * (f[c] - mean[c]) / pool_size as f64;
                }
            }
        }
    }
    let max_abs_dev = hessian_fd
        .iter()
        .zip(&hessian_pred)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let max_pred = hessian_pred.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(GradHessReport {
        grad_inf,
        hessian_fd,
        hessian_pred,
        max_abs_dev,
        max_rel_dev: max_abs_dev / max_pred,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionEntry {
    /// `J_f(π*) − J_f(π_r)` averaged over the pool.
    pub gap: f64,
    /// `η C E_{x, a∼π_r}[(r* − r)²]`.
    pub bound: f64,
    pub c: f64,
}

impl DecompositionEntry {
    pub fn violated(&self, slack: f64) -> bool {
        self.gap > self.bound + slack
    }
}

/// Checks `J_f(π*) − J_f(π_r) ≤ η C E[(r* − r)²]` for candidate reward tables
/// over `contexts`, with `C` computed on the two-point class `{r, r*}`.
pub fn value_decomposition_check(
    spec: FDivergence,
    env: &Environment,
    eta: f64,
    contexts: &[Vec<f64>],
    candidates: &[RewardTable],
    sampling: HullSampling,
) -> Result<Vec<DecompositionEntry>> {
    let truth = env.truth.table(contexts, &env.actions);
    let refs: Vec<Vec<f64>> = contexts.iter().map(|x| env.ref_row(x).to_vec()).collect();
    candidates
        .iter()
        .map(|cand| {
            let c = constant_c(spec, &[cand.clone(), truth.clone()], eta, &refs, sampling)?;
            let mut gap = 0.0;
            let mut sq = 0.0;
            for ((r, rs), p0) in cand.rows().iter().zip(truth.rows()).zip(&refs) {
                let (pi_r, _) = optimal_policy_with_lambda(spec, p0, r, eta)?;
                let (pi_s, _) = optimal_policy_with_lambda(spec, p0, rs, eta)?;
                gap += policy_value(spec, p0, rs, eta, pi_s.probs())? - policy_value(spec, p0, rs, eta, pi_r.probs())?;
                sq += pi_r.probs().iter().zip(r).zip(rs).map(|((p, a), b)| p * (a - b).powi(2)).sum::<f64>();
            }
            let n = contexts.len() as f64;
            Ok(DecompositionEntry {
                gap: gap / n,
                bound: eta * c * sq / n,
                c,
            })
        })
        .collect()
}

/// `count` dominating perturbations `r* + |ε|` with `ε ~ N(0, sigma²)`
/// entrywise, plus the constant lift `r* + 0.1` first.
pub fn dominating_perturbations(env: &Environment, contexts: &[Vec<f64>], count: usize, sigma: f64, seed: u64) -> Vec<RewardTable> {
    let truth = env.truth.table(contexts, &env.actions);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    let mut out = vec![truth.map(|_, _, v| v + 0.1)];
    while out.len() < count {
        out.push(truth.map(|_, _, v| v + noise.sample(&mut rng).abs()));
    }
    out.truncate(count);
    out
}

/// Tolerances of the check suites.
pub mod tol {
    pub const NORMALIZATION: f64 = 1e-10;
    pub const KKT: f64 = 1e-7;
    pub const SOFTMAX: f64 = 1e-8;
    pub const INVARIANCE: f64 = 1e-8;
    pub const CONSTANTS: f64 = 1e-9;
    pub const GRADIENT: f64 = 1e-4;
    pub const HESSIAN: f64 = 1e-3;
    pub const DECOMPOSITION: f64 = 1e-6;
}

impl SolverReport {
    pub fn passes(&self) -> bool {
        self.max_normalization <= tol::NORMALIZATION
            && self.max_kkt <= tol::KKT
            && self.max_softmax_dev.is_none_or(|d| d <= tol::SOFTMAX)
    }
}

impl InvarianceReport {
    pub fn passes(&self) -> bool {
        self.max_policy_dev <= tol::INVARIANCE && self.max_lambda_dev <= tol::INVARIANCE
    }
}

impl ConstantsReport {
    /// `M ≤ C` always, plus the per-divergence ordering.
    pub fn passes(&self, spec: FDivergence) -> bool {
        let ordered = self.max_m_minus_c <= tol::CONSTANTS;
        ordered
            && match spec {
                FDivergence::ReverseKl => {
                    (self.min_c - 1.0).abs() <= tol::CONSTANTS
                        && (self.max_c - 1.0).abs() <= tol::CONSTANTS
                        && (self.min_m - 1.0).abs() <= tol::CONSTANTS
                        && (self.max_m - 1.0).abs() <= tol::CONSTANTS
                }
                FDivergence::Chi2MixedKl | FDivergence::XlogxMinusLogx => self.max_c < 1.0,
                FDivergence::ForwardKl => self.min_m >= 1.0,
                FDivergence::Js => true,
            }
    }
}

impl GradHessReport {
    pub fn passes(&self) -> bool {
        self.grad_inf <= tol::GRADIENT && self.max_abs_dev <= tol::HESSIAN
    }
}

/// The gradient/Hessian check on a seeded `k = 3`, `m = 4` instance with a
/// pool of 10⁴ contexts and step 10⁻⁴.
pub fn gradient_hessian_default(spec: FDivergence, eta: f64, seed: u64) -> Result<GradHessReport> {
    let env = Environment::new(EnvConfig {
        k: 3,
        m: 4,
        seed,
        ..EnvConfig::default()
    })?;
    gradient_hessian_check(spec, &env, eta, 10_000, 1e-4, seed)
}

/// Contexts of the value-decomposition sweep.
pub const DECOMPOSITION_CONTEXTS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    pub entries: Vec<DecompositionEntry>,
    pub violations: usize,
    /// Largest `gap − bound`.
    pub worst_margin: f64,
}

/// `count` dominating perturbations of a seeded 5×10 instance, checked on
/// [`DECOMPOSITION_CONTEXTS`] contexts.
pub fn value_decomposition_sweep(spec: FDivergence, eta: f64, count: usize, seed: u64) -> Result<DecompositionReport> {
    let env = Environment::new(EnvConfig {
        seed,
        ..EnvConfig::default()
    })?;
    let mut rng = stream_rng(seed, Stream::MonteCarlo);
    let contexts: Vec<Vec<f64>> = (0..DECOMPOSITION_CONTEXTS).map(|_| env.sample_context(&mut rng)).collect();
    let candidates = dominating_perturbations(&env, &contexts, count, 0.1, seed);
    let entries = value_decomposition_check(spec, &env, eta, &contexts, &candidates, HullSampling { seed, ..HullSampling::default() })?;
    let violations = entries.iter().filter(|e| e.violated(tol::DECOMPOSITION)).count();
    let worst_margin = entries.iter().map(|e| e.gap - e.bound).fold(f64::NEG_INFINITY, f64::max);
    Ok(DecompositionReport {
        entries,
        violations,
        worst_margin,
    })
}
