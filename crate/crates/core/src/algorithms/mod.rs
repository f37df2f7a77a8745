//! Online learners. Each run is a single-threaded state machine over an
//! [`Environment`] that logs one [`StepRecord`] per round.

mod derivative;
mod eluder;
mod linear;
mod reward_feedback;

use serde::{Deserialize, Serialize};

use crate::divergence::FDivergence;
use crate::env::{stream_rng, Environment, Stream};
use crate::error::{Error, Result};
use crate::harness::value::{checked_gap, policy_value};
use crate::policy::{optimal_policy_with_lambda, Branch, DiscretePolicy};
use crate::reward::MleOptions;

pub use derivative::run_derivative;
pub use eluder::run_optimism_eluder;
pub use linear::{run_greedy, run_optimism, run_uniform};
pub use reward_feedback::run_optimism_rf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Optimism,
    Derivative,
    Greedy,
    Uniform,
    OptimismRf,
}

impl Algo {
    pub const ALL: [Algo; 5] = [Algo::Optimism, Algo::Derivative, Algo::Greedy, Algo::Uniform, Algo::OptimismRf];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Optimism => "optimism",
            Algo::Derivative => "derivative",
            Algo::Greedy => "greedy",
            Algo::Uniform => "uniform",
            Algo::OptimismRf => "optimism_rf",
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// How optimism quantifies uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusBackend {
    /// Eluder-style uncertainty over a finite class that contains `r*`.
    EluderFinite,
    /// Elliptical bonus of linear features.
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunnerConfig {
    pub algo: Algo,
    pub divergence: FDivergence,
    pub eta: f64,
    pub horizon: usize,
    /// Optimism level of the linear backend.
    pub beta: f64,
    pub backend: BonusBackend,
    pub xi: f64,
    pub delta: f64,
    /// Size of the finite class used by the Eluder backend.
    pub class_size: usize,
    pub mle_reg: f64,
    pub mle_tol: f64,
    pub mle_max_iter: usize,
    pub seed: u64,
    /// Contexts in the fixed evaluation pool; 0 disables the pool column.
    pub pool_size: usize,
    /// Monte-Carlo contexts for the mean reference feature.
    pub mean_feature_samples: usize,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Optimism,
            divergence: FDivergence::ReverseKl,
            eta: DEFAULT_ETA,
            horizon: 2000,
            beta: 0.1,
            backend: BonusBackend::Linear,
            xi: 1.0,
            delta: 0.1,
            class_size: 20,
            mle_reg: 1e-6,
            mle_tol: 1e-9,
            mle_max_iter: 100,
            seed: 0,
            pool_size: 256,
            mean_feature_samples: 10_000,
        }
    }
}

/// Default regularization strength of the experiments.
pub const DEFAULT_ETA: f64 = 10.0;

impl RunnerConfig {
    pub fn mle_options(&self) -> MleOptions {
        MleOptions {
            reg: self.mle_reg,
            tol: self.mle_tol,
            max_iter: self.mle_max_iter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        if !(self.xi > 0.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("need xi > 0 and delta in (0, 1)".into()));
        }
        if !(self.mle_reg >= 0.0) || !(self.mle_tol > 0.0) {
            return Err(Error::Config("need mle_reg >= 0 and mle_tol > 0".into()));
        }
        if self.backend == BonusBackend::EluderFinite {
            if !matches!(self.algo, Algo::Optimism | Algo::OptimismRf) {
                return Err(Error::Config(format!(
                    "the eluder_finite backend supports optimism and optimism_rf, not {}",
                    self.algo
                )));
            }
            if self.class_size == 0 {
                return Err(Error::Config("class_size must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One round of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub action_i: usize,
    /// Second action of a comparison; absent under absolute feedback.
    pub action_j: Option<usize>,
    pub label: Option<u8>,
    /// Observed noisy reward under absolute feedback.
    pub reward: Option<f64>,
    pub branch: Option<Branch>,
    /// Suboptimality of the round's policy at the sampled context.
    pub step_subopt_sampled: f64,
    /// Mean suboptimality over the evaluation pool.
    pub step_subopt_pool: Option<f64>,
    pub cum_regret: f64,
    pub lambda_residual: f64,
    pub mle_grad_norm: Option<f64>,
    /// Whether the optimistic gap fell below the true gap on the sampled pair.
    pub optimism_violation: Option<bool>,
    pub degenerate: bool,
}

impl StepRecord {
    /// The per-round regret added to `cum_regret`: the suboptimality at the
    /// sampled context, an unbiased estimate of the expected suboptimality.
    pub fn regret_increment(&self) -> f64 {
        self.step_subopt_sampled
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunnerConfig,
    pub steps: Vec<StepRecord>,
}

impl RunResult {
    pub fn final_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_regret)
    }
}

/// Runs the learner selected by `cfg.algo` (and `cfg.backend`).
pub fn run(env: &Environment, cfg: &RunnerConfig) -> Result<RunResult> {
    cfg.validate()?;
    let steps = match (cfg.algo, cfg.backend) {
        (Algo::Optimism, BonusBackend::Linear) => run_optimism(env, cfg)?,
        (Algo::Optimism, BonusBackend::EluderFinite) => run_optimism_eluder(env, cfg)?,
        (Algo::Greedy, _) => run_greedy(env, cfg)?,
        (Algo::Uniform, _) => run_uniform(env, cfg)?,
        (Algo::Derivative, _) => run_derivative(env, cfg)?,
        (Algo::OptimismRf, _) => run_optimism_rf(env, cfg)?,
    };
    Ok(RunResult {
        config: cfg.clone(),
        steps,
    })
}

/// Fixed evaluation contexts with cached optimal values.
#[derive(Debug, Clone)]
pub struct EvalPool {
    pub contexts: Vec<Vec<f64>>,
    truth_rows: Vec<Vec<f64>>,
    star_values: Vec<f64>,
}

impl EvalPool {
    pub fn new(env: &Environment, spec: FDivergence, eta: f64, size: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::Pool);
        let contexts: Vec<Vec<f64>> = (0..size).map(|_| env.sample_context(&mut rng)).collect();
        let truth_rows: Vec<Vec<f64>> = contexts.iter().map(|x| env.true_rewards(x)).collect();
        let star_values = contexts
            .iter()
            .zip(&truth_rows)
            .map(|(x, r)| {
                let (star, _) = optimal_policy_with_lambda(spec, env.ref_row(x), r, eta)?;
                policy_value(spec, env.ref_row(x), r, eta, star.probs())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            contexts,
            truth_rows,
            star_values,
        })
    }

    /// Mean suboptimality of the context-dependent policy `policy_at`.
    pub fn mean_subopt(
        &self,
        env: &Environment,
        spec: FDivergence,
        eta: f64,
        mut policy_at: impl FnMut(&[f64]) -> Result<DiscretePolicy>,
    ) -> Result<f64> {
        let mut total = 0.0;
        for ((x, r), star) in self.contexts.iter().zip(&self.truth_rows).zip(&self.star_values) {
            let pi = policy_at(x)?;
            total += checked_gap(star - policy_value(spec, env.ref_row(x), r, eta, pi.probs())?)?;
        }
        Ok(total / self.contexts.len() as f64)
    }
}

/// Shared bookkeeping of a run: streams, the evaluation pool and the log.
pub(crate) struct Tracker {
    pub ctx_rng: rand_chacha::ChaCha8Rng,
    pub pref_rng: rand_chacha::ChaCha8Rng,
    pub policy_rng: rand_chacha::ChaCha8Rng,
    pub noise_rng: rand_chacha::ChaCha8Rng,
    pub pool: Option<EvalPool>,
    cum: f64,
    pub steps: Vec<StepRecord>,
}

impl Tracker {
    pub fn new(env: &Environment, cfg: &RunnerConfig, use_pool: bool) -> Result<Self> {
        let pool = if use_pool && cfg.pool_size > 0 {
            Some(EvalPool::new(env, cfg.divergence, cfg.eta, cfg.pool_size, cfg.seed)?)
        } else {
            None
        };
        Ok(Self {
            ctx_rng: stream_rng(cfg.seed, Stream::Context),
            pref_rng: stream_rng(cfg.seed, Stream::Preference),
            policy_rng: stream_rng(cfg.seed, Stream::Policy),
            noise_rng: stream_rng(cfg.seed, Stream::Noise),
            pool,
            cum: 0.0,
            steps: Vec::with_capacity(cfg.horizon),
        })
    }

    /// Fills `cum_regret` and appends the record.
    pub fn push(&mut self, mut step: StepRecord) {
        self.cum += step.regret_increment();
        step.cum_regret = self.cum;
        self.steps.push(step);
    }
}

/// A record skeleton with the fields every learner fills.
pub(crate) fn base_record(t: usize, x: Vec<f64>, action_i: usize, subopt: f64, lambda_residual: f64) -> StepRecord {
    StepRecord {
        t,
        x,
        action_i,
        action_j: None,
        label: None,
        reward: None,
        branch: None,
        step_subopt_sampled: subopt,
        step_subopt_pool: None,
        cum_regret: 0.0,
        lambda_residual,
        mle_grad_norm: None,
        optimism_violation: None,
        degenerate: false,
    }
}
