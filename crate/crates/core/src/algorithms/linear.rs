//! Learners on the linear Bradley–Terry class: optimism with an elliptical
//! bonus, greedy sampling and uniform sampling.

use rand::Rng;

use super::{base_record, RunnerConfig, StepRecord, Tracker};
use crate::divergence::FDivergence;
use crate::env::{stream_rng, Environment, Stream};
use crate::error::Result;
use crate::harness::value::row_suboptimality;
use crate::policy::{optimal_policy_with_lambda, DiscretePolicy};
use crate::reward::{feature, feature_diff, mle_fit, LinearRewardModel, PreferenceDataset, PreferenceRecord};
use crate::uncertainty::{linear_bonus, mean_ref_feature, GramState};

/// A published policy: `π₀`, or the optimal policy of a fitted reward plus
/// an optional elliptical bonus.
#[derive(Debug, Clone)]
pub(crate) enum Estimate {
    Reference,
    Fitted {
        model: LinearRewardModel,
        bonus: Option<(GramState, f64)>,
    },
}

impl Estimate {
    pub fn rewards(&self, env: &Environment, x: &[f64]) -> Result<Option<Vec<f64>>> {
        match self {
            Estimate::Reference => Ok(None),
            Estimate::Fitted { model, bonus } => {
                let mut row = model.rewards_row(x, &env.actions);
                if let Some((gram, beta)) = bonus {
                    for (r, a) in row.iter_mut().zip(&env.actions) {
                        *r += linear_bonus(gram, &feature(x, a, model.scale()), *beta)?;
                    }
                }
                Ok(Some(row))
            }
        }
    }

    /// Policy at `x` with the residual of its normalizer.
    pub fn policy(&self, env: &Environment, spec: FDivergence, eta: f64, x: &[f64]) -> Result<(DiscretePolicy, f64)> {
        match self.rewards(env, x)? {
            None => Ok((DiscretePolicy::new(env.ref_row(x).to_vec())?, 0.0)),
            Some(row) => {
                let (pi, sol) = optimal_policy_with_lambda(spec, env.ref_row(x), &row, eta)?;
                Ok((pi, sol.residual))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Sampler {
    /// `a¹ ~ π_t`, `a² ~ π_{t−1}` with an optimism level `β` (0 is greedy).
    Optimistic { beta: f64 },
    Uniform,
}

/// Optimism with the elliptical bonus `β ‖φ(x, a) − φ̄‖_{Σ_t⁻¹}`.
pub fn run_optimism(env: &Environment, cfg: &RunnerConfig) -> Result<Vec<StepRecord>> {
    run_pairwise(env, cfg, Sampler::Optimistic { beta: cfg.beta })
}

/// Optimism with the bonus switched off.
pub fn run_greedy(env: &Environment, cfg: &RunnerConfig) -> Result<Vec<StepRecord>> {
    run_pairwise(env, cfg, Sampler::Optimistic { beta: 0.0 })
}

/// Uniform pairs; reports the optimal policy of the current MLE reward.
pub fn run_uniform(env: &Environment, cfg: &RunnerConfig) -> Result<Vec<StepRecord>> {
    run_pairwise(env, cfg, Sampler::Uniform)
}

fn run_pairwise(env: &Environment, cfg: &RunnerConfig, sampler: Sampler) -> Result<Vec<StepRecord>> {
    let spec = cfg.divergence;
    let eta = cfg.eta;
    let scale = env.truth.scale();
    let d = env.k * env.k;
    let mut tracker = Tracker::new(env, cfg, true)?;
    let mut data = PreferenceDataset::new(env.actions.clone(), scale);

    let beta = match sampler {
        Sampler::Optimistic { beta } => beta,
        Sampler::Uniform => 0.0,
    };
    let mut gram = if beta > 0.0 {
        let mut rng = stream_rng(cfg.seed, Stream::MonteCarlo);
        let mean = mean_ref_feature(env, cfg.mean_feature_samples, &mut rng);
        Some(GramState::new(d, cfg.xi, (d as f64).sqrt(), mean)?)
    } else {
        None
    };

    let mut current = Estimate::Reference;
    let mut previous = Estimate::Reference;
    let mut model = LinearRewardModel::zeros(env.k, scale);

    for t in 1..=cfg.horizon {
        let round = |e: crate::error::Error| e.at_round(t);
        let x = env.sample_context(&mut tracker.ctx_rng);
        let (pi_t, residual) = current.policy(env, spec, eta, &x).map_err(round)?;
        let (i, j) = match sampler {
            Sampler::Optimistic { .. } => {
                let (pi_prev, _) = previous.policy(env, spec, eta, &x).map_err(round)?;
                (pi_t.sample(&mut tracker.policy_rng), pi_prev.sample(&mut tracker.policy_rng))
            }
            Sampler::Uniform => (
                tracker.policy_rng.random_range(0..env.m()),
                tracker.policy_rng.random_range(0..env.m()),
            ),
        };
        let y = env.preference_oracle(&x, i, j, &mut tracker.pref_rng);

        let subopt = row_suboptimality(spec, env.ref_row(&x), &env.true_rewards(&x), eta, pi_t.probs()).map_err(round)?;
        let pool = match &tracker.pool {
            Some(pool) => Some(
                pool.mean_subopt(env, spec, eta, |c| current.policy(env, spec, eta, c).map(|p| p.0))
                    .map_err(round)?,
            ),
            None => None,
        };

        data.push(PreferenceRecord::new(x.clone(), i, j, y));
        if let Some(g) = gram.as_mut() {
            g.push(&feature_diff(&x, &env.actions[i], &env.actions[j], scale)).map_err(round)?;
        }
        let fit = mle_fit(&data, &model, cfg.mle_options()).map_err(round)?;
        model = fit.model;

        let mut step = base_record(t, x, i, subopt, residual);
        step.action_j = Some(j);
        step.label = Some(y);
        step.step_subopt_pool = pool;
        step.mle_grad_norm = Some(fit.grad_norm);
        tracker.push(step);

        let next = Estimate::Fitted {
            model: model.clone(),
            bonus: gram.as_ref().map(|g| (g.clone(), beta)),
        };
        previous = std::mem::replace(&mut current, next);
    }
    Ok(tracker.steps)
}
