//! Derivative-based exploration: pairs drawn from the `h′`-weighted sampler
//! `π′` or the tilted pair `(π⁺, π⁻)`, and a weighted MLE refit.

use super::linear::Estimate;
use super::{base_record, RunnerConfig, StepRecord, Tracker};
use crate::env::Environment;
use crate::error::Result;
use crate::harness::value::row_suboptimality;
use crate::policy::{exploration_bundle, plus_minus_rows, sample_action_pair};
use crate::reward::{mle_fit, LinearRewardModel, PreferenceDataset, PreferenceRecord};

/// Each record's weight is `ω_raw` evaluated at the estimate that sampled it,
/// divided by the running mean of all stored `ω_raw`. The reported policy is
/// the regularized optimal policy of the current estimate (`π₀` at `θ = 0`).
pub fn run_derivative(env: &Environment, cfg: &RunnerConfig) -> Result<Vec<StepRecord>> {
    let spec = cfg.divergence;
    let eta = cfg.eta;
    let scale = env.truth.scale();
    let mut tracker = Tracker::new(env, cfg, true)?;
    let mut data = PreferenceDataset::new(env.actions.clone(), scale);
    let mut omega_raw: Vec<f64> = Vec::with_capacity(cfg.horizon);
    let mut omega_total = 0.0;
    let mut model = LinearRewardModel::zeros(env.k, scale);

    for t in 1..=cfg.horizon {
        let round = |e: crate::error::Error| e.at_round(t);
        let x = env.sample_context(&mut tracker.ctx_rng);
        let rewards = model.rewards_row(&x, &env.actions);
        let bundle = exploration_bundle(spec, env.ref_row(&x), &rewards, eta).map_err(round)?;
        let (plus, minus) = plus_minus_rows(&bundle, &rewards).map_err(round)?;
        let (i, j, branch) = sample_action_pair(&bundle, &plus, &minus, &mut tracker.policy_rng);
        let y = env.preference_oracle(&x, i, j, &mut tracker.pref_rng);

        let current = Estimate::Fitted {
            model: model.clone(),
            bonus: None,
        };
        let (pi, residual) = current.policy(env, spec, eta, &x).map_err(round)?;
        let subopt = row_suboptimality(spec, env.ref_row(&x), &env.true_rewards(&x), eta, pi.probs()).map_err(round)?;
        let pool = match &tracker.pool {
            Some(pool) => Some(
                pool.mean_subopt(env, spec, eta, |c| current.policy(env, spec, eta, c).map(|p| p.0))
                    .map_err(round)?,
            ),
            None => None,
        };

        data.push(PreferenceRecord::new(x.clone(), i, j, y));
        omega_raw.push(bundle.omega_raw);
        omega_total += bundle.omega_raw;
        let mean = omega_total / omega_raw.len() as f64;
        for (idx, w) in omega_raw.iter().enumerate() {
            data.set_weight(idx, w / mean);
        }
        let fit = mle_fit(&data, &model, cfg.mle_options()).map_err(round)?;
        model = fit.model;

        let mut step = base_record(t, x, i, subopt, residual);
        step.action_j = Some(j);
        step.label = Some(y);
        step.branch = Some(branch);
        step.step_subopt_pool = pool;
        step.mle_grad_norm = Some(fit.grad_norm);
        step.degenerate = bundle.degenerate;
        tracker.push(step);
    }
    Ok(tracker.steps)
}
