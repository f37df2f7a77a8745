//! Optimism with absolute (noisy scalar) reward feedback.

use super::linear::Estimate;
use super::{base_record, BonusBackend, RunnerConfig, StepRecord, Tracker};
use crate::env::{stream_rng, Environment, Stream};
use crate::error::Result;
use crate::harness::value::row_suboptimality;
use crate::policy::{optimal_policy_with_lambda, DiscretePolicy};
use crate::reward::{argmax_lowest, feature, FiniteRewardClass, LinearRewardModel, RidgeAccumulator};
use crate::uncertainty::{beta_reward_feedback, bonus_rf, confidence_set_update, ConfidenceSet, GramState, PairStats};

/// Least-squares member of a finite class with its confidence set.
struct ClassFit {
    fit: usize,
    set: ConfidenceSet,
    stats: PairStats,
}

enum RfEstimate {
    Reference,
    Class(ClassFit),
    Linear(Estimate),
}

impl RfEstimate {
    fn policy(
        &self,
        env: &Environment,
        cfg: &RunnerConfig,
        class: Option<&FiniteRewardClass>,
        beta_rf: f64,
        x: &[f64],
    ) -> Result<(DiscretePolicy, f64)> {
        let ref_row = env.ref_row(x);
        match self {
            RfEstimate::Reference => Ok((DiscretePolicy::new(ref_row.to_vec())?, 0.0)),
            RfEstimate::Linear(e) => e.policy(env, cfg.divergence, cfg.eta, x),
            RfEstimate::Class(state) => {
                let class = class.expect("class backend carries its class");
                let mut optimistic = Vec::with_capacity(env.m());
                for a in &env.actions {
                    let values: Vec<f64> = class.members.iter().map(|r| r.value(x, a)).collect();
                    optimistic.push(values[state.fit] + bonus_rf(&state.set, &state.stats, &values, cfg.xi, beta_rf)?);
                }
                let (pi, sol) = optimal_policy_with_lambda(cfg.divergence, ref_row, &optimistic, cfg.eta)?;
                Ok((pi, sol.residual))
            }
        }
    }
}

/// One action per round from `π_t`, a noisy reward, a least-squares refit
/// and `π_{t+1}` optimal for the fitted reward plus a bonus.
///
/// With the `eluder_finite` backend the fit is the class member of least
/// squared error and the bonus is `min(1, β_RF U_RF)` with
/// `β_RF = 16 log(N T / δ)`. With the `linear` backend the fit is ridge
/// regression and the bonus is `β ‖φ(x, a)‖_{Σ_t⁻¹}`.
pub fn run_optimism_rf(env: &Environment, cfg: &RunnerConfig) -> Result<Vec<StepRecord>> {
    let spec = cfg.divergence;
    let eta = cfg.eta;
    let scale = env.truth.scale();
    let d = env.k * env.k;
    let mut tracker = Tracker::new(env, cfg, true)?;

    let class = match cfg.backend {
        BonusBackend::EluderFinite => {
            let mut rng = stream_rng(cfg.seed, Stream::Class);
            Some(FiniteRewardClass::random_with_truth(&env.truth, cfg.class_size, &mut rng)?)
        }
        BonusBackend::Linear => None,
    };
    let n = class.as_ref().map_or(0, FiniteRewardClass::len);
    let beta_rf = beta_reward_feedback(n.max(1), cfg.horizon, cfg.delta);
    let mut sse = vec![0.0; n];
    let mut stats = PairStats::new(n);
    let mut ridge = RidgeAccumulator::new(d);
    let mut gram = GramState::new(d, cfg.xi, (d as f64).sqrt(), vec![0.0; d])?;
    let mut current = RfEstimate::Reference;

    for t in 1..=cfg.horizon {
        let round = |e: crate::error::Error| e.at_round(t);
        let x = env.sample_context(&mut tracker.ctx_rng);
        let (pi_t, residual) = current.policy(env, cfg, class.as_ref(), beta_rf, &x).map_err(round)?;
        let a = pi_t.sample(&mut tracker.policy_rng);
        let observed = env.reward_oracle(&x, a, &mut tracker.noise_rng);
        let subopt = row_suboptimality(spec, env.ref_row(&x), &env.true_rewards(&x), eta, pi_t.probs()).map_err(round)?;
        let pool = match &tracker.pool {
            Some(pool) => Some(
                pool.mean_subopt(env, spec, eta, |c| {
                    current.policy(env, cfg, class.as_ref(), beta_rf, c).map(|p| p.0)
                })
                .map_err(round)?,
            ),
            None => None,
        };

        current = match &class {
            Some(class) => {
                for (e, member) in sse.iter_mut().zip(&class.members) {
                    *e += (member.value(&x, &env.actions[a]) - observed).powi(2);
                }
                stats.push_action(class, &x, &env.actions[a]);
                let fit = argmin_lowest(&sse);
                RfEstimate::Class(ClassFit {
                    fit,
                    set: confidence_set_update(n, fit, &stats, cfg.xi, beta_rf * beta_rf),
                    stats: stats.clone(),
                })
            }
            None => {
                let phi = feature(&x, &env.actions[a], scale);
                ridge.push(&phi, observed);
                gram.push(&phi).map_err(round)?;
                let (theta, _) = ridge.solve(cfg.mle_reg.max(f64::MIN_POSITIVE)).map_err(round)?;
                RfEstimate::Linear(Estimate::Fitted {
                    model: LinearRewardModel::from_theta(env.k, &theta, scale).map_err(round)?,
                    bonus: (cfg.beta > 0.0).then(|| (gram.clone(), cfg.beta)),
                })
            }
        };

        let mut step = base_record(t, x, a, subopt, residual);
        step.reward = Some(observed);
        step.step_subopt_pool = pool;
        tracker.push(step);
    }
    Ok(tracker.steps)
}

fn argmin_lowest(values: &[f64]) -> usize {
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    argmax_lowest(&negated).index
}
