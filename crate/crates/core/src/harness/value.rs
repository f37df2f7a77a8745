//! Regularized values `J_f(π|x) = Σ_a π(a) r*(x, a) − D_f(π ‖ π₀)/η` and
//! suboptimality gaps.

use crate::divergence::{divergence_value, FDivergence};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::policy::{optimal_policy_row, DiscretePolicy};

/// Tolerance below zero accepted for a computed suboptimality.
pub const SUBOPT_SLACK: f64 = 1e-9;

/// Value of `policy` against an explicit reward row.
pub fn policy_value(spec: FDivergence, ref_row: &[f64], rewards_row: &[f64], eta: f64, policy: &[f64]) -> Result<f64> {
    if policy.len() != rewards_row.len() {
        return Err(Error::Shape("policy and reward rows differ in length".into()));
    }
    let reward: f64 = policy.iter().zip(rewards_row).map(|(p, r)| p * r).sum();
    Ok(reward - divergence_value(policy, ref_row, spec)? / eta)
}

/// `J_f(π|x)` under the environment's true reward.
pub fn value_at_context(env: &Environment, spec: FDivergence, eta: f64, x: &[f64], policy: &DiscretePolicy) -> Result<f64> {
    policy_value(spec, env.ref_row(x), &env.true_rewards(x), eta, policy.probs())
}

/// `J_f(π*|x) − J_f(π|x)` for a given reward row.
pub fn row_suboptimality(spec: FDivergence, ref_row: &[f64], rewards_row: &[f64], eta: f64, policy: &[f64]) -> Result<f64> {
    let star = optimal_policy_row(spec, ref_row, rewards_row, eta)?;
    let best = policy_value(spec, ref_row, rewards_row, eta, star.probs())?;
    checked_gap(best - policy_value(spec, ref_row, rewards_row, eta, policy)?)
}

pub(crate) fn checked_gap(gap: f64) -> Result<f64> {
    if gap < -SUBOPT_SLACK || gap.is_nan() {
        return Err(Error::Numerical(format!("negative suboptimality {gap:e}")));
    }
    Ok(gap)
}

/// `J_f(π*|x) − J_f(π|x)` under the environment's true reward.
pub fn suboptimality(env: &Environment, spec: FDivergence, eta: f64, x: &[f64], policy: &DiscretePolicy) -> Result<f64> {
    row_suboptimality(spec, env.ref_row(x), &env.true_rewards(x), eta, policy.probs())
}

/// Per-context values over a pool with their mean and standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub per_context: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
}

impl ValueReport {
    pub fn from_values(per_context: Vec<f64>) -> Self {
        let n = per_context.len() as f64;
        let mean = per_context.iter().sum::<f64>() / n;
        let var = if per_context.len() > 1 {
            per_context.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            per_context,
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

/// Values of the context-dependent policy `policy_at` over `contexts`.
pub fn value_report(
    env: &Environment,
    spec: FDivergence,
    eta: f64,
    contexts: &[Vec<f64>],
    mut policy_at: impl FnMut(&[f64]) -> Result<DiscretePolicy>,
) -> Result<ValueReport> {
    let values = contexts
        .iter()
        .map(|x| value_at_context(env, spec, eta, x, &policy_at(x)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ValueReport::from_values(values))
}
