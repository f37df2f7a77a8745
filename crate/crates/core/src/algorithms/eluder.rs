//! Optimism over a finite reward class with the Eluder-style pairwise bonus.
//!
//! The optimistic reward of round `s` averages the pairwise bonus under
//! `π_s`, so `π_{s+1}(·|x)` depends on `π_s(·|x)`. Policies are therefore
//! rebuilt at each queried context by replaying the stored per-round fits,
//! which is exact and affordable for small classes and horizons. The
//! evaluation pool is not used by this learner.

use super::{base_record, RunnerConfig, StepRecord, Tracker};
use crate::divergence::FDivergence;
use crate::env::{stream_rng, Environment, Stream};
use crate::error::Result;
use crate::harness::value::row_suboptimality;
use crate::policy::{optimal_policy_with_lambda, DiscretePolicy};
use crate::reward::{argmax_lowest, FiniteRewardClass, PreferenceRecord};
use crate::uncertainty::{beta_sq_pairwise, confidence_set_update, pairwise_bonus_matrix, ConfidenceSet, PairStats};

/// The estimator state after a prefix of the data.
struct FitState {
    mle: usize,
    set: ConfidenceSet,
    stats: PairStats,
}

struct Replay<'a> {
    env: &'a Environment,
    class: &'a FiniteRewardClass,
    spec: FDivergence,
    eta: f64,
    xi: f64,
    beta: f64,
}

impl Replay<'_> {
    /// Policies `π_1, …, π_t` at `x` (index `s − 1` holds `π_s`), with the
    /// normalizer residual of the last one. `states[s]` is the fit on the
    /// first `s` rounds.
    fn policies(&self, states: &[FitState], x: &[f64], t: usize) -> Result<(Vec<DiscretePolicy>, f64)> {
        let ref_row = self.env.ref_row(x);
        let rows: Vec<Vec<f64>> = self.class.members.iter().map(|r| r.rewards_row(x, &self.env.actions)).collect();
        let mut out = Vec::with_capacity(t);
        out.push(DiscretePolicy::new(ref_row.to_vec())?);
        let mut residual = 0.0;
        for state in &states[1..t] {
            let pi = out.last().expect("non-empty");
            let bonus = pairwise_bonus_matrix(&state.set, &state.stats, &rows, self.xi, self.beta)?;
            let optimistic: Vec<f64> = rows[state.mle]
                .iter()
                .zip(&bonus)
                .map(|(r, b)| r + b.iter().zip(pi.probs()).map(|(b, p)| b * p).sum::<f64>())
                .collect();
            let (next, sol) = optimal_policy_with_lambda(self.spec, ref_row, &optimistic, self.eta)?;
            residual = sol.residual;
            out.push(next);
        }
        Ok((out, residual))
    }
}

/// Optimism with a finite class that contains `r*` and radius
/// `β_T² = 4e log(N T / δ)`. Logs whether the optimistic gap of the sampled
/// pair dropped below the true gap.
pub fn run_optimism_eluder(env: &Environment, cfg: &RunnerConfig) -> Result<Vec<StepRecord>> {
    let spec = cfg.divergence;
    let eta = cfg.eta;
    let mut class_rng = stream_rng(cfg.seed, Stream::Class);
    let class = FiniteRewardClass::random_with_truth(&env.truth, cfg.class_size, &mut class_rng)?;
    let n = class.len();
    let beta_sq = beta_sq_pairwise(n, cfg.horizon, cfg.delta);
    let replay = Replay {
        env,
        class: &class,
        spec,
        eta,
        xi: cfg.xi,
        beta: beta_sq.sqrt(),
    };
    let mut tracker = Tracker::new(env, cfg, false)?;

    let empty = PairStats::new(n);
    let mut states = vec![FitState {
        mle: 0,
        set: confidence_set_update(n, 0, &empty, cfg.xi, beta_sq),
        stats: empty,
    }];
    let mut loglik = vec![0.0; n];
    let mut stats = PairStats::new(n);

    for t in 1..=cfg.horizon {
        let round = |e: crate::error::Error| e.at_round(t);
        let x = env.sample_context(&mut tracker.ctx_rng);
        let (pis, residual) = replay.policies(&states, &x, t).map_err(round)?;
        let pi_t = &pis[t - 1];
        let pi_prev = &pis[t.saturating_sub(2)];
        let i = pi_t.sample(&mut tracker.policy_rng);
        let j = pi_prev.sample(&mut tracker.policy_rng);
        let y = env.preference_oracle(&x, i, j, &mut tracker.pref_rng);
        let subopt = row_suboptimality(spec, env.ref_row(&x), &env.true_rewards(&x), eta, pi_t.probs()).map_err(round)?;

        // optimism check with the fit in force before this round's label
        let last = states.last().expect("non-empty");
        let gap = |r: &crate::reward::LinearRewardModel| r.value(&x, &env.actions[i]) - r.value(&x, &env.actions[j]);
        let rows: Vec<Vec<f64>> = class.members.iter().map(|r| r.rewards_row(&x, &env.actions)).collect();
        let bonus = pairwise_bonus_matrix(&last.set, &last.stats, &rows, cfg.xi, replay.beta).map_err(round)?;
        let violation = gap(&class.members[last.mle]) + bonus[i][j] < gap(&env.truth);

        let record = PreferenceRecord::new(x.clone(), i, j, y);
        for (ll, member) in loglik.iter_mut().zip(&class.members) {
            *ll += crate::reward::log_sigmoid(record.sign() * gap(member));
        }
        stats.push_comparison(&class, &x, &env.actions[i], &env.actions[j]);
        let mle = argmax_lowest(&loglik).index;
        states.push(FitState {
            mle,
            set: confidence_set_update(n, mle, &stats, cfg.xi, beta_sq),
            stats: stats.clone(),
        });

        let mut step = base_record(t, x, i, subopt, residual);
        step.action_j = Some(j);
        step.label = Some(y);
        step.optimism_violation = Some(violation);
        tracker.push(step);
    }
    Ok(tracker.steps)
}
