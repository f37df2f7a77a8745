//! Synthetic contextual-bandit environment with Bradley–Terry and
//! absolute-reward oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::reward::{sigmoid, LinearRewardModel};

/// Independent random streams derived from one run seed. Every algorithm
/// run with the same seed sees the same instance and context sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Instance = 0,
    Context = 1,
    Preference = 2,
    Policy = 3,
    Noise = 4,
    Pool = 5,
    Class = 6,
    MonteCarlo = 7,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub k: usize,
    pub m: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            k: 5,
            m: 10,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub k: usize,
    pub actions: Vec<Vec<f64>>,
    pub truth: LinearRewardModel,
    pub noise_sigma: f64,
    ref_row: Vec<f64>,
}

impl Environment {
    /// Draws `W*` and the action set from the seed's instance stream.
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        if cfg.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        let mut rng = stream_rng(cfg.seed, Stream::Instance);
        let truth = LinearRewardModel::random_unit(cfg.k, &mut rng);
        let actions = (0..cfg.m).map(|_| unit_box(cfg.k, &mut rng)).collect();
        Self::from_parts(truth, actions, None, cfg.noise_sigma)
    }

    /// `ref_row = None` selects the uniform reference policy.
    pub fn from_parts(
        truth: LinearRewardModel,
        actions: Vec<Vec<f64>>,
        ref_row: Option<Vec<f64>>,
        noise_sigma: f64,
    ) -> Result<Self> {
        let m = actions.len();
        if m < 2 {
            return Err(Error::Config(format!("need at least 2 actions, got {m}")));
        }
        if actions.iter().any(|a| a.len() != truth.k()) {
            return Err(Error::Shape("action dimension differs from the model".into()));
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        let ref_row = ref_row.unwrap_or_else(|| vec![1.0 / m as f64; m]);
        if ref_row.len() != m || ref_row.iter().any(|&p| !(p > 0.0)) || (ref_row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("reference policy must be a full-support distribution".into()));
        }
        Ok(Self {
            k: truth.k(),
            actions,
            truth,
            noise_sigma,
            ref_row,
        })
    }

    pub fn m(&self) -> usize {
        self.actions.len()
    }

    /// `π₀(·|x)`; context independent in this environment.
    pub fn ref_row(&self, _x: &[f64]) -> &[f64] {
        &self.ref_row
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        unit_box(self.k, rng)
    }

    pub fn true_rewards(&self, x: &[f64]) -> Vec<f64> {
        self.truth.rewards_row(x, &self.actions)
    }

    /// Returns `0` (first action preferred) with probability
    /// `σ(r*(x, a_i) − r*(x, a_j))`.
    pub fn preference_oracle<R: Rng + ?Sized>(&self, x: &[f64], i: usize, j: usize, rng: &mut R) -> u8 {
        let gap = self.truth.value(x, &self.actions[i]) - self.truth.value(x, &self.actions[j]);
        if rng.random::<f64>() < sigmoid(gap) {
            0
        } else {
            1
        }
    }

    /// `r*(x, a_i) + ε` with `ε ~ N(0, σ²)`.
    pub fn reward_oracle<R: Rng + ?Sized>(&self, x: &[f64], i: usize, rng: &mut R) -> f64 {
        let r = self.truth.value(x, &self.actions[i]);
        if self.noise_sigma == 0.0 {
            return r;
        }
        let noise = Normal::new(0.0, self.noise_sigma).expect("sigma checked at construction");
        r + noise.sample(rng)
    }
}

fn unit_box<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    (0..k).map(|_| rng.random::<f64>()).collect()
}
