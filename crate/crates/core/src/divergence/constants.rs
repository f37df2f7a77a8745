//! Divergence-dependent constants governing the regret pre-factors:
//!
//! * `C(f, R, η) = max_{r ∈ hull(R)} max_{x,a} h'(η(r(x,a) − λ_r(x))) / h(η(r(x,a) − λ_r(x)))`
//! * `M(f, R, η) = max_{r ∈ hull(R)} max_x Σ_a π₀(a|x) h'(η(r(x,a) − λ_r(x)))`
//!
//! The outer maximum over the convex hull is approximated by the class
//! members themselves plus seeded Dirichlet(1, …, 1) mixtures, so both values
//! are lower bounds of the true maxima.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::FDivergence;
use crate::error::{Error, Result};
use crate::policy::{solve_lambda, LAMBDA_TOL};
use crate::reward::RewardTable;

#[derive(Debug, Clone, Copy)]
pub struct HullSampling {
    /// Random mixtures drawn in addition to the class vertices.
    pub mixtures: usize,
    pub seed: u64,
}

impl Default for HullSampling {
    fn default() -> Self {
        Self { mixtures: 64, seed: 0 }
    }
}

fn hull_points(members: &[RewardTable], sampling: HullSampling) -> Result<Vec<RewardTable>> {
    let first = members.first().ok_or_else(|| Error::Domain("reward class is empty".into()))?;
    let shape = first.shape();
    if members.iter().any(|m| m.shape() != shape) {
        return Err(Error::Shape("reward class members have different shapes".into()));
    }
    let mut points = members.to_vec();
    if members.len() > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
        for _ in 0..sampling.mixtures {
            let raw: Vec<f64> = (0..members.len()).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            points.push(RewardTable::mixture(members, &weights));
        }
    }
    Ok(points)
}

fn check_refs(ref_rows: &[Vec<f64>], table: &RewardTable) -> Result<()> {
    let (n_ctx, n_act) = table.shape();
    if ref_rows.len() != n_ctx || ref_rows.iter().any(|r| r.len() != n_act) {
        return Err(Error::Shape(format!(
            "reference rows do not match a {n_ctx}x{n_act} reward table"
        )));
    }
    Ok(())
}

/// Empirical `C(f, R, η)` over the supplied contexts (rows of each table).
pub fn constant_c(
    spec: FDivergence,
    members: &[RewardTable],
    eta: f64,
    ref_rows: &[Vec<f64>],
    sampling: HullSampling,
) -> Result<f64> {
    let points = hull_points(members, sampling)?;
    check_refs(ref_rows, &points[0])?;
    let mut best = f64::NEG_INFINITY;
    for table in &points {
        for (row, reference) in table.rows().iter().zip(ref_rows) {
            let lambda = solve_lambda(spec, reference, row, eta, LAMBDA_TOL)?.lambda;
            for &r in row {
                let (h, hp) = spec.h_and_prime(eta * (r - lambda))?;
                best = best.max(hp / h);
            }
        }
    }
    Ok(best)
}

/// Empirical `M(f, R, η)` over the supplied contexts.
pub fn constant_m(
    spec: FDivergence,
    members: &[RewardTable],
    eta: f64,
    ref_rows: &[Vec<f64>],
    sampling: HullSampling,
) -> Result<f64> {
    let points = hull_points(members, sampling)?;
    check_refs(ref_rows, &points[0])?;
    let mut best = f64::NEG_INFINITY;
    for table in &points {
        for (row, reference) in table.rows().iter().zip(ref_rows) {
            let lambda = solve_lambda(spec, reference, row, eta, LAMBDA_TOL)?.lambda;
            let mut total = 0.0;
            for (&r, &p0) in row.iter().zip(reference) {
                total += p0 * spec.h_prime(eta * (r - lambda))?;
            }
            best = best.max(total);
        }
    }
    Ok(best)
}
