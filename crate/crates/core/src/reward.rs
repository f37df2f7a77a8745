//! Linear Bradley–Terry reward models `r(x, a) = s · xᵀ W a`, finite reward
//! classes and their estimators.
//!
//! The parameter is `θ = vec(W)` (row-major, dimension `k²`) and the feature
//! map is `φ(x, a) = s · vec(x aᵀ)`, so `r(x, a) = θᵀ φ(x, a)` and
//! `∇_θ r(x, a) = φ(x, a)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Rewards of a fixed set of contexts (rows) over a fixed action set (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    rows: Vec<Vec<f64>>,
}

impl RewardTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("reward table must be a non-empty rectangle".into()));
        }
        Ok(Self { rows })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.rows[0].len())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Convex combination `Σ_j w_j T_j` of equally shaped tables.
    pub fn mixture(tables: &[RewardTable], weights: &[f64]) -> RewardTable {
        let (n, m) = tables[0].shape();
        let mut rows = vec![vec![0.0; m]; n];
        for (t, &w) in tables.iter().zip(weights) {
            for (out, row) in rows.iter_mut().zip(&t.rows) {
                for (o, v) in out.iter_mut().zip(row) {
                    *o += w * v;
                }
            }
        }
        RewardTable { rows }
    }

    /// Adds `f(context, action)` entrywise.
    pub fn map(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> RewardTable {
        RewardTable {
            rows: self
                .rows
                .iter()
                .enumerate()
                .map(|(i, row)| row.iter().enumerate().map(|(j, &v)| f(i, j, v)).collect())
                .collect(),
        }
    }
}

/// `r(x, a) = scale · xᵀ W a` with `W` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRewardModel {
    k: usize,
    w: Vec<f64>,
    scale: f64,
}

impl LinearRewardModel {
    pub fn new(k: usize, w: Vec<f64>, scale: f64) -> Result<Self> {
        if w.len() != k * k {
            return Err(Error::Shape(format!("W has {} entries, expected {}", w.len(), k * k)));
        }
        if !(scale > 0.0) {
            return Err(Error::Domain(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { k, w, scale })
    }

    pub fn zeros(k: usize, scale: f64) -> Self {
        Self {
            k,
            w: vec![0.0; k * k],
            scale,
        }
    }

    /// `W` entries uniform in `[0, 1]` and scale `1/k²`, which keeps every
    /// reward of a unit-box context/action pair inside `[0, 1]`.
    pub fn random_unit<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        let w = (0..k * k).map(|_| rng.random::<f64>()).collect();
        Self {
            k,
            w,
            scale: 1.0 / (k * k) as f64,
        }
    }

    pub fn from_theta(k: usize, theta: &[f64], scale: f64) -> Result<Self> {
        Self::new(k, theta.to_vec(), scale)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.k * self.k
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `θ = vec(W)`.
    pub fn theta(&self) -> &[f64] {
        &self.w
    }

    pub fn theta_norm(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unchecked `scale · xᵀ W a`. Callers guarantee the shapes.
    pub fn value(&self, x: &[f64], a: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.w[i * self.k..(i + 1) * self.k];
            total += xi * row.iter().zip(a).map(|(w, aj)| w * aj).sum::<f64>();
        }
        self.scale * total
    }

    pub fn rewards_row(&self, x: &[f64], actions: &[Vec<f64>]) -> Vec<f64> {
        actions.iter().map(|a| self.value(x, a)).collect()
    }

    pub fn table(&self, contexts: &[Vec<f64>], actions: &[Vec<f64>]) -> RewardTable {
        RewardTable {
            rows: contexts.iter().map(|x| self.rewards_row(x, actions)).collect(),
        }
    }
}

/// `φ(x, a) = scale · vec(x aᵀ)`.
pub fn feature(x: &[f64], a: &[f64], scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * a.len());
    for &xi in x {
        for &aj in a {
            out.push(scale * xi * aj);
        }
    }
    out
}

/// `φ(x, a¹) − φ(x, a²)`.
pub fn feature_diff(x: &[f64], a1: &[f64], a2: &[f64], scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * a1.len());
    for &xi in x {
        for (&p, &q) in a1.iter().zip(a2) {
            out.push(scale * xi * (p - q));
        }
    }
    out
}

/// Shape-checked reward that must lie in `[0, 1]` (within 1e-9).
pub fn reward_eval(model: &LinearRewardModel, x: &[f64], a: &[f64]) -> Result<f64> {
    if x.len() != model.k || a.len() != model.k {
        return Err(Error::Shape(format!(
            "context/action of length {}/{} for a k={} model",
            x.len(),
            a.len(),
            model.k
        )));
    }
    let v = model.value(x, a);
    if !(-1e-9..=1.0 + 1e-9).contains(&v) {
        return Err(Error::RewardOutOfRange { value: v });
    }
    Ok(v)
}

/// A finite reward class that contains the true model.
#[derive(Debug, Clone)]
pub struct FiniteRewardClass {
    pub members: Vec<LinearRewardModel>,
    pub truth_index: usize,
}

impl FiniteRewardClass {
    pub fn new(members: Vec<LinearRewardModel>, truth_index: usize) -> Result<Self> {
        if truth_index >= members.len() {
            return Err(Error::Domain("truth index outside the class".into()));
        }
        Ok(Self { members, truth_index })
    }

    /// `truth` plus `size − 1` random unit-box models, with the truth placed
    /// at a random position.
    pub fn random_with_truth<R: Rng + ?Sized>(truth: &LinearRewardModel, size: usize, rng: &mut R) -> Result<Self> {
        if size == 0 {
            return Err(Error::Domain("class size must be positive".into()));
        }
        let truth_index = rng.random_range(0..size);
        let members = (0..size)
            .map(|i| {
                if i == truth_index {
                    truth.clone()
                } else {
                    let mut m = LinearRewardModel::random_unit(truth.k(), rng);
                    m.scale = truth.scale();
                    m
                }
            })
            .collect();
        Ok(Self { members, truth_index })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Largest parameter norm in the class.
    pub fn max_norm(&self) -> f64 {
        self.members.iter().map(LinearRewardModel::theta_norm).fold(0.0, f64::max)
    }
}

/// One pairwise comparison. `y = 0` means `a¹` was preferred.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceRecord {
    pub x: Vec<f64>,
    pub first: usize,
    pub second: usize,
    pub y: u8,
    pub weight: f64,
}

impl PreferenceRecord {
    pub fn new(x: Vec<f64>, first: usize, second: usize, y: u8) -> Self {
        Self {
            x,
            first,
            second,
            y,
            weight: 1.0,
        }
    }

    /// `+1` when `a¹` was preferred, `−1` otherwise.
    pub fn sign(&self) -> f64 {
        if self.y == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Preference data over a fixed action set, with cached feature differences.
#[derive(Debug, Clone)]
pub struct PreferenceDataset {
    actions: Vec<Vec<f64>>,
    scale: f64,
    records: Vec<PreferenceRecord>,
    diffs: Vec<Vec<f64>>,
}

impl PreferenceDataset {
    pub fn new(actions: Vec<Vec<f64>>, scale: f64) -> Self {
        Self {
            actions,
            scale,
            records: Vec::new(),
            diffs: Vec::new(),
        }
    }

    pub fn push(&mut self, record: PreferenceRecord) {
        let diff = feature_diff(
            &record.x,
            &self.actions[record.first],
            &self.actions[record.second],
            self.scale,
        );
        self.records.push(record);
        self.diffs.push(diff);
    }

    pub fn records(&self) -> &[PreferenceRecord] {
        &self.records
    }

    /// `φ(x_i, a_i¹) − φ(x_i, a_i²)` of every record.
    pub fn diffs(&self) -> &[Vec<f64>] {
        &self.diffs
    }

    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn set_weight(&mut self, i: usize, weight: f64) {
        self.records[i].weight = weight;
    }

    /// `r(x_i, a_i¹) − r(x_i, a_i²)` under `model`.
    pub fn logit(&self, model: &LinearRewardModel, i: usize) -> f64 {
        let r = &self.records[i];
        model.value(&r.x, &self.actions[r.first]) - model.value(&r.x, &self.actions[r.second])
    }
}

pub(crate) fn log_sigmoid(z: f64) -> f64 {
    // log σ(z) = −softplus(−z)
    if z > 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weighted Bradley–Terry log-likelihood `Σ_i ω_i log σ(s_i Δr_i)`.
pub fn log_likelihood(data: &PreferenceDataset, model: &LinearRewardModel) -> f64 {
    (0..data.len())
        .map(|i| {
            let r = &data.records[i];
            r.weight * log_sigmoid(r.sign() * data.logit(model, i))
        })
        .sum()
}

#[derive(Debug, Clone, Copy)]
pub struct MleOptions {
    pub reg: f64,
    /// Required Euclidean norm of the loss gradient.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            reg: 1e-6,
            tol: 1e-9,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MleFit {
    pub model: LinearRewardModel,
    pub grad_norm: f64,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Loss `(1/n) Σ ω_i softplus(−s_i θᵀz_i) + reg ‖θ‖²`, its gradient and Hessian.
fn mle_objective(data: &PreferenceDataset, theta: &[f64], reg: f64, want_hessian: bool) -> (f64, Vec<f64>, Option<Vec<f64>>) {
    let d = theta.len();
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d];
    let mut hess = if want_hessian { Some(vec![0.0; d * d]) } else { None };
    for (rec, z) in data.records.iter().zip(&data.diffs) {
        let s = rec.sign();
        let margin = s * z.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        loss -= rec.weight * log_sigmoid(margin);
        let coef = -rec.weight * s * sigmoid(-margin);
        for (g, zi) in grad.iter_mut().zip(z) {
            *g += coef * zi;
        }
        if let Some(h) = hess.as_mut() {
            let curv = rec.weight * sigmoid(margin) * sigmoid(-margin);
            if curv > 0.0 {
                for i in 0..d {
                    let ci = curv * z[i];
                    if ci == 0.0 {
                        continue;
                    }
                    let row = &mut h[i * d..i * d + i + 1];
                    for (hj, zj) in row.iter_mut().zip(&z[..=i]) {
                        *hj += ci * zj;
                    }
                }
            }
        }
    }
    loss /= n;
    for (g, t) in grad.iter_mut().zip(theta) {
        *g = *g / n + 2.0 * reg * t;
    }
    loss += reg * theta.iter().map(|t| t * t).sum::<f64>();
    if let Some(h) = hess.as_mut() {
        for i in 0..d {
            for j in 0..=i {
                let v = h[i * d + j] / n + if i == j { 2.0 * reg } else { 0.0 };
                h[i * d + j] = v;
                h[j * d + i] = v;
            }
        }
    }
    (loss, grad, hess)
}

/// Loss value and gradient of the weighted, ridge-regularized BT objective.
pub fn mle_loss_and_grad(data: &PreferenceDataset, theta: &[f64], reg: f64) -> (f64, Vec<f64>) {
    let (l, g, _) = mle_objective(data, theta, reg, false);
    (l, g)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Weighted maximum-likelihood fit by damped Newton iterations, warm-started
/// from `init`. Returns the best iterate with a convergence flag rather than
/// failing when `max_iter` is exhausted.
pub fn mle_fit(data: &PreferenceDataset, init: &LinearRewardModel, opts: MleOptions) -> Result<MleFit> {
    if data.is_empty() {
        return Err(Error::Domain("cannot fit an empty preference dataset".into()));
    }
    if (init.scale - data.scale).abs() > 0.0 || init.dim() != data.diffs[0].len() {
        return Err(Error::Shape("initial model does not match the dataset features".into()));
    }
    let d = init.dim();
    let mut theta = init.theta().to_vec();
    let (mut loss, mut grad, mut hess) = mle_objective(data, &theta, opts.reg, true);
    let mut iterations = 0;
    while norm(&grad) > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let h = DMatrix::from_row_slice(d, d, hess.as_ref().expect("hessian requested"));
        let g = DVector::from_column_slice(&grad);
        let step = match h.cholesky() {
            Some(ch) => -ch.solve(&g),
            // only reachable with reg = 0 and rank-deficient data
            None => -g.clone(),
        };
        let slope = step.dot(&g);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let (l_new, _, _) = mle_objective(data, &cand, opts.reg, false);
            if l_new <= loss + 1e-4 * t * slope || (l_new <= loss && t < 1e-8) {
                theta = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let next = mle_objective(data, &theta, opts.reg, true);
        loss = next.0;
        grad = next.1;
        hess = next.2;
    }
    let grad_norm = norm(&grad);
    Ok(MleFit {
        model: LinearRewardModel {
            k: init.k,
            w: theta,
            scale: init.scale,
        },
        grad_norm,
        loss,
        iterations,
        converged: grad_norm <= opts.tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiniteFit {
    pub index: usize,
    /// Every member attains the same likelihood (e.g. no data).
    pub all_equal: bool,
}

/// Member maximizing the weighted log-likelihood; ties go to the lowest index.
pub fn mle_fit_finite(class: &FiniteRewardClass, data: &PreferenceDataset) -> FiniteFit {
    let scores: Vec<f64> = class.members.iter().map(|m| log_likelihood(data, m)).collect();
    argmax_lowest(&scores)
}

pub(crate) fn argmax_lowest(scores: &[f64]) -> FiniteFit {
    let mut index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[index] {
            index = i;
        }
    }
    FiniteFit {
        index,
        all_equal: scores.iter().all(|&s| s == scores[0]),
    }
}

/// Absolute-feedback observation `r̃ = r*(x, a) + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardObservation {
    pub x: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

/// Running normal equations `(ΦᵀΦ, Φᵀy)` of a ridge regression.
#[derive(Debug, Clone)]
pub struct RidgeAccumulator {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    count: usize,
}

impl RidgeAccumulator {
    pub fn new(d: usize) -> Self {
        Self {
            gram: DMatrix::zeros(d, d),
            rhs: DVector::zeros(d),
            count: 0,
        }
    }

    pub fn push(&mut self, phi: &[f64], target: f64) {
        let v = DVector::from_column_slice(phi);
        self.gram.ger(1.0, &v, &v, 1.0);
        self.rhs.axpy(target, &v, 1.0);
        self.count += 1;
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Solves `(ΦᵀΦ + reg I) θ = Φᵀy`; returns `θ` and the residual norm.
    pub fn solve(&self, reg: f64) -> Result<(Vec<f64>, f64)> {
        let d = self.rhs.len();
        let a = &self.gram + DMatrix::identity(d, d) * reg;
        let singular = || Error::Solver {
            context: "ridge normal equations are singular".into(),
            iterations: 0,
            residual: f64::INFINITY,
        };
        let ch = a.clone().cholesky().ok_or_else(singular)?;
        let l = ch.l();
        let diag_max = (0..d).map(|i| a[(i, i)]).fold(0.0, f64::max);
        if (0..d).any(|i| l[(i, i)] * l[(i, i)] <= 1e-13 * diag_max) {
            return Err(singular());
        }
        let theta = ch.solve(&self.rhs);
        let residual = (&a * &theta - &self.rhs).norm();
        Ok((theta.iter().copied().collect(), residual))
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub model: LinearRewardModel,
    /// `‖(ΦᵀΦ + reg I)θ − Φᵀy‖`
    pub residual: f64,
}

/// Ridge least squares on the features `vec(x aᵀ)`.
pub fn least_squares_fit(
    data: &[RewardObservation],
    actions: &[Vec<f64>],
    k: usize,
    scale: f64,
    reg: f64,
) -> Result<LeastSquaresFit> {
    if data.is_empty() {
        return Err(Error::Domain("cannot fit an empty reward dataset".into()));
    }
    let mut acc = RidgeAccumulator::new(k * k);
    for obs in data {
        acc.push(&feature(&obs.x, &actions[obs.action], scale), obs.reward);
    }
    let (theta, residual) = acc.solve(reg)?;
    Ok(LeastSquaresFit {
        model: LinearRewardModel::new(k, theta, scale)?,
        residual,
    })
}
