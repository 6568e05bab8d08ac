//! First-order Sugeno ANFIS: Gaussian premises, rule generation by grid
//! partitioning, subtractive clustering or fuzzy C-means, and hybrid
//! least-squares / gradient-descent training.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{rmse, Scorer, StopReason, TrainRecord};
use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, DEFAULT_RCOND};
use crate::synthgen::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussMf {
    pub center: f64,
    pub sigma: f64,
}

impl GaussMf {
    pub fn new(center: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && center.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "membership function needs finite center and sigma > 0, got ({center}, {sigma})"
            )));
        }
        Ok(Self { center, sigma })
    }

    /// `exp(−(x−c)²/(2s²))`.
    pub fn eval(&self, x: f64) -> f64 {
        self.log_eval(x).exp()
    }

    fn log_eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.sigma;
        -0.5 * z * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub antecedents: Vec<GaussMf>,
    /// `[p₀, p₁, …, p_d]`; the rule output is `p₀ + Σ pᵢxᵢ`.
    pub consequent: Vec<f64>,
}

impl Rule {
    pub fn output(&self, x: &[f64]) -> f64 {
        self.consequent[0] + self.consequent[1..].iter().zip(x).map(|(p, v)| p * v).sum::<f64>()
    }

    fn log_firing(&self, x: &[f64]) -> f64 {
        self.antecedents.iter().zip(x).map(|(mf, v)| mf.log_eval(*v)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisMeta {
    pub method: String,
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisModel {
    pub input_dim: usize,
    pub rules: Vec<Rule>,
    pub meta: FisMeta,
}

impl FisModel {
    pub fn new(input_dim: usize, rules: Vec<Rule>, method: &str, seed: u64) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::Empty("FIS rule list"));
        }
        for r in &rules {
            if r.antecedents.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    expected: input_dim,
                    got: r.antecedents.len(),
                });
            }
            if r.consequent.len() != input_dim + 1 {
                return Err(Error::DimensionMismatch {
                    expected: input_dim + 1,
                    got: r.consequent.len(),
                });
            }
        }
        Ok(Self {
            input_dim,
            rules,
            meta: FisMeta {
                method: method.to_string(),
                seed,
                epochs: 0,
            },
        })
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        fis_forward(self, x).0
    }
}

/// Normalized firing strengths.
///
/// Products of memberships are formed in the log domain and shifted by the
/// strongest rule before exponentiating, so inputs far from every rule still
/// get a well-defined normalization instead of 0/0.
pub fn normalized_firing(model: &FisModel, x: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = model.rules.iter().map(|r| r.log_firing(x)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Output and normalized firing strengths for one input.
pub fn fis_forward(model: &FisModel, x: &[f64]) -> (f64, Vec<f64>) {
    let wbar = normalized_firing(model, x);
    let y = model.rules.iter().zip(&wbar).map(|(r, w)| w * r.output(x)).sum();
    (y, wbar)
}

fn data_ranges(data: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    let first = data.first().ok_or(Error::Empty("clustering data"))?;
    let mut ranges: Vec<(f64, f64)> = first.iter().map(|&v| (v, v)).collect();
    for row in data {
        if row.len() != ranges.len() {
            return Err(Error::DimensionMismatch {
                expected: ranges.len(),
                got: row.len(),
            });
        }
        for (r, &v) in ranges.iter_mut().zip(row) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    Ok(ranges)
}

pub const DEFAULT_RULE_CAP: usize = 512;
/// Smallest sigma any training step may leave behind.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Full Cartesian grid of `mfs_per_input` Gaussians per input, evenly spaced
/// over each range with `sigma = range / (2 (mfs − 1))`.
pub fn grid_partition(ranges: &[(f64, f64)], mfs_per_input: usize, rule_cap: usize) -> Result<FisModel> {
    if ranges.is_empty() {
        return Err(Error::Empty("input ranges"));
    }
    if mfs_per_input < 2 {
        return Err(Error::InvalidParameter("grid partitioning needs ≥ 2 MFs per input".into()));
    }
    let d = ranges.len();
    let rules = u32::try_from(d)
        .ok()
        .and_then(|d| mfs_per_input.checked_pow(d))
        .unwrap_or(usize::MAX);
    if rules > rule_cap {
        return Err(Error::RuleExplosion { rules, cap: rule_cap });
    }
    let per_input: Vec<Vec<GaussMf>> = ranges
        .iter()
        .map(|&(lo, hi)| {
            let span = hi - lo;
            let sigma = (span / (2.0 * (mfs_per_input - 1) as f64)).max(SIGMA_FLOOR);
            (0..mfs_per_input)
                .map(|j| GaussMf {
                    center: lo + span * j as f64 / (mfs_per_input - 1) as f64,
                    sigma,
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(rules);
    for r in 0..rules {
        let mut rem = r;
        let mut antecedents = vec![per_input[0][0]; d];
        // last input varies fastest
        for i in (0..d).rev() {
            antecedents[i] = per_input[i][rem % mfs_per_input];
            rem /= mfs_per_input;
        }
        out.push(Rule {
            antecedents,
            consequent: vec![0.0; d + 1],
        });
    }
    FisModel::new(d, out, "grid", 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubtractiveParams {
    pub radius: f64,
    pub squash: f64,
    pub accept: f64,
    pub reject: f64,
}

impl Default for SubtractiveParams {
    fn default() -> Self {
        Self {
            radius: 0.5,
            squash: 1.25,
            accept: 0.5,
            reject: 0.15,
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum()
}

/// Chiu's subtractive clustering by mountain potentials.
///
/// Candidates between the reject and accept ratios are kept only if
/// `d_min/r_a + P/P₁ ≥ 1`; otherwise their potential is zeroed and the
/// next best point is tried.
pub fn subtractive_cluster(data: &[Vec<f64>], params: &SubtractiveParams) -> Result<Vec<Vec<f64>>> {
    data_ranges(data)?;
    if !(params.radius > 0.0 && params.squash > 0.0 && params.reject <= params.accept) {
        return Err(Error::InvalidParameter(format!("subtractive parameters {params:?}")));
    }
    let n = data.len();
    let alpha = 4.0 / (params.radius * params.radius);
    let rb = params.squash * params.radius;
    let beta = 4.0 / (rb * rb);
    let mut potential: Vec<f64> = data
        .iter()
        .map(|x| data.iter().map(|y| (-alpha * dist2(x, y)).exp()).sum())
        .collect();

    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut first = 0.0;
    while centers.len() < n {
        let k = crate::classifiers::argmax(&potential);
        let pk = potential[k];
        if centers.is_empty() {
            first = pk;
        } else {
            if pk <= 0.0 || pk < params.reject * first {
                break;
            }
            if pk <= params.accept * first {
                let dmin = centers
                    .iter()
                    .map(|c| dist2(c, &data[k]))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt();
                if dmin / params.radius + pk / first < 1.0 {
                    potential[k] = 0.0;
                    continue;
                }
            }
        }
        let ck = data[k].clone();
        for (p, x) in potential.iter_mut().zip(data) {
            *p -= pk * (-beta * dist2(x, &ck)).exp();
        }
        centers.push(ck);
    }
    Ok(centers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FcmParams {
    pub clusters: usize,
    pub fuzzifier: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FcmParams {
    fn default() -> Self {
        Self {
            clusters: 5,
            fuzzifier: 2.0,
            tol: 1e-5,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmResult {
    pub centers: Vec<Vec<f64>>,
    /// n × c, rows sum to 1.
    pub memberships: Vec<Vec<f64>>,
    /// Objective after each center update.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn fcm_centers(data: &[Vec<f64>], u: &[Vec<f64>], c: usize, m: f64) -> Vec<Vec<f64>> {
    let d = data[0].len();
    (0..c)
        .map(|k| {
            let mut num = vec![0.0; d];
            let mut den = 0.0;
            for (x, row) in data.iter().zip(u) {
                let w = row[k].powf(m);
                den += w;
                for (a, v) in num.iter_mut().zip(x) {
                    *a += w * v;
                }
            }
            if den > 0.0 {
                num.iter().map(|a| a / den).collect()
            } else {
                num
            }
        })
        .collect()
}

fn fcm_objective(data: &[Vec<f64>], u: &[Vec<f64>], v: &[Vec<f64>], m: f64) -> f64 {
    data.iter()
        .zip(u)
        .map(|(x, row)| row.iter().zip(v).map(|(uk, vk)| uk.powf(m) * dist2(x, vk)).sum::<f64>())
        .sum()
}

fn fcm_memberships(data: &[Vec<f64>], v: &[Vec<f64>], m: f64) -> Vec<Vec<f64>> {
    let expo = 1.0 / (m - 1.0);
    data.iter()
        .map(|x| {
            let d2: Vec<f64> = v.iter().map(|c| dist2(x, c)).collect();
            let zeros = d2.iter().filter(|&&q| q == 0.0).count();
            if zeros > 0 {
                // point sits on a center: crisp assignment
                return d2
                    .iter()
                    .map(|&q| if q == 0.0 { 1.0 / zeros as f64 } else { 0.0 })
                    .collect();
            }
            let inv: Vec<f64> = d2.iter().map(|q| q.powf(-expo)).collect();
            let total: f64 = inv.iter().sum();
            inv.iter().map(|w| w / total).collect()
        })
        .collect()
}

/// Fuzzy C-means by alternating center and membership updates.
///
/// Memberships start as a seeded random row-stochastic matrix. Iteration
/// stops once the largest membership change falls below `tol`.
pub fn fcm(data: &[Vec<f64>], params: &FcmParams, seed: u64) -> Result<FcmResult> {
    data_ranges(data)?;
    let (n, c, m) = (data.len(), params.clusters, params.fuzzifier);
    if c == 0 {
        return Err(Error::InvalidParameter("FCM needs ≥ 1 cluster".into()));
    }
    if c > n {
        return Err(Error::TooManyClusters { clusters: c, points: n });
    }
    if m <= 1.0 {
        return Err(Error::InvalidParameter(format!("fuzzifier must exceed 1, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let row: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = row.iter().sum();
            row.into_iter().map(|v| v / total).collect()
        })
        .collect();

    let mut objective = Vec::new();
    let mut iterations = 0;
    loop {
        let v = fcm_centers(data, &u, c, m);
        objective.push(fcm_objective(data, &u, &v, m));
        let next = fcm_memberships(data, &v, m);
        let change = u
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        u = next;
        iterations += 1;
        if change < params.tol || iterations >= params.max_iter {
            let v = fcm_centers(data, &u, c, m);
            objective.push(fcm_objective(data, &u, &v, m));
            return Ok(FcmResult {
                centers: v,
                memberships: u,
                objective,
                iterations,
            });
        }
    }
}

/// One rule per center with `sigma = r_a · range_i / √8`.
pub fn fis_from_centers(centers: &[Vec<f64>], data: &[Vec<f64>], radius: f64) -> Result<FisModel> {
    let ranges = data_ranges(data)?;
    let d = ranges.len();
    let rules = centers
        .iter()
        .map(|c| {
            if c.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: c.len() });
            }
            Ok(Rule {
                antecedents: c
                    .iter()
                    .zip(&ranges)
                    .map(|(&center, &(lo, hi))| GaussMf {
                        center,
                        sigma: (radius * (hi - lo) / 8f64.sqrt()).max(SIGMA_FLOOR),
                    })
                    .collect(),
                consequent: vec![0.0; d + 1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FisModel::new(d, rules, "subtractive", 0)
}

/// One rule per FCM cluster; sigmas are membership-weighted standard
/// deviations, floored at `1e-3 · range`.
pub fn fis_from_fcm(result: &FcmResult, data: &[Vec<f64>], fuzzifier: f64) -> Result<FisModel> {
    let ranges = data_ranges(data)?;
    let d = ranges.len();
    if result.memberships.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: result.memberships.len(),
        });
    }
    let rules = result
        .centers
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let mut var = vec![0.0; d];
            let mut den = 0.0;
            for (x, row) in data.iter().zip(&result.memberships) {
                let w = row[k].powf(fuzzifier);
                den += w;
                for ((acc, xi), vi) in var.iter_mut().zip(x).zip(v) {
                    *acc += w * (xi - vi).powi(2);
                }
            }
            let antecedents = v
                .iter()
                .zip(&var)
                .zip(&ranges)
                .map(|((&center, &s2), &(lo, hi))| {
                    let std = if den > 0.0 { (s2 / den).sqrt() } else { 0.0 };
                    GaussMf {
                        center,
                        sigma: std.max(1e-3 * (hi - lo)).max(SIGMA_FLOOR),
                    }
                })
                .collect();
            Rule {
                antecedents,
                consequent: vec![0.0; d + 1],
            }
        })
        .collect();
    FisModel::new(d, rules, "fcm", 0)
}

/// Premise parameters flattened as `[c, s]` pairs, rule-major.
pub fn premise_params(model: &FisModel) -> Vec<f64> {
    model
        .rules
        .iter()
        .flat_map(|r| r.antecedents.iter().flat_map(|mf| [mf.center, mf.sigma]))
        .collect()
}

pub fn set_premise_params(model: &mut FisModel, p: &[f64]) {
    let mut it = p.chunks_exact(2);
    for r in &mut model.rules {
        for mf in &mut r.antecedents {
            let pair = it.next().expect("premise parameter count");
            mf.center = pair[0];
            mf.sigma = pair[1];
        }
    }
}

/// `½ · mean(e²)` over the data.
pub fn objective(model: &FisModel, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    0.5 * xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (model.output(x) - y).powi(2))
        .sum::<f64>()
        / xs.len() as f64
}

/// Gradients of [`objective`] with respect to the premise parameters
/// (layout of [`premise_params`]) and the consequents (rule-major).
pub fn gradients(model: &FisModel, xs: &[Vec<f64>], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = model.input_dim;
    let mut gp = vec![0.0; model.rules.len() * d * 2];
    let mut gc = vec![0.0; model.rules.len() * (d + 1)];
    let scale = 1.0 / xs.len() as f64;
    for (x, y) in xs.iter().zip(ys) {
        let wbar = normalized_firing(model, x);
        let f: Vec<f64> = model.rules.iter().map(|r| r.output(x)).collect();
        let out: f64 = wbar.iter().zip(&f).map(|(w, v)| w * v).sum();
        let e = (out - y) * scale;
        for (r, rule) in model.rules.iter().enumerate() {
            let dlog = e * wbar[r] * (f[r] - out);
            for (i, mf) in rule.antecedents.iter().enumerate() {
                let diff = x[i] - mf.center;
                let s2 = mf.sigma * mf.sigma;
                gp[(r * d + i) * 2] += dlog * diff / s2;
                gp[(r * d + i) * 2 + 1] += dlog * diff * diff / (s2 * mf.sigma);
            }
            gc[r * (d + 1)] += e * wbar[r];
            for i in 0..d {
                gc[r * (d + 1) + 1 + i] += e * wbar[r] * x[i];
            }
        }
    }
    (gp, gc)
}

pub fn premise_gradient(model: &FisModel, xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
    gradients(model, xs, ys).0
}

/// Solves all consequents jointly with the premises frozen.
///
/// With `ridge == 0` this is the minimum-norm least-squares solution and the
/// numerical rank of the design is returned; otherwise
/// `‖Ap − y‖² + ridge·‖p‖²` is minimized and no rank is computed.
pub fn lse_consequents(model: &mut FisModel, xs: &[Vec<f64>], ys: &[f64], ridge: f64) -> Result<Option<usize>> {
    let d = model.input_dim;
    let cols = model.rules.len() * (d + 1);
    let mut a = DMatrix::zeros(xs.len(), cols);
    for (n, x) in xs.iter().enumerate() {
        let wbar = normalized_firing(model, x);
        for (r, w) in wbar.iter().enumerate() {
            a[(n, r * (d + 1))] = *w;
            for i in 0..d {
                a[(n, r * (d + 1) + 1 + i)] = w * x[i];
            }
        }
    }
    let b = DMatrix::from_column_slice(ys.len(), 1, ys);
    let (p, rank) = if ridge > 0.0 {
        (ridge_solve(&a, &b, ridge)?, None)
    } else {
        let sol = lstsq_min_norm(&a, &b, DEFAULT_RCOND)?;
        (sol.x, Some(sol.rank))
    };
    for (r, rule) in model.rules.iter_mut().enumerate() {
        for j in 0..=d {
            rule.consequent[j] = p[(r * (d + 1) + j, 0)];
        }
    }
    Ok(rank)
}

// Ridge solve in whichever of the primal or dual forms is smaller.
fn ridge_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let singular = || Error::Singular {
        rank: 0,
        cols: a.ncols(),
    };
    if a.nrows() < a.ncols() {
        let mut g = a * a.transpose();
        for i in 0..g.nrows() {
            g[(i, i)] += ridge;
        }
        let alpha = g.cholesky().ok_or_else(singular)?.solve(b);
        Ok(a.transpose() * alpha)
    } else {
        crate::linalg::ridge(a, b, ridge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Least-squares consequents, gradient-descent premises.
    Hybrid,
    /// Gradient descent on every parameter.
    Backprop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridConfig {
    pub epochs: usize,
    pub min_error: f64,
    pub lr: f64,
    pub mode: TrainMode,
    /// Tikhonov penalty of the consequent solve; 0 gives the exact
    /// minimum-norm least-squares solution. The small default keeps the
    /// underdetermined grid-partition systems from interpolating label noise.
    pub lse_ridge: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            min_error: 1e-5,
            lr: 0.01,
            mode: TrainMode::Hybrid,
            lse_ridge: 1e-4,
        }
    }
}

fn series_rmse(model: &FisModel, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let e: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| model.output(x) - y).collect();
    rmse(&e)
}

/// Trains a single-output FIS.
///
/// Each epoch solves the consequents by least squares (hybrid mode) and
/// then takes one gradient step on the premises. The returned model is the
/// epoch snapshot with the lowest verification RMSE, or the lowest training
/// RMSE when no verification data is given.
pub fn train_hybrid(
    model: &FisModel,
    train: (&[Vec<f64>], &[f64]),
    verify: Option<(&[Vec<f64>], &[f64])>,
    config: &HybridConfig,
) -> Result<(FisModel, TrainRecord)> {
    let (xs, ys) = train;
    if xs.is_empty() {
        return Err(Error::Empty("ANFIS training data"));
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let mut current = model.clone();
    let mut record = TrainRecord::new();
    let mut best: Option<(f64, FisModel)> = None;

    for epoch in 0..config.epochs {
        if config.mode == TrainMode::Hybrid {
            let params = current.rules.len() * (current.input_dim + 1);
            let rank = lse_consequents(&mut current, xs, ys, config.lse_ridge)?;
            if let Some(rank) = rank.filter(|r| epoch == 0 && *r < params) {
                record.notes.push(format!(
                    "consequent design rank {rank} < {params} parameters; minimum-norm solution"
                ));
            }
        }
        let (gp, gc) = gradients(&current, xs, ys);
        if gp.iter().chain(&gc).any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                epoch,
                what: "ANFIS gradient".into(),
            });
        }
        let mut p = premise_params(&current);
        for (i, (v, g)) in p.iter_mut().zip(&gp).enumerate() {
            *v -= config.lr * g;
            if i % 2 == 1 {
                *v = v.max(SIGMA_FLOOR);
            }
        }
        set_premise_params(&mut current, &p);
        if config.mode == TrainMode::Backprop {
            let d = current.input_dim;
            for (r, rule) in current.rules.iter_mut().enumerate() {
                for (j, c) in rule.consequent.iter_mut().enumerate() {
                    *c -= config.lr * gc[r * (d + 1) + j];
                }
            }
        }
        current.meta.epochs = epoch + 1;

        let train_rmse = series_rmse(&current, xs, ys);
        if !train_rmse.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                what: "ANFIS training RMSE".into(),
            });
        }
        record.rmse.push(train_rmse);
        let score = match verify {
            Some((vx, vy)) if !vx.is_empty() => {
                let v = series_rmse(&current, vx, vy);
                record.verify_rmse.push(v);
                v
            }
            _ => train_rmse,
        };
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, current.clone()));
            record.best_epoch = Some(epoch);
        }
        if train_rmse < config.min_error {
            record.stop = StopReason::MinError;
            break;
        }
    }
    Ok((best.map(|(_, m)| m).unwrap_or(current), record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMethod {
    Grid,
    Subtractive,
    Fcm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnfisConfig {
    pub mfs_per_input: usize,
    pub rule_cap: usize,
    pub subtractive: SubtractiveParams,
    pub fcm: FcmParams,
    pub training: HybridConfig,
}

impl Default for AnfisConfig {
    fn default() -> Self {
        Self {
            mfs_per_input: 2,
            rule_cap: DEFAULT_RULE_CAP,
            subtractive: SubtractiveParams::default(),
            fcm: FcmParams::default(),
            training: HybridConfig::default(),
        }
    }
}

/// One single-output FIS per class; the class score is that FIS's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnfisEnsemble {
    pub method: RuleMethod,
    pub models: Vec<FisModel>,
}

impl Scorer for AnfisEnsemble {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.models.iter().map(|m| m.output(x)).collect()
    }
}

const FCM_STREAM: u64 = 0xFC3;

/// Builds the initial rule base for class `k`.
pub fn initial_fis(
    xs: &[Vec<f64>],
    method: RuleMethod,
    config: &AnfisConfig,
    seed: u64,
    class: usize,
) -> Result<FisModel> {
    let mut fis = match method {
        RuleMethod::Grid => grid_partition(&data_ranges(xs)?, config.mfs_per_input, config.rule_cap)?,
        RuleMethod::Subtractive => {
            let centers = subtractive_cluster(xs, &config.subtractive)?;
            fis_from_centers(&centers, xs, config.subtractive.radius)?
        }
        RuleMethod::Fcm => {
            let s = derive_seed(seed, FCM_STREAM, class as u64);
            let res = fcm(xs, &config.fcm, s)?;
            fis_from_fcm(&res, xs, config.fcm.fuzzifier)?
        }
    };
    fis.meta.seed = seed;
    Ok(fis)
}

/// One-vs-all ANFIS classifier: class `k`'s FIS is trained on the 0/1
/// indicator of class `k`. Class models train in parallel.
pub fn anfis_classify_ensemble(
    train: (&[Vec<f64>], &[usize]),
    verify: Option<(&[Vec<f64>], &[usize])>,
    classes: usize,
    method: RuleMethod,
    config: &AnfisConfig,
    seed: u64,
) -> Result<(AnfisEnsemble, Vec<TrainRecord>)> {
    let (xs, labels) = train;
    if xs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: labels.len(),
        });
    }
    let indicator = |ls: &[usize], k: usize| -> Vec<f64> { ls.iter().map(|&l| f64::from(u8::from(l == k))).collect() };
    let results: Vec<Result<(FisModel, TrainRecord)>> = (0..classes)
        .into_par_iter()
        .map(|k| {
            let init = initial_fis(xs, method, config, seed, k)?;
            let ys = indicator(labels, k);
            let vy = verify.map(|(_, vl)| indicator(vl, k));
            let v = verify.zip(vy.as_deref()).map(|((vx, _), vy)| (vx, vy));
            train_hybrid(&init, (xs, &ys), v, &config.training)
        })
        .collect();
    let mut models = Vec::with_capacity(classes);
    let mut records = Vec::with_capacity(classes);
    for r in results {
        let (m, rec) = r?;
        models.push(m);
        records.push(rec);
    }
    Ok((AnfisEnsemble { method, models }, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_rule(consequent: Vec<f64>, sigma: f64) -> FisModel {
        let d = consequent.len() - 1;
        let rule = Rule {
            antecedents: vec![GaussMf { center: 0.3, sigma }; d],
            consequent,
        };
        FisModel::new(d, vec![rule], "test", 0).unwrap()
    }

    #[test]
    fn gauss_mf_peak_and_rejects_bad_sigma() {
        let mf = GaussMf::new(0.5, 0.2).unwrap();
        assert_eq!(mf.eval(0.5), 1.0);
        assert!((mf.eval(0.7) - (-0.5f64).exp()).abs() < 1e-15);
        assert!(GaussMf::new(0.0, 0.0).is_err());
    }

    #[test]
    fn single_rule_output_is_consequent() {
        for sigma in [1e-3, 0.1, 10.0] {
            let m = one_rule(vec![1.0, 2.0, -1.0], sigma);
            let (y, w) = fis_forward(&m, &[5.0, 1.0]);
            assert_eq!(w, vec![1.0]);
            assert!((y - (1.0 + 10.0 - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_midpoint_firing() {
        let m = grid_partition(&[(0.0, 1.0)], 2, 512).unwrap();
        let (_, w) = fis_forward(&m, &[0.5]);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn far_input_still_normalizes() {
        let m = grid_partition(&[(0.0, 1.0), (0.0, 1.0)], 2, 512).unwrap();
        let (_, w) = fis_forward(&m, &[1e4, -1e4]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn grid_examples() {
        let m = grid_partition(&[(0.0, 1.0)], 2, 512).unwrap();
        assert_eq!(m.rules.len(), 2);
        assert_eq!(m.rules[0].antecedents[0].center, 0.0);
        assert_eq!(m.rules[1].antecedents[0].center, 1.0);
        assert_eq!(m.rules[0].antecedents[0].sigma, 0.5);
        assert_eq!(grid_partition(&[(0.0, 1.0); 7], 2, 512).unwrap().rules.len(), 128);
        assert!(matches!(
            grid_partition(&[(0.0, 1.0); 7], 3, 512),
            Err(Error::RuleExplosion { rules: 2187, cap: 512 })
        ));
    }

    #[test]
    fn subtractive_single_point() {
        let c = subtractive_cluster(&[vec![0.2, 0.4]], &SubtractiveParams::default()).unwrap();
        assert_eq!(c, vec![vec![0.2, 0.4]]);
        assert!(subtractive_cluster(&[], &SubtractiveParams::default()).is_err());
    }

    #[test]
    fn fcm_single_cluster_is_mean() {
        let data: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let r = fcm(&data, &FcmParams { clusters: 1, ..Default::default() }, 2).unwrap();
        assert!((r.centers[0][0] - 4.0).abs() < 1e-9);
        assert!((r.centers[0][1] - 20.4 / 9.0).abs() < 1e-9);
        assert!(r.memberships.iter().all(|u| u == &vec![1.0]));
    }

    #[test]
    fn fcm_two_points() {
        let data = vec![vec![0.0], vec![1.0]];
        let r = fcm(&data, &FcmParams { clusters: 2, ..Default::default() }, 9).unwrap();
        let mut cs: Vec<f64> = r.centers.iter().map(|c| c[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert!(cs[0].abs() < 1e-3 && (cs[1] - 1.0).abs() < 1e-3, "{cs:?}");
        for row in &r.memberships {
            assert!(row.iter().any(|u| *u > 0.999));
        }
    }

    #[test]
    fn fcm_rejects_too_many_clusters() {
        assert!(matches!(
            fcm(&[vec![0.0]], &FcmParams { clusters: 2, ..Default::default() }, 0),
            Err(Error::TooManyClusters { .. })
        ));
    }

    #[test]
    fn fcm_sigma_floor_for_repeated_point() {
        let mut data = vec![vec![0.5]; 5];
        data.push(vec![0.0]);
        data.push(vec![1.0]);
        let res = |n| FcmResult {
            centers: vec![vec![0.5]],
            memberships: vec![vec![1.0]; n],
            objective: vec![],
            iterations: 0,
        };
        let m = fis_from_fcm(&res(5), &data[..5], 2.0).unwrap();
        // range of the first five points is zero
        assert_eq!(m.rules[0].antecedents[0].sigma, SIGMA_FLOOR);
        let m = fis_from_fcm(&res(7), &data, 2.0).unwrap();
        assert!(m.rules[0].antecedents[0].sigma > 1e-3);
    }

    #[test]
    fn single_center_fis_fires_fully() {
        let data: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 / 4.0]).collect();
        let m = fis_from_centers(&[vec![0.5]], &data, 0.5).unwrap();
        for x in &data {
            assert_eq!(normalized_firing(&m, x), vec![1.0]);
        }
    }

    #[test]
    fn smooth_function_fit() {
        let xs: Vec<Vec<f64>> = (0..101).map(|i| vec![-10.0 + 0.2 * i as f64]).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| if x[0] == 0.0 { 1.0 } else { x[0].sin() / x[0] })
            .collect();
        let res = fcm(&xs, &FcmParams { clusters: 5, ..Default::default() }, 4).unwrap();
        let init = fis_from_fcm(&res, &xs, 2.0).unwrap();
        let (m, rec) = train_hybrid(&init, (&xs, &ys), None, &HybridConfig::default()).unwrap();
        let range = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ys.iter().copied().fold(f64::INFINITY, f64::min);
        let e = series_rmse(&m, &xs, &ys);
        assert!(e < 0.1 * range, "rmse {e} vs range {range}, {:?}", rec.rmse);
    }

    #[test]
    fn ensemble_single_class() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 5) as f64 / 4.0, (i / 5) as f64 / 3.0]).collect();
        let labels = vec![2; 20];
        for method in [RuleMethod::Grid, RuleMethod::Subtractive, RuleMethod::Fcm] {
            let (ens, _) = anfis_classify_ensemble((&xs, &labels), None, 5, method, &AnfisConfig::default(), 1).unwrap();
            for x in &xs {
                assert_eq!(crate::classifiers::classify(&ens, x).0, 2, "{method:?}");
            }
        }
    }
}
