//! MLP (Levenberg–Marquardt) and RBF (subtractive clustering + least
//! squares) classifiers, argmax decoding and confusion-matrix evaluation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anfis::{subtractive_cluster, AnfisEnsemble, SubtractiveParams};
use crate::dataset::Normalizer;
use crate::error::{Error, Result};
use crate::linalg::{lstsq, ridge, solve_spd, DEFAULT_RCOND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    MinError,
    LmStall,
}

/// Per-epoch training history shared by the MLP and ANFIS trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    /// Training RMSE after each completed epoch.
    pub rmse: Vec<f64>,
    /// Verification RMSE after each epoch, when a verify set was given.
    pub verify_rmse: Vec<f64>,
    pub stop: StopReason,
    /// Epoch (0-based) whose parameters were kept, if selection was used.
    pub best_epoch: Option<usize>,
    pub notes: Vec<String>,
}

impl TrainRecord {
    pub fn new() -> Self {
        Self {
            rmse: Vec::new(),
            verify_rmse: Vec::new(),
            stop: StopReason::MaxEpochs,
            best_epoch: None,
            notes: Vec::new(),
        }
    }
}

impl Default for TrainRecord {
    fn default() -> Self {
        Self::new()
    }
}

/// Root mean square over every entry of a residual vector.
pub fn rmse(residuals: &[f64]) -> f64 {
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub min_error: f64,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub max_damping_increases: usize,
    /// Weights start uniform in `[-init_range, init_range]`.
    pub init_range: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 5,
            epochs: 20,
            min_error: 1e-5,
            lambda_init: 1e-3,
            lambda_factor: 10.0,
            max_damping_increases: 10,
            init_range: 0.5,
        }
    }
}

/// One tanh hidden layer, linear outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// hidden × input_dim, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// outputs × hidden, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpModel {
    pub fn init(input_dim: usize, hidden: usize, outputs: usize, init_range: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| rng.random_range(-init_range..=init_range))
                .collect()
        };
        let w1 = draw(hidden * input_dim);
        let b1 = draw(hidden);
        let w2 = draw(outputs * hidden);
        let b2 = draw(outputs);
        Self {
            input_dim,
            hidden,
            outputs,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameters flattened as `[w1, b1, w2, b2]`.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params());
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[h];
                z.tanh()
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let a = self.hidden_activations(x);
        (0..self.outputs)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + self.b2[k]
            })
            .collect()
    }

    /// Residuals `output − target` (sample-major) and their Jacobian with
    /// respect to [`MlpModel::params`].
    pub fn residuals_jacobian(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let (d, hn, k) = (self.input_dim, self.hidden, self.outputs);
        let off_b1 = hn * d;
        let off_w2 = off_b1 + hn;
        let off_b2 = off_w2 + k * hn;
        let rows = xs.len() * k;
        let mut r = DVector::zeros(rows);
        let mut jac = DMatrix::zeros(rows, self.num_params());
        for (n, (x, y)) in xs.iter().zip(ys).enumerate() {
            let a = self.hidden_activations(x);
            for o in 0..k {
                let row = n * k + o;
                let w2 = &self.w2[o * hn..(o + 1) * hn];
                let out: f64 = w2.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + self.b2[o];
                r[row] = out - y[o];
                for h in 0..hn {
                    let g = w2[h] * (1.0 - a[h] * a[h]);
                    for j in 0..d {
                        jac[(row, h * d + j)] = g * x[j];
                    }
                    jac[(row, off_b1 + h)] = g;
                    jac[(row, off_w2 + o * hn + h)] = a[h];
                }
                jac[(row, off_b2 + o)] = 1.0;
            }
        }
        (r, jac)
    }

    pub fn residuals(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Vec<f64> {
        xs.iter()
            .zip(ys)
            .flat_map(|(x, y)| self.forward(x).into_iter().zip(y).map(|(o, t)| o - t))
            .collect()
    }
}

/// Damped Gauss–Newton step solving `(JᵀJ + λI) δ = −Jᵀr`.
pub fn lm_step(jac: &DMatrix<f64>, r: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut a = jac.transpose() * jac;
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let g = jac.transpose() * r;
    solve_spd(&a, &(-g))
}

fn check_xy(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<(usize, usize)> {
    if xs.is_empty() {
        return Err(Error::Empty("training inputs"));
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let (d, k) = (xs[0].len(), ys[0].len());
    if let Some(bad) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    if let Some(bad) = ys.iter().find(|y| y.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, got: bad.len() });
    }
    Ok((d, k))
}

/// Full-batch Levenberg–Marquardt training.
///
/// Each epoch tries the damped step, raising λ by `lambda_factor` on
/// rejection up to `max_damping_increases` times; a step is accepted only
/// if it lowers the RMSE, after which λ is divided by the same factor.
pub fn train_mlp(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    config: &MlpConfig,
    seed: u64,
) -> Result<(MlpModel, TrainRecord)> {
    let (d, k) = check_xy(xs, ys)?;
    if config.hidden == 0 {
        return Err(Error::InvalidParameter("MLP needs ≥ 1 hidden neuron".into()));
    }
    let mut model = MlpModel::init(d, config.hidden, k, config.init_range, seed);
    let mut record = TrainRecord::new();
    let mut lambda = config.lambda_init;
    let (mut r, mut jac) = model.residuals_jacobian(xs, ys);
    let mut current = rmse(r.as_slice());
    if !current.is_finite() {
        return Err(Error::NonFinite {
            epoch: 0,
            what: "initial RMSE".into(),
        });
    }

    for epoch in 0..config.epochs {
        let base = model.params();
        let mut accepted = false;
        for _ in 0..=config.max_damping_increases {
            if let Some(delta) = lm_step(&jac, &r, lambda) {
                let trial: Vec<f64> = base.iter().zip(delta.iter()).map(|(p, s)| p + s).collect();
                model.set_params(&trial);
                let (tr, tj) = model.residuals_jacobian(xs, ys);
                let e = rmse(tr.as_slice());
                if e.is_finite() && e < current {
                    current = e;
                    r = tr;
                    jac = tj;
                    lambda /= config.lambda_factor;
                    accepted = true;
                    break;
                }
            }
            lambda *= config.lambda_factor;
        }
        if !accepted {
            model.set_params(&base);
            record.stop = StopReason::LmStall;
            return Ok((model, record));
        }
        if !current.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                what: "training RMSE".into(),
            });
        }
        record.rmse.push(current);
        if current < config.min_error {
            record.stop = StopReason::MinError;
            return Ok((model, record));
        }
    }
    record.stop = StopReason::MaxEpochs;
    Ok((model, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RbfConfig {
    pub sigma: f64,
    pub clustering: SubtractiveParams,
    /// Relative singular-value cutoff for the rank test on the activations.
    pub rcond: f64,
    pub ridge_penalty: f64,
    /// Closed-form solves to run. Each pass after the first adds the
    /// worst-fit training point as a new center.
    pub passes: usize,
    /// Training RMSE below which refinement stops.
    pub min_error: f64,
}

impl Default for RbfConfig {
    fn default() -> Self {
        Self {
            sigma: 80.0,
            clustering: SubtractiveParams::default(),
            rcond: DEFAULT_RCOND,
            ridge_penalty: 1e-8,
            passes: 1,
            min_error: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    pub centers: Vec<Vec<f64>>,
    pub sigma: f64,
    /// (m + 1) × outputs; row 0 holds the biases.
    pub weights: Vec<Vec<f64>>,
    /// True when the least-squares solve was rank deficient and the ridge
    /// fallback produced the weights.
    pub ridge_fallback: bool,
    pub warnings: Vec<String>,
}

impl RbfModel {
    /// `[1, φ₁(x), …, φₘ(x)]`.
    pub fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let denom = 2.0 * self.sigma * self.sigma;
        std::iter::once(1.0)
            .chain(self.centers.iter().map(|c| {
                let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                (-d2 / denom).exp()
            }))
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let h = self.hidden(x);
        let k = self.weights[0].len();
        (0..k)
            .map(|o| h.iter().zip(&self.weights).map(|(a, w)| a * w[o]).sum())
            .collect()
    }
}

fn diameter(xs: &[Vec<f64>]) -> f64 {
    let mut best = 0.0_f64;
    for (i, a) in xs.iter().enumerate() {
        for b in &xs[i + 1..] {
            let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// Output weights for fixed centers by linear least squares on the hidden
/// activations, falling back to ridge when the activations are rank
/// deficient.
pub fn train_rbf_with_centers(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    centers: Vec<Vec<f64>>,
    sigma: f64,
    rcond: f64,
    ridge_penalty: f64,
) -> Result<RbfModel> {
    let (_, k) = check_xy(xs, ys)?;
    if centers.is_empty() {
        return Err(Error::Empty("RBF centers"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("RBF sigma must be positive, got {sigma}")));
    }
    let mut model = RbfModel {
        centers,
        sigma,
        weights: Vec::new(),
        ridge_fallback: false,
        warnings: Vec::new(),
    };
    let m = model.centers.len();
    let a = DMatrix::from_fn(xs.len(), m + 1, |i, j| model.hidden(&xs[i])[j]);
    let b = DMatrix::from_fn(ys.len(), k, |i, j| ys[i][j]);
    let sol = lstsq(&a, &b, rcond)?;
    let w = if sol.full_rank() {
        sol.x
    } else {
        model.ridge_fallback = true;
        model.warnings.push(format!(
            "hidden activations rank {} < {}; ridge penalty {ridge_penalty:e} used",
            sol.rank,
            m + 1
        ));
        ridge(&a, &b, ridge_penalty)?
    };
    model.weights = (0..=m).map(|i| w.row(i).iter().copied().collect()).collect();
    let diam = diameter(xs);
    if sigma > 10.0 * diam {
        model.warnings.push(format!(
            "sigma {sigma} exceeds 10x the training data diameter {diam:.4}; Gaussians are nearly flat"
        ));
    }
    Ok(model)
}

/// Centers from subtractive clustering of the training inputs, then the
/// closed-form output layer.
pub fn train_rbf(xs: &[Vec<f64>], ys: &[Vec<f64>], config: &RbfConfig) -> Result<RbfModel> {
    let (d, _) = check_xy(xs, ys)?;
    // cluster in the unit box spanned by the data so the radius is
    // meaningful for raw and normalized inputs alike
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in xs {
        for j in 0..d {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    let span: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| if h > l { h - l } else { 1.0 }).collect();
    let unit: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| (0..d).map(|j| (x[j] - lo[j]) / span[j]).collect())
        .collect();
    let mut centers: Vec<Vec<f64>> = subtractive_cluster(&unit, &config.clustering)?
        .into_iter()
        .map(|c| (0..d).map(|j| lo[j] + c[j] * span[j]).collect())
        .collect();
    let mut model = train_rbf_with_centers(xs, ys, centers.clone(), config.sigma, config.rcond, config.ridge_penalty)?;
    let mut used = vec![false; xs.len()];
    for _ in 1..config.passes {
        let mut worst = None;
        let mut sse = 0.0;
        for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
            let e: f64 = model.forward(x).iter().zip(y).map(|(o, t)| (o - t).powi(2)).sum();
            sse += e;
            if !used[i] && worst.is_none_or(|(_, w)| e > w) {
                worst = Some((i, e));
            }
        }
        let fit = (sse / (xs.len() * ys[0].len()) as f64).sqrt();
        let Some((i, _)) = worst.filter(|_| fit >= config.min_error) else {
            break;
        };
        used[i] = true;
        centers.push(xs[i].clone());
        model = train_rbf_with_centers(xs, ys, centers.clone(), config.sigma, config.rcond, config.ridge_penalty)?;
    }
    Ok(model)
}

/// Anything that maps a normalized input to per-class scores.
pub trait Scorer {
    fn scores(&self, x: &[f64]) -> Vec<f64>;
}

impl Scorer for MlpModel {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x)
    }
}

impl Scorer for RbfModel {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x)
    }
}

/// Label (argmax, lowest index on ties) and the raw score vector.
pub fn classify<S: Scorer + ?Sized>(model: &S, x: &[f64]) -> (usize, Vec<f64>) {
    let s = model.scores(x);
    (argmax(&s), s)
}

/// Confusion matrix and recalls, percentages in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Per-class recall %, `None` for classes absent from the test set.
    pub recall: Vec<Option<f64>>,
    pub accuracy: f64,
    /// Mean of the defined recalls.
    pub mean_recall: f64,
}

pub fn evaluate_labels(truth: &[usize], predicted: &[usize], classes: usize) -> Result<EvaluationReport> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::InvalidParameter(format!("label out of range 0..{classes}")));
        }
        confusion[t][p] += 1;
    }
    let recall: Vec<Option<f64>> = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| 100.0 * row[i] as f64 / total as f64)
        })
        .collect();
    let correct: usize = (0..classes).map(|i| confusion[i][i]).sum();
    let defined: Vec<f64> = recall.iter().flatten().copied().collect();
    Ok(EvaluationReport {
        accuracy: 100.0 * correct as f64 / truth.len() as f64,
        mean_recall: defined.iter().sum::<f64>() / defined.len() as f64,
        confusion,
        recall,
    })
}

pub fn evaluate_classifier<S: Scorer + ?Sized>(
    model: &S,
    xs: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
) -> Result<EvaluationReport> {
    let predicted: Vec<usize> = xs.iter().map(|x| classify(model, x).0).collect();
    evaluate_labels(labels, &predicted, classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "rbf")]
    Rbf,
    #[serde(rename = "anfis-grid")]
    AnfisGrid,
    #[serde(rename = "anfis-sub")]
    AnfisSub,
    #[serde(rename = "anfis-fcm")]
    AnfisFcm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Mlp,
        ModelKind::Rbf,
        ModelKind::AnfisGrid,
        ModelKind::AnfisSub,
        ModelKind::AnfisFcm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Rbf => "rbf",
            ModelKind::AnfisGrid => "anfis-grid",
            ModelKind::AnfisSub => "anfis-sub",
            ModelKind::AnfisFcm => "anfis-fcm",
        }
    }

    /// Row label used in the results table.
    pub fn title(self) -> &'static str {
        match self {
            ModelKind::Mlp => "MLP",
            ModelKind::Rbf => "RBF",
            ModelKind::AnfisGrid => "ANFIS (Grid Partitioning)",
            ModelKind::AnfisSub => "ANFIS (Subtractive Clustering)",
            ModelKind::AnfisFcm => "ANFIS (C-means)",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    Mlp(MlpModel),
    Rbf(RbfModel),
    Anfis(AnfisEnsemble),
}

impl Scorer for ModelParams {
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ModelParams::Mlp(m) => m.scores(x),
            ModelParams::Rbf(m) => m.scores(x),
            ModelParams::Anfis(m) => m.scores(x),
        }
    }
}

/// A trained classifier with the input normalizer it expects; this is the
/// unit written to and read from model JSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub kind: ModelKind,
    pub seed: u64,
    /// `None` when the model consumes raw features.
    pub normalizer: Option<Normalizer>,
    pub model: ModelParams,
}

impl SavedModel {
    /// Scores for a raw (unnormalized) 7-feature row.
    pub fn scores_raw(&self, features: &[f64]) -> Vec<f64> {
        match &self.normalizer {
            Some(n) => self.model.scores(&n.apply(features)),
            None => self.model.scores(features),
        }
    }

    pub fn predict_raw(&self, features: &[f64]) -> usize {
        argmax(&self.scores_raw(features))
    }
}
