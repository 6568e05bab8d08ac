//! End-to-end experiment: synthesize, image, extract, fit the mass model and
//! train/evaluate the classifier roster over repeated random splits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anfis::{anfis_classify_ensemble, AnfisConfig, RuleMethod};
use crate::classifiers::{
    evaluate_classifier, train_mlp, train_rbf, EvaluationReport, MlpConfig, ModelKind, ModelParams, RbfConfig,
    SavedModel, StopReason,
};
use crate::dataset::{one_hot, split, Normalizer, Sample, Split, SplitRatios, Variety, FEATURE_NAMES, MASS, NUM_VARIETIES};
use crate::error::{Error, Result};
use crate::imaging::{calibrate, extract_features, target_extent_px, CalibrationScale};
use crate::io::{read_csv, write_csv, write_json, FeatureRow, ManifestRow};
use crate::linalg::pearson_r2;
use crate::massmodel::{metrics, subset_search, LinearModel, RegressionMetrics, SubsetSearch};
use crate::stats::{anova_oneway, summarize, Anova, GroupSummary};
use crate::synthgen::{default_varieties, derive_seed, render_calibration_target, render_views, sample_fruit, GroundTruthFruit, RenderConfig, VarietyParams};

/// Published per-variety recall (%) and mean for each model, in
/// [`ModelKind::ALL`] order.
pub const PAPER_RESULTS: [(ModelKind, [f64; NUM_VARIETIES], f64); 5] = [
    (ModelKind::Mlp, [77.1, 85.5, 82.7, 84.0, 82.6], 83.6),
    (ModelKind::Rbf, [77.3, 81.8, 79.8, 79.6, 79.8], 80.6),
    (ModelKind::AnfisGrid, [85.1, 88.2, 86.9, 85.3, 86.6], 87.5),
    (ModelKind::AnfisSub, [85.9, 88.6, 84.7, 81.1, 84.9], 84.1),
    (ModelKind::AnfisFcm, [80.6, 87.2, 85.1, 84.5, 85.0], 87.7),
];

/// Published mass-model summary: mean R², error mean, error std, RMSE.
pub const PAPER_MASS: (f64, f64, f64, f64) = (0.97, -0.003, 1.85, 1.845);

const STREAM_FRUIT: u64 = 1;
const STREAM_REPEAT: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_MODEL: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub samples_per_variety: usize,
    /// Replaces the built-in variety table when set.
    pub varieties: Option<Vec<VarietyParams>>,
    /// Multiplies every dimension std (0.25 gives well-separated varieties).
    pub std_scale: f64,
    pub mass_noise: f64,
    pub calibration_target_mm: f64,
    pub render: RenderConfig,
    pub split: SplitRatios,
    pub repeats: usize,
    pub models: Vec<ModelKind>,
    /// Feed the RBF unnormalized features instead of min-max scaled ones.
    pub rbf_raw_inputs: bool,
    pub mlp: MlpConfig,
    pub rbf: RbfConfig,
    pub anfis: AnfisConfig,
    /// Run repeats on the rayon pool.
    pub parallel: bool,
    pub histogram_bins: usize,
    pub letters_alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            samples_per_variety: 49,
            varieties: None,
            std_scale: 1.0,
            mass_noise: crate::synthgen::DEFAULT_MASS_NOISE,
            calibration_target_mm: 20.0,
            render: RenderConfig::default(),
            split: SplitRatios::default(),
            repeats: 10,
            models: ModelKind::ALL.to_vec(),
            rbf_raw_inputs: false,
            mlp: MlpConfig::default(),
            rbf: RbfConfig::default(),
            anfis: AnfisConfig::default(),
            parallel: true,
            histogram_bins: 20,
            letters_alpha: 0.01,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.render.validate()?;
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be ≥ 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("model roster is empty".into()));
        }
        if self.samples_per_variety < crate::dataset::MIN_PER_CLASS {
            return Err(Error::Config(format!(
                "samples_per_variety must be ≥ {}",
                crate::dataset::MIN_PER_CLASS
            )));
        }
        if !(self.std_scale > 0.0) || !(self.mass_noise >= 0.0) || self.histogram_bins == 0 {
            return Err(Error::Config("std_scale > 0, mass_noise ≥ 0 and histogram_bins ≥ 1 required".into()));
        }
        if !(self.letters_alpha > 0.0 && self.letters_alpha < 1.0) {
            return Err(Error::Config("letters_alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn variety_params(&self) -> Result<Vec<VarietyParams>> {
        let base = match &self.varieties {
            Some(v) => {
                for p in v {
                    p.validate()?;
                }
                v.clone()
            }
            None => default_varieties(),
        };
        Ok(base.iter().map(|p| p.with_std_scale(self.std_scale)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFruit {
    pub id: String,
    pub fruit: GroundTruthFruit,
}

/// Draws `samples_per_variety` fruits per variety, ids `<Variety>-NNN`.
pub fn synthesize(config: &ExperimentConfig) -> Result<Vec<LabeledFruit>> {
    let mut out = Vec::new();
    for p in config.variety_params()? {
        for i in 0..config.samples_per_variety {
            let idx = ((p.variety.index() as u64) << 32) | i as u64;
            let seed = derive_seed(config.seed, STREAM_FRUIT, idx);
            out.push(LabeledFruit {
                id: format!("{}-{i:03}", p.variety),
                fruit: sample_fruit(&p, seed, config.mass_noise)?,
            });
        }
    }
    Ok(out)
}

pub fn manifest(fruits: &[LabeledFruit]) -> Vec<ManifestRow> {
    fruits.iter().map(|f| ManifestRow::from_fruit(f.id.clone(), &f.fruit)).collect()
}

/// Images a square target of known size and derives the pixel scale from it.
pub fn calibration_scale(render: &RenderConfig, target_mm: f64) -> Result<CalibrationScale> {
    let img = render_calibration_target(target_mm, render)?;
    let px = target_extent_px(&img)?;
    calibrate((target_mm, target_mm), px)
}

/// Renders and measures every fruit; order is preserved.
pub fn extract_all(fruits: &[LabeledFruit], render: &RenderConfig, scale: &CalibrationScale) -> Result<Vec<FeatureRow>> {
    fruits
        .par_iter()
        .map(|f| {
            let views = render_views(&f.fruit, render)?;
            let feats = extract_features(&views, scale)?;
            Ok(FeatureRow::new(f.id.clone(), f.fruit.variety, &feats))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassFit {
    pub bits: u8,
    pub features: String,
    pub model: LinearModel,
    pub verify: RegressionMetrics,
    pub test: Option<RegressionMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub kind: ModelKind,
    pub seed: u64,
    pub evaluation: EvaluationReport,
    pub stop: Vec<StopReason>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    /// (train, test, verify) sizes.
    pub sizes: (usize, usize, usize),
    pub mass: Option<MassFit>,
    pub models: Vec<ModelOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassPrediction {
    pub repeat: usize,
    pub id: String,
    pub variety: Variety,
    pub partition: String,
    pub actual: f64,
    pub predicted: f64,
}

/// Everything a repeat produces beyond its summary row.
#[derive(Debug, Clone)]
pub struct RepeatArtifacts {
    pub split: Split,
    pub search: SubsetSearch,
    pub predictions: Vec<MassPrediction>,
    pub models: Vec<SavedModel>,
}

pub fn repeat_seed(master: u64, repeat: usize) -> u64 {
    derive_seed(master, STREAM_REPEAT, repeat as u64)
}

/// Seed of the train/test/verify shuffle within a repeat.
pub fn split_seed(repeat_seed: u64) -> u64 {
    derive_seed(repeat_seed, STREAM_SPLIT, 0)
}

/// Seed of the `index`-th roster model within a repeat.
pub fn model_seed(repeat_seed: u64, index: usize) -> u64 {
    derive_seed(repeat_seed, STREAM_MODEL, index as u64)
}

fn partition_of(split: &Split, n: usize) -> Vec<&'static str> {
    let mut out = vec![""; n];
    for &i in &split.train {
        out[i] = "train";
    }
    for &i in &split.test {
        out[i] = "test";
    }
    for &i in &split.verify {
        out[i] = "verify";
    }
    out
}

/// Replaces the mass column by the model's estimate.
pub fn with_estimated_mass(samples: &[Sample], model: &LinearModel) -> Vec<Sample> {
    samples
        .iter()
        .map(|s| {
            let mut e = s.clone();
            e.features[MASS] = model.predict(&s.image_features());
            e
        })
        .collect()
}

fn rows(samples: &[Sample], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| samples[i].features.to_vec()).collect()
}

fn labels(samples: &[Sample], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| samples[i].variety.index()).collect()
}

/// Trains `kind` on raw feature rows. A min-max normalizer is fitted on the
/// training rows and stored with the model unless the model is configured
/// for raw inputs; verify rows feed the ANFIS best-epoch snapshot.
pub fn fit_classifier(
    kind: ModelKind,
    train: (&[Vec<f64>], &[usize]),
    verify: Option<(&[Vec<f64>], &[usize])>,
    classes: usize,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(SavedModel, Vec<StopReason>, Vec<String>)> {
    let (xs, ls) = train;
    let raw = kind == ModelKind::Rbf && config.rbf_raw_inputs;
    let norm = if raw { None } else { Some(Normalizer::fit(xs)?) };
    let scale = |rows: &[Vec<f64>]| match &norm {
        Some(n) => n.apply_all(rows),
        None => rows.to_vec(),
    };
    let xt = scale(xs);
    let (params, stop, notes) = match kind {
        ModelKind::Mlp => {
            let (m, rec) = train_mlp(&xt, &one_hot(ls, classes), &config.mlp, seed)?;
            (ModelParams::Mlp(m), vec![rec.stop], rec.notes)
        }
        ModelKind::Rbf => {
            let m = train_rbf(&xt, &one_hot(ls, classes), &config.rbf)?;
            let notes = m.warnings.clone();
            (ModelParams::Rbf(m), Vec::new(), notes)
        }
        ModelKind::AnfisGrid | ModelKind::AnfisSub | ModelKind::AnfisFcm => {
            let method = match kind {
                ModelKind::AnfisGrid => RuleMethod::Grid,
                ModelKind::AnfisSub => RuleMethod::Subtractive,
                _ => RuleMethod::Fcm,
            };
            let v = verify.filter(|(vx, _)| !vx.is_empty()).map(|(vx, vl)| (scale(vx), vl));
            let v = v.as_ref().map(|(vx, vl)| (&vx[..], *vl));
            let (ens, recs) = anfis_classify_ensemble((&xt, ls), v, classes, method, &config.anfis, seed)?;
            let notes = recs
                .iter()
                .enumerate()
                .flat_map(|(k, r)| r.notes.iter().map(move |n| format!("class {k}: {n}")))
                .collect();
            (ModelParams::Anfis(ens), recs.iter().map(|r| r.stop).collect(), notes)
        }
    };
    Ok((
        SavedModel {
            kind,
            seed,
            normalizer: norm,
            model: params,
        },
        stop,
        notes,
    ))
}

/// Trains one roster model on the estimated-mass samples of a split.
pub fn train_model(
    kind: ModelKind,
    samples: &[Sample],
    split: &Split,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(SavedModel, Vec<StopReason>, Vec<String>)> {
    let xt = rows(samples, &split.train);
    let lt = labels(samples, &split.train);
    let xv = rows(samples, &split.verify);
    let lv = labels(samples, &split.verify);
    fit_classifier(kind, (&xt, &lt), Some((&xv, &lv)), NUM_VARIETIES, config, seed)
}

/// One repeat: split, mass-model search on train/verify, mass replacement
/// for every partition, normalization on train, roster training and test
/// evaluation.
pub fn run_repeat(samples: &[Sample], config: &ExperimentConfig, repeat: usize) -> Result<(RepeatResult, RepeatArtifacts)> {
    let seed = repeat_seed(config.seed, repeat);
    let sp = split(samples, &config.split, split_seed(seed))?;
    let train: Vec<&Sample> = sp.train.iter().map(|&i| &samples[i]).collect();
    let verify: Vec<&Sample> = sp.verify.iter().map(|&i| &samples[i]).collect();
    let search = subset_search(&train, &verify)?;
    let best_row = search
        .table
        .iter()
        .find(|r| r.bits == search.best_bits)
        .expect("best subset present in table");

    let estimated = with_estimated_mass(samples, &search.best);
    let part = partition_of(&sp, samples.len());
    let predictions: Vec<MassPrediction> = samples
        .iter()
        .zip(&estimated)
        .enumerate()
        .map(|(i, (s, e))| MassPrediction {
            repeat,
            id: s.id.clone(),
            variety: s.variety,
            partition: part[i].to_string(),
            actual: s.mass(),
            predicted: e.mass(),
        })
        .collect();
    let test_metrics = if sp.test.is_empty() {
        None
    } else {
        let (p, a): (Vec<f64>, Vec<f64>) = sp.test.iter().map(|&i| (estimated[i].mass(), samples[i].mass())).unzip();
        metrics(&p, &a).ok()
    };

    let xtest_labels = labels(&estimated, &sp.test);

    let mut outcomes = Vec::new();
    let mut saved = Vec::new();
    for (mi, &kind) in config.models.iter().enumerate() {
        let mseed = model_seed(seed, mi);
        let (model, stop, notes) = train_model(kind, &estimated, &sp, config, mseed)
            .map_err(|e| Error::InvalidParameter(format!("train {kind}: {e}")))?;
        let xtest: Vec<Vec<f64>> = sp
            .test
            .iter()
            .map(|&i| match &model.normalizer {
                Some(n) => n.apply(&estimated[i].features),
                None => estimated[i].features.to_vec(),
            })
            .collect();
        let evaluation = evaluate_classifier(&model.model, &xtest, &xtest_labels, NUM_VARIETIES)?;
        outcomes.push(ModelOutcome {
            kind,
            seed: mseed,
            evaluation,
            stop,
            notes,
        });
        saved.push(model);
    }

    let result = RepeatResult {
        repeat,
        seed,
        sizes: (sp.train.len(), sp.test.len(), sp.verify.len()),
        mass: Some(MassFit {
            bits: search.best_bits,
            features: best_row.features.clone(),
            model: search.best,
            verify: best_row.verify.expect("best subset has verify metrics"),
            test: test_metrics,
        }),
        models: outcomes,
        error: None,
    };
    Ok((
        result,
        RepeatArtifacts {
            split: sp,
            search,
            predictions,
            models: saved,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub title: String,
    /// Per-variety recall %, averaged over the repeats where it is defined.
    pub recall: Vec<Option<f64>>,
    /// Mean of the defined entries of `recall`.
    pub mean: f64,
    /// Overall accuracy %, averaged over repeats.
    pub accuracy: f64,
    /// Confusion matrices summed over repeats.
    pub confusion: Vec<Vec<usize>>,
    pub repeats: usize,
    pub paper_recall: Vec<f64>,
    pub paper_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarietyMass {
    pub variety: Variety,
    pub n: usize,
    pub metrics: Option<RegressionMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSummary {
    /// Test-partition predictions pooled over repeats.
    pub pooled_test: Option<RegressionMetrics>,
    pub per_variety: Vec<VarietyMass>,
    pub verify_r2_mean: f64,
    /// How often each subset was selected.
    pub selected: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub master_seed: u64,
    pub repeats_requested: usize,
    pub repeat_seeds: Vec<u64>,
    pub models: Vec<ModelSummary>,
    pub mass: MassSummary,
    pub repeat_results: Vec<RepeatResult>,
    /// Repeats that aborted.
    pub incomplete: Vec<usize>,
}

pub fn summarize_model(kind: ModelKind, results: &[RepeatResult]) -> ModelSummary {
    let outcomes: Vec<&ModelOutcome> = results
        .iter()
        .flat_map(|r| r.models.iter().filter(|m| m.kind == kind))
        .collect();
    let recall: Vec<Option<f64>> = (0..NUM_VARIETIES)
        .map(|v| {
            let vals: Vec<f64> = outcomes.iter().filter_map(|o| o.evaluation.recall[v]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let defined: Vec<f64> = recall.iter().flatten().copied().collect();
    let mean = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    let accuracy = if outcomes.is_empty() {
        f64::NAN
    } else {
        outcomes.iter().map(|o| o.evaluation.accuracy).sum::<f64>() / outcomes.len() as f64
    };
    let mut confusion = vec![vec![0; NUM_VARIETIES]; NUM_VARIETIES];
    for o in &outcomes {
        for (i, row) in o.evaluation.confusion.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                confusion[i][j] += c;
            }
        }
    }
    let paper = PAPER_RESULTS.iter().find(|(k, _, _)| *k == kind).expect("every kind has a paper row");
    ModelSummary {
        kind,
        title: kind.title().to_string(),
        recall,
        mean,
        accuracy,
        confusion,
        repeats: outcomes.len(),
        paper_recall: paper.1.to_vec(),
        paper_mean: paper.2,
    }
}

pub fn summarize_mass(results: &[RepeatResult], predictions: &[MassPrediction]) -> MassSummary {
    let test: Vec<&MassPrediction> = predictions.iter().filter(|p| p.partition == "test").collect();
    let pooled = |ps: &[&MassPrediction]| -> Option<RegressionMetrics> {
        let (p, a): (Vec<f64>, Vec<f64>) = ps.iter().map(|m| (m.predicted, m.actual)).unzip();
        metrics(&p, &a).ok()
    };
    let per_variety = Variety::ALL
        .iter()
        .map(|&v| {
            let ps: Vec<&MassPrediction> = test.iter().copied().filter(|p| p.variety == v).collect();
            VarietyMass {
                variety: v,
                n: ps.len(),
                metrics: if ps.len() >= 2 { pooled(&ps) } else { None },
            }
        })
        .collect();
    let fits: Vec<&MassFit> = results.iter().filter_map(|r| r.mass.as_ref()).collect();
    let mut selected = BTreeMap::new();
    for f in &fits {
        *selected.entry(f.features.clone()).or_insert(0) += 1;
    }
    MassSummary {
        pooled_test: if test.len() >= 2 { pooled(&test) } else { None },
        per_variety,
        verify_r2_mean: fits.iter().map(|f| f.verify.r_squared).sum::<f64>() / fits.len().max(1) as f64,
        selected,
    }
}

/// Runs every repeat on an existing dataset and aggregates the results.
pub fn run_on_samples(samples: &[Sample], config: &ExperimentConfig) -> Result<(ExperimentReport, Vec<Option<RepeatArtifacts>>)> {
    config.validate()?;
    let run = |r: usize| match run_repeat(samples, config, r) {
        Ok((res, art)) => (res, Some(art)),
        Err(e) => (
            RepeatResult {
                repeat: r,
                seed: repeat_seed(config.seed, r),
                sizes: (0, 0, 0),
                mass: None,
                models: Vec::new(),
                error: Some(e.to_string()),
            },
            None,
        ),
    };
    let outputs: Vec<(RepeatResult, Option<RepeatArtifacts>)> = if config.parallel {
        (0..config.repeats).into_par_iter().map(run).collect()
    } else {
        (0..config.repeats).map(run).collect()
    };
    let (results, artifacts): (Vec<RepeatResult>, Vec<Option<RepeatArtifacts>>) = outputs.into_iter().unzip();
    let predictions: Vec<MassPrediction> = artifacts.iter().flatten().flat_map(|a| a.predictions.clone()).collect();
    let mut kinds = config.models.clone();
    kinds.sort();
    kinds.dedup();
    let report = ExperimentReport {
        master_seed: config.seed,
        repeats_requested: config.repeats,
        repeat_seeds: results.iter().map(|r| r.seed).collect(),
        models: kinds.iter().map(|&k| summarize_model(k, &results)).collect(),
        mass: summarize_mass(&results, &predictions),
        incomplete: results.iter().filter(|r| r.error.is_some()).map(|r| r.repeat).collect(),
        repeat_results: results,
    };
    Ok((report, artifacts))
}

fn fmt_pct(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.1}"),
        _ => "n/a".to_string(),
    }
}

/// Human-readable results table with the published values alongside.
pub fn render_text(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Classification recall (%), mean of {} repeat(s), master seed {}",
        report.repeats_requested, report.master_seed
    );
    let _ = write!(s, "{:<32}", "Model");
    for v in Variety::ALL {
        let _ = write!(s, "{:>10}", v.name());
    }
    let _ = writeln!(s, "{:>10}{:>12}", "Mean", "Paper mean");
    for m in &report.models {
        let _ = write!(s, "{:<32}", m.title);
        for r in &m.recall {
            let _ = write!(s, "{:>10}", fmt_pct(*r));
        }
        let _ = writeln!(s, "{:>10}{:>12.1}", fmt_pct(Some(m.mean)), m.paper_mean);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Published per-variety recall (%)");
    for m in &report.models {
        let _ = write!(s, "{:<32}", m.title);
        for r in &m.paper_recall {
            let _ = write!(s, "{r:>10.1}");
        }
        let _ = writeln!(s, "{:>10.1}", m.paper_mean);
    }
    let _ = writeln!(s);
    if let Some(p) = &report.mass.pooled_test {
        let _ = writeln!(
            s,
            "Mass model (pooled test): R2 {:.3}, mean error {:.3} g, error std {:.3} g, RMSE {:.3} g; published R2 {:.2}, std {:.2} g",
            p.r_squared, p.mean_error, p.std_error, p.rmse, PAPER_MASS.0, PAPER_MASS.2
        );
    }
    let _ = writeln!(s, "Mean verify R2 of selected mass models: {:.4}", report.mass.verify_r2_mean);
    for (subset, n) in &report.mass.selected {
        let _ = writeln!(s, "  selected {subset}: {n}x");
    }
    if !report.incomplete.is_empty() {
        let _ = writeln!(s, "Incomplete repeats: {:?}", report.incomplete);
        for r in report.repeat_results.iter().filter(|r| r.error.is_some()) {
            let _ = writeln!(s, "  repeat {}: {}", r.repeat, r.error.as_deref().unwrap_or(""));
        }
    }
    s
}

/// One row per model: variety recalls, mean, then the published values.
pub fn render_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("model");
    for v in Variety::ALL {
        let _ = write!(s, ",{}", v.name());
    }
    s.push_str(",mean,accuracy,repeats");
    for v in Variety::ALL {
        let _ = write!(s, ",paper_{}", v.name());
    }
    s.push_str(",paper_mean\n");
    for m in &report.models {
        s.push_str(m.kind.name());
        for r in &m.recall {
            let _ = write!(s, ",{}", r.map(|x| x.to_string()).unwrap_or_default());
        }
        let _ = write!(s, ",{},{},{}", m.mean, m.accuracy, m.repeats);
        for r in &m.paper_recall {
            let _ = write!(s, ",{r}");
        }
        let _ = writeln!(s, ",{}", m.paper_mean);
    }
    s
}

/// Writes the three report renderings into `dir`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(dir.join("report.json"), report)?;
    std::fs::write(dir.join("report.csv"), render_csv(report))?;
    std::fs::write(dir.join("report.txt"), render_text(report))?;
    Ok(())
}

/// Full run: synthesize, image and extract in memory, run every repeat and
/// write all artifacts under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.toml"), config.to_toml()?)?;

    let fruits = synthesize(config)?;
    let man = manifest(&fruits);
    write_csv(out_dir.join("manifest.csv"), &man)?;
    let scale = calibration_scale(&config.render, config.calibration_target_mm)?;
    write_json(out_dir.join("calibration.json"), &scale)?;
    let feats = extract_all(&fruits, &config.render, &scale)?;
    write_csv(out_dir.join("features.csv"), &feats)?;
    let samples = crate::io::join_samples(&feats, &man)?;

    let (report, artifacts) = run_on_samples(&samples, config)?;
    let preds: Vec<MassPrediction> = artifacts.iter().flatten().flat_map(|a| a.predictions.clone()).collect();
    write_csv(out_dir.join("mass_predictions.csv"), &preds)?;
    for (r, art) in artifacts.iter().enumerate() {
        let Some(art) = art else { continue };
        let dir = out_dir.join("repeats").join(format!("repeat_{r:02}"));
        std::fs::create_dir_all(&dir)?;
        write_json(dir.join("split.json"), &art.split)?;
        write_json(dir.join("mass_search.json"), &art.search)?;
        for m in &art.models {
            write_json(dir.join(format!("model_{}.json", m.kind)), m)?;
        }
    }
    write_report(out_dir, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Smallest half-width (g) of the residual histogram range.
pub const HIST_MIN_HALF_WIDTH: f64 = 0.5;

/// Histogram on `[−M, M]` with `M = max(max |v|, HIST_MIN_HALF_WIDTH)`;
/// the last bin includes its upper edge.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let m = values.iter().fold(HIST_MIN_HALF_WIDTH, |a, v| a.max(v.abs()));
    let width = 2.0 * m / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| -m + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let b = (((v + m) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    Histogram { edges, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSummary {
    pub n: usize,
    pub residual_mean: f64,
    pub residual_std: f64,
    pub mass_r2: Option<f64>,
    /// Measured against true dimension, L, W, T.
    pub dimension_r2: Vec<(String, Option<f64>)>,
    pub histogram: Histogram,
}

#[derive(Serialize)]
struct ScatterRow<'a> {
    id: &'a str,
    variety: Variety,
    actual: f64,
    predicted: f64,
}

#[derive(Serialize)]
struct HistRow {
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Serialize)]
struct DimRow<'a> {
    id: &'a str,
    variety: Variety,
    actual_mm: f64,
    measured_mm: f64,
}

/// Writes plot-ready CSVs under `run_dir/plots` from a finished run: the
/// actual-vs-estimated mass scatter and residual histogram (test
/// partitions) and measured-vs-true dimension scatters.
pub fn emit_plots(run_dir: &Path, bins: usize) -> Result<PlotSummary> {
    let need = |name: &str| -> Result<std::path::PathBuf> {
        let p = run_dir.join(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::InvalidParameter(format!("missing run artifact {name}")))
        }
    };
    let preds: Vec<MassPrediction> = read_csv(need("mass_predictions.csv")?)?;
    let man: Vec<ManifestRow> = read_csv(need("manifest.csv")?)?;
    let feats: Vec<FeatureRow> = read_csv(need("features.csv")?)?;
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs ≥ 1 bin".into()));
    }
    let plots = run_dir.join("plots");
    std::fs::create_dir_all(&plots)?;

    let test: Vec<&MassPrediction> = preds.iter().filter(|p| p.partition == "test").collect();
    let scatter: Vec<ScatterRow> = test
        .iter()
        .map(|p| ScatterRow {
            id: &p.id,
            variety: p.variety,
            actual: p.actual,
            predicted: p.predicted,
        })
        .collect();
    write_csv(plots.join("mass_scatter.csv"), &scatter)?;
    let residuals: Vec<f64> = test.iter().map(|p| p.predicted - p.actual).collect();
    let hist = histogram(&residuals, bins);
    let hist_rows: Vec<HistRow> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| HistRow {
            lo: hist.edges[i],
            hi: hist.edges[i + 1],
            count: c,
        })
        .collect();
    write_csv(plots.join("residual_histogram.csv"), &hist_rows)?;

    let by_id: BTreeMap<&str, &ManifestRow> = man.iter().map(|m| (m.id.as_str(), m)).collect();
    let mut dimension_r2 = Vec::new();
    for (name, get_true, get_meas) in [
        ("L", (|m: &ManifestRow| m.length_mm) as fn(&ManifestRow) -> f64, (|f: &FeatureRow| f.length) as fn(&FeatureRow) -> f64),
        ("W", |m: &ManifestRow| m.width_mm, |f: &FeatureRow| f.width),
        ("T", |m: &ManifestRow| m.thickness_mm, |f: &FeatureRow| f.thickness),
    ] {
        let rows: Vec<DimRow> = feats
            .iter()
            .filter_map(|f| {
                by_id.get(f.id.as_str()).map(|m| DimRow {
                    id: &f.id,
                    variety: f.variety,
                    actual_mm: get_true(m),
                    measured_mm: get_meas(f),
                })
            })
            .collect();
        write_csv(plots.join(format!("dimension_{name}.csv")), &rows)?;
        let (a, b): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.actual_mm, r.measured_mm)).unzip();
        dimension_r2.push((name.to_string(), if a.len() >= 2 { pearson_r2(&a, &b) } else { None }));
    }

    let n = residuals.len();
    let residual_mean = residuals.iter().sum::<f64>() / n.max(1) as f64;
    let residual_std = if n >= 2 {
        (residuals.iter().map(|r| (r - residual_mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let (p, a): (Vec<f64>, Vec<f64>) = test.iter().map(|t| (t.predicted, t.actual)).unzip();
    let summary = PlotSummary {
        n,
        residual_mean,
        residual_std,
        mass_r2: if n >= 2 { pearson_r2(&p, &a) } else { None },
        dimension_r2,
        histogram: hist,
    };
    write_json(plots.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub feature: String,
    pub anova: Anova,
    pub groups: Vec<GroupSummary>,
}

/// Per-feature variety means, stds, one-way ANOVA and HSD letters.
pub fn feature_tables(samples: &[Sample], alpha: f64) -> Result<Vec<FeatureTable>> {
    let present: Vec<Variety> = Variety::ALL
        .iter()
        .copied()
        .filter(|v| samples.iter().any(|s| s.variety == *v))
        .collect();
    let labels: Vec<String> = present.iter().map(|v| v.to_string()).collect();
    FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let groups: Vec<Vec<f64>> = present
                .iter()
                .map(|v| samples.iter().filter(|s| s.variety == *v).map(|s| s.features[j]).collect())
                .collect();
            Ok(FeatureTable {
                feature: name.to_string(),
                anova: anova_oneway(&groups)?,
                groups: summarize(&labels, &groups, alpha)?,
            })
        })
        .collect()
}

pub fn render_feature_tables(tables: &[FeatureTable]) -> String {
    let mut s = String::new();
    for t in tables {
        let _ = writeln!(
            s,
            "{}: F({}, {}) = {:.3}, p = {:.3e}",
            t.feature, t.anova.df_between, t.anova.df_within, t.anova.f, t.anova.p
        );
        for g in &t.groups {
            let _ = writeln!(s, "  {:<10} n={:<4} {:>10.3} ± {:<9.3} {}", g.label, g.n, g.mean, g.std, g.letters);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_sum() {
        let v = [-1.0, -0.2, 0.0, 0.3, 2.0, 2.0];
        let h = histogram(&v, 20);
        assert_eq!(h.counts.iter().sum::<usize>(), v.len());
        assert_eq!(h.edges.len(), 21);
        assert_eq!(h.edges[0], -2.0);
        assert_eq!(*h.edges.last().unwrap(), 2.0);
        assert_eq!(h.counts[19], 2);
    }

    #[test]
    fn perfect_predictor_histogram_is_central() {
        let h = histogram(&[0.0; 30], 20);
        assert_eq!(h.counts[10], 30);
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let c = ExperimentConfig::from_toml_str("repeats = 3\nmodels = [\"mlp\", \"anfis-fcm\"]\n[mlp]\nepochs = 5\n").unwrap();
        assert_eq!(c.repeats, 3);
        assert_eq!(c.models, vec![ModelKind::Mlp, ModelKind::AnfisFcm]);
        assert_eq!(c.mlp.epochs, 5);
        assert_eq!(c.mlp.hidden, 5);
        assert_eq!(c.samples_per_variety, 49);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ExperimentConfig::from_toml_str("repeats = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("models = []").is_err());
        assert!(ExperimentConfig::from_toml_str("[split]\ntrain = 0.5\ntest = 0.1\nverify = 0.1").is_err());
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn synthesized_ids_and_counts() {
        let c = ExperimentConfig {
            samples_per_variety: 4,
            ..Default::default()
        };
        let f = synthesize(&c).unwrap();
        assert_eq!(f.len(), 20);
        assert_eq!(f[0].id, "Ordubad-000");
        assert_eq!(f, synthesize(&c).unwrap());
    }

    #[test]
    fn calibration_recovers_rig_scale() {
        let s = calibration_scale(&RenderConfig::default(), 20.0).unwrap();
        assert!((s.mm_per_pixel - 0.1).abs() < 1e-12);
    }
}
