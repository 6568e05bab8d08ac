//! `apricot`: run the grading pipeline stage by stage or end to end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apricot_core::classifiers::{evaluate_classifier, EvaluationReport, ModelKind, SavedModel};
use apricot_core::dataset::{split, Sample, Split, Variety, NUM_VARIETIES};
use apricot_core::imaging::{calibrate, extract_features, target_extent_px, CalibrationScale};
use apricot_core::io::{join_samples, read_csv, read_json, write_csv, write_json, FeatureRow, ManifestRow};
use apricot_core::massmodel::{metrics, subset_search, LinearModel, SubsetSearch};
use apricot_core::pipeline::{
    calibration_scale, emit_plots, feature_tables, manifest, model_seed, render_feature_tables, render_text,
    repeat_seed, run_experiment, split_seed, synthesize, train_model, with_estimated_mass, ExperimentConfig,
};
use apricot_core::synthgen::{render_calibration_target, render_views};
use apricot_core::{pgm, Error};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
#[error("error[{stage}]: {source}")]
struct StageError {
    stage: &'static str,
    #[source]
    source: Error,
}

type StageResult<T> = std::result::Result<T, StageError>;

trait Tag<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T, E: Into<Error>> Tag<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|e| StageError {
            stage,
            source: e.into(),
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "apricot", version, about = "Apricot grading pipeline: imaging, mass models and variety classifiers")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// TOML experiment configuration; unspecified keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving this command's outputs.
    #[arg(long, global = true, default_value = "apricot-out")]
    out_dir: PathBuf,
    /// Number of repeated splits.
    #[arg(long, global = true)]
    repeats: Option<usize>,
    /// Comma-separated roster, e.g. `mlp,anfis-fcm`.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw fruits and write three PGM views each, the manifest and a calibration target.
    Synth,
    /// Calibrate from the target image and measure every fruit.
    Extract {
        /// Directory written by `synth`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Exhaustive subset search for the linear mass model.
    FitMass {
        /// Directory holding `features.csv` and `manifest.csv`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Apply a saved mass model to every fruit.
    PredictMass {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mass_model: PathBuf,
    },
    /// Train one classifier on the first repeat's split.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelKind,
        /// Use this mass model instead of fitting one.
        #[arg(long)]
        mass_model: Option<PathBuf>,
    },
    /// Score a trained classifier on the test partition.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model_file: PathBuf,
        /// Defaults to `mass_model.json` next to the model file.
        #[arg(long)]
        mass_model: Option<PathBuf>,
        /// Defaults to `split.json` next to the model file.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Full experiment over all repeats.
    Run,
    /// Per-feature variety means, ANOVA and letter groups.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
    /// Plot-ready CSVs from a finished run.
    EmitPlots {
        /// Defaults to `--out-dir`.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
}

fn load_config(g: &GlobalOpts) -> StageResult<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p).stage("config")?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(r) = g.repeats {
        cfg.repeats = r;
    }
    if let Some(m) = &g.models {
        cfg.models = m.clone();
    }
    cfg.validate().stage("config")?;
    Ok(cfg)
}

fn out_dir<'a>(g: &'a GlobalOpts, stage: &'static str) -> StageResult<&'a Path> {
    std::fs::create_dir_all(&g.out_dir).stage(stage)?;
    Ok(&g.out_dir)
}

fn image_path(dir: &Path, id: &str, view: usize) -> PathBuf {
    dir.join("images").join(format!("{id}_view{view}.pgm"))
}

fn load_samples(data: &Path, stage: &'static str) -> StageResult<Vec<Sample>> {
    let feats: Vec<FeatureRow> = read_csv(data.join("features.csv")).stage(stage)?;
    let man: Vec<ManifestRow> = read_csv(data.join("manifest.csv")).stage(stage)?;
    join_samples(&feats, &man).stage(stage)
}

fn first_split(samples: &[Sample], cfg: &ExperimentConfig) -> apricot_core::Result<Split> {
    split(samples, &cfg.split, split_seed(repeat_seed(cfg.seed, 0)))
}

fn search_mass(samples: &[Sample], sp: &Split) -> apricot_core::Result<SubsetSearch> {
    let train: Vec<&Sample> = sp.train.iter().map(|&i| &samples[i]).collect();
    let verify: Vec<&Sample> = sp.verify.iter().map(|&i| &samples[i]).collect();
    subset_search(&train, &verify)
}

fn synth(cfg: &ExperimentConfig, out: &Path) -> StageResult<()> {
    let fruits = synthesize(cfg).stage("synth")?;
    std::fs::create_dir_all(out.join("images")).stage("synth")?;
    for f in &fruits {
        let views = render_views(&f.fruit, &cfg.render).stage("synth")?;
        for (v, img) in views.iter().enumerate() {
            pgm::write(image_path(out, &f.id, v + 1), img).stage("synth")?;
        }
    }
    let target = render_calibration_target(cfg.calibration_target_mm, &cfg.render).stage("synth")?;
    pgm::write(out.join("calibration_target.pgm"), &target).stage("synth")?;
    write_csv(out.join("manifest.csv"), &manifest(&fruits)).stage("synth")?;
    std::fs::write(out.join("config.toml"), cfg.to_toml().stage("synth")?).stage("synth")?;
    println!("synthesized {} fruits into {}", fruits.len(), out.display());
    Ok(())
}

fn extract(cfg: &ExperimentConfig, data: &Path, out: &Path) -> StageResult<()> {
    let man: Vec<ManifestRow> = read_csv(data.join("manifest.csv")).stage("extract")?;
    let target = pgm::read(data.join("calibration_target.pgm")).stage("extract")?;
    let px = target_extent_px(&target).stage("extract")?;
    let mm = cfg.calibration_target_mm;
    let scale: CalibrationScale = calibrate((mm, mm), px).stage("extract")?;
    let mut rows = Vec::with_capacity(man.len());
    for m in &man {
        let views = [1, 2, 3].map(|v| pgm::read(image_path(data, &m.id, v)));
        let [a, b, c] = views;
        let views = [a.stage("extract")?, b.stage("extract")?, c.stage("extract")?];
        let feats = extract_features(&views, &scale).map_err(|e| StageError {
            stage: "extract",
            source: Error::InvalidParameter(format!("fruit {}: {e}", m.id)),
        })?;
        rows.push(FeatureRow::new(m.id.clone(), m.variety, &feats));
    }
    write_csv(out.join("features.csv"), &rows).stage("extract")?;
    write_json(out.join("calibration.json"), &scale).stage("extract")?;
    if data != out {
        write_csv(out.join("manifest.csv"), &man).stage("extract")?;
    }
    println!("extracted {} fruits at {:.5} mm/px", rows.len(), scale.mm_per_pixel);
    Ok(())
}

fn fit_mass(cfg: &ExperimentConfig, data: &Path, out: &Path) -> StageResult<()> {
    let samples = load_samples(data, "fit-mass")?;
    let sp = first_split(&samples, cfg).stage("fit-mass")?;
    let search = search_mass(&samples, &sp).stage("fit-mass")?;
    write_json(out.join("split.json"), &sp).stage("fit-mass")?;
    write_json(out.join("mass_search.json"), &search).stage("fit-mass")?;
    write_json(out.join("mass_model.json"), &search.best).stage("fit-mass")?;
    let row = search.table.iter().find(|r| r.bits == search.best_bits);
    match row.and_then(|r| r.verify.as_ref()) {
        Some(v) => println!(
            "best subset {}: verify R2 {:.4}, RMSE {:.3} g",
            search.best.mask_label(),
            v.r_squared,
            v.rmse
        ),
        None => println!("best subset {}", search.best.mask_label()),
    }
    Ok(())
}

#[derive(Serialize)]
struct MassRow<'a> {
    id: &'a str,
    variety: Variety,
    actual: f64,
    predicted: f64,
}

fn predict_mass(data: &Path, model_path: &Path, out: &Path) -> StageResult<()> {
    let samples = load_samples(data, "predict-mass")?;
    let model: LinearModel = read_json(model_path).stage("predict-mass")?;
    let rows: Vec<MassRow> = samples
        .iter()
        .map(|s| MassRow {
            id: &s.id,
            variety: s.variety,
            actual: s.mass(),
            predicted: model.predict(&s.image_features()),
        })
        .collect();
    write_csv(out.join("mass_estimates.csv"), &rows).stage("predict-mass")?;
    let (p, a): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.predicted, r.actual)).unzip();
    let m = metrics(&p, &a).stage("predict-mass")?;
    println!(
        "{} fruits: R2 {:.4}, mean error {:.3} g, error std {:.3} g",
        rows.len(),
        m.r_squared,
        m.mean_error,
        m.std_error
    );
    Ok(())
}

fn train(cfg: &ExperimentConfig, data: &Path, kind: ModelKind, mass: Option<&Path>, out: &Path) -> StageResult<()> {
    let samples = load_samples(data, "train")?;
    let sp = first_split(&samples, cfg).stage("train")?;
    let mass_model = match mass {
        Some(p) => read_json(p).stage("train")?,
        None => search_mass(&samples, &sp).stage("fit-mass")?.best,
    };
    let estimated = with_estimated_mass(&samples, &mass_model);
    let index = cfg
        .models
        .iter()
        .position(|&k| k == kind)
        .unwrap_or_else(|| ModelKind::ALL.iter().position(|&k| k == kind).unwrap_or(0));
    let seed = model_seed(repeat_seed(cfg.seed, 0), index);
    let (saved, stop, notes) = train_model(kind, &estimated, &sp, cfg, seed).stage("train")?;
    write_json(out.join(format!("model_{kind}.json")), &saved).stage("train")?;
    write_json(out.join("split.json"), &sp).stage("train")?;
    write_json(out.join("mass_model.json"), &mass_model).stage("train")?;
    println!("trained {} (seed {seed}); stop {:?}", kind.title(), stop);
    for n in notes {
        println!("  note: {n}");
    }
    Ok(())
}

fn evaluate(
    data: &Path,
    model_file: &Path,
    mass: Option<&Path>,
    split_file: Option<&Path>,
    out: &Path,
) -> StageResult<EvaluationReport> {
    let sibling = |name: &str| model_file.parent().unwrap_or(Path::new(".")).join(name);
    let samples = load_samples(data, "evaluate")?;
    let saved: SavedModel = read_json(model_file).stage("evaluate")?;
    let mass_model: LinearModel = read_json(mass.map(Path::to_path_buf).unwrap_or_else(|| sibling("mass_model.json")))
        .stage("evaluate")?;
    let sp: Split = read_json(split_file.map(Path::to_path_buf).unwrap_or_else(|| sibling("split.json")))
        .stage("evaluate")?;
    if let Some(&bad) = sp.test.iter().find(|&&i| i >= samples.len()) {
        return Err(StageError {
            stage: "evaluate",
            source: Error::InvalidParameter(format!("split index {bad} out of range for {} samples", samples.len())),
        });
    }
    let estimated = with_estimated_mass(&samples, &mass_model);
    let xs: Vec<Vec<f64>> = sp
        .test
        .iter()
        .map(|&i| match &saved.normalizer {
            Some(n) => n.apply(&estimated[i].features),
            None => estimated[i].features.to_vec(),
        })
        .collect();
    let labels: Vec<usize> = sp.test.iter().map(|&i| estimated[i].variety.index()).collect();
    let report = evaluate_classifier(&saved.model, &xs, &labels, NUM_VARIETIES).stage("evaluate")?;
    write_json(out.join(format!("evaluation_{}.json", saved.kind)), &report).stage("evaluate")?;
    println!("{} on {} test fruits", saved.kind.title(), labels.len());
    for (v, r) in Variety::ALL.iter().zip(&report.recall) {
        match r {
            Some(r) => println!("  {:<10} {r:6.1}%", v.name()),
            None => println!("  {:<10}    n/a", v.name()),
        }
    }
    println!("  mean recall {:.1}%, accuracy {:.1}%", report.mean_recall, report.accuracy);
    Ok(report)
}

fn stats(cfg: &ExperimentConfig, data: &Path, out: &Path) -> StageResult<()> {
    let samples = load_samples(data, "stats")?;
    let tables = feature_tables(&samples, cfg.letters_alpha).stage("stats")?;
    let text = render_feature_tables(&tables);
    write_json(out.join("stats.json"), &tables).stage("stats")?;
    std::fs::write(out.join("stats.txt"), &text).stage("stats")?;
    print!("{text}");
    Ok(())
}

fn dispatch(cli: &Cli) -> StageResult<()> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    match &cli.command {
        Command::Synth => synth(&cfg, out_dir(g, "synth")?),
        Command::Extract { data } => extract(&cfg, data, out_dir(g, "extract")?),
        Command::FitMass { data } => fit_mass(&cfg, data, out_dir(g, "fit-mass")?),
        Command::PredictMass { data, mass_model } => predict_mass(data, mass_model, out_dir(g, "predict-mass")?),
        Command::Train {
            data,
            model,
            mass_model,
        } => train(&cfg, data, *model, mass_model.as_deref(), out_dir(g, "train")?),
        Command::Evaluate {
            data,
            model_file,
            mass_model,
            split,
        } => evaluate(
            data,
            model_file,
            mass_model.as_deref(),
            split.as_deref(),
            out_dir(g, "evaluate")?,
        )
        .map(|_| ()),
        Command::Run => {
            // fail fast on an unusable render setup before synthesizing
            calibration_scale(&cfg.render, cfg.calibration_target_mm).stage("extract")?;
            let report = run_experiment(&cfg, out_dir(g, "run")?).stage("run")?;
            print!("{}", render_text(&report));
            Ok(())
        }
        Command::Stats { data } => stats(&cfg, data, out_dir(g, "stats")?),
        Command::EmitPlots { run_dir } => {
            let dir = run_dir.as_deref().unwrap_or(&g.out_dir);
            let s = emit_plots(dir, cfg.histogram_bins).stage("emit-plots")?;
            println!(
                "{} test residuals: mean {:.3} g, std {:.3} g; plots in {}",
                s.n,
                s.residual_mean,
                s.residual_std,
                dir.join("plots").display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("apricot: {e}");
            ExitCode::FAILURE
        }
    }
}
