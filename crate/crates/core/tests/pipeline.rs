use apricot_core::dataset::Sample;
use apricot_core::pipeline::{run_on_samples, run_repeat, write_report, ExperimentConfig};
use apricot_core::synthgen::{default_varieties, derive_seed, sample_fruit, superellipse_area};
use apricot_core::NUM_VARIETIES;

/// Fruits with analytic features; cheap stand-in for the imaging stage.
fn analytic_samples(per: usize, seed: u64) -> Vec<Sample> {
    let mut out = Vec::new();
    for p in default_varieties() {
        for i in 0..per {
            let f = sample_fruit(&p, derive_seed(seed, p.variety.index() as u64, i as u64), 0.02).unwrap();
            let (a, b, c) = (f.length / 2.0, f.width / 2.0, f.thickness / 2.0);
            let n = f.squareness;
            out.push(
                Sample::new(
                    format!("{}-{i:03}", p.variety),
                    p.variety,
                    [
                        f.length,
                        f.width,
                        f.thickness,
                        superellipse_area(a, b, n),
                        superellipse_area(a, c, n),
                        superellipse_area(b, c, n),
                        f.mass,
                    ],
                )
                .unwrap(),
            );
        }
    }
    out
}

fn config() -> ExperimentConfig {
    ExperimentConfig {
        repeats: 3,
        ..ExperimentConfig::default()
    }
}

#[test]
fn identical_inputs_give_identical_report_bytes() {
    let samples = analytic_samples(20, 1);
    let cfg = config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let (report, _) = run_on_samples(&samples, &cfg).unwrap();
        write_report(d.path(), &report).unwrap();
    }
    for f in ["report.json", "report.csv", "report.txt"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let serial = ExperimentConfig {
        parallel: false,
        ..cfg.clone()
    };
    let (par, _) = run_on_samples(&samples, &cfg).unwrap();
    let (ser, _) = run_on_samples(&samples, &serial).unwrap();
    assert_eq!(serde_json::to_string(&par).unwrap(), serde_json::to_string(&ser).unwrap());
}

#[test]
fn corrupting_test_masses_changes_no_classifier_result() {
    let samples = analytic_samples(20, 2);
    let cfg = config();
    for r in 0..cfg.repeats {
        let (base, art) = run_repeat(&samples, &cfg, r).unwrap();
        let mut corrupted = samples.clone();
        for &i in &art.split.test {
            corrupted[i].features[6] *= 7.5;
        }
        let (ablated, _) = run_repeat(&corrupted, &cfg, r).unwrap();
        assert_eq!(base.models, ablated.models, "repeat {r}");
        assert_eq!(base.mass.as_ref().unwrap().model, ablated.mass.as_ref().unwrap().model);
        assert_ne!(base.mass.unwrap().test, ablated.mass.unwrap().test);
    }
}

#[test]
fn report_means_recompute_from_repeats() {
    let samples = analytic_samples(15, 3);
    let (report, _) = run_on_samples(&samples, &config()).unwrap();
    assert_eq!(report.repeat_seeds.len(), 3);
    for m in &report.models {
        for v in 0..NUM_VARIETIES {
            let vals: Vec<f64> = report
                .repeat_results
                .iter()
                .flat_map(|r| r.models.iter().filter(|o| o.kind == m.kind))
                .filter_map(|o| o.evaluation.recall[v])
                .collect();
            let expect = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((m.recall[v].unwrap() - expect).abs() < 1e-9);
        }
        let defined: Vec<f64> = m.recall.iter().flatten().copied().collect();
        assert!((m.mean - defined.iter().sum::<f64>() / defined.len() as f64).abs() < 1e-12);
        let total: usize = m.confusion.iter().flatten().sum();
        let tested: usize = report.repeat_results.iter().map(|r| r.sizes.1).sum();
        assert_eq!(total, tested);
    }
    for r in &report.repeat_results {
        for o in &r.models {
            assert!(o.seed != r.seed);
        }
    }
}
