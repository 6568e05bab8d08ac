use apricot_core::anfis::{
    anfis_classify_ensemble, fcm, fis_forward, grid_partition, lse_consequents, normalized_firing, objective,
    premise_gradient, premise_params, set_premise_params, train_hybrid, AnfisConfig, FcmParams, FisModel, GaussMf,
    HybridConfig, Rule, RuleMethod,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_fis(rng: &mut ChaCha8Rng, rules: usize, d: usize) -> FisModel {
    let rules = (0..rules)
        .map(|_| Rule {
            antecedents: (0..d)
                .map(|_| GaussMf::new(rng.random_range(-1.0..1.0), rng.random_range(0.2..1.5)).unwrap())
                .collect(),
            consequent: (0..=d).map(|_| rng.random_range(-2.0..2.0)).collect(),
        })
        .collect();
    FisModel::new(d, rules, "test", 0).unwrap()
}

fn random_xy(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let ys = xs.iter().map(|x| x.iter().map(|v| v.sin()).sum::<f64>()).collect();
    (xs, ys)
}

fn sse(m: &FisModel, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| (m.output(x) - y).powi(2)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_firing_sums_to_one(seed in any::<u64>(), rules in 1usize..8, d in 1usize..5, scale in 0.1..1e3f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_fis(&mut rng, rules, d);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..scale)).collect();
        let w = normalized_firing(&m, &x);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn output_invariant_under_rule_permutation(seed in any::<u64>(), rules in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_fis(&mut rng, rules, 3);
        let mut shuffled = m.clone();
        shuffled.rules.reverse();
        shuffled.rules.rotate_left(1);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        prop_assert!((fis_forward(&m, &x).0 - fis_forward(&shuffled, &x).0).abs() < 1e-12);
    }

    #[test]
    fn grid_rule_count_is_power(mfs in 2usize..4, d in 1usize..5) {
        let ranges = vec![(0.0, 1.0); d];
        let m = grid_partition(&ranges, mfs, 10_000).unwrap();
        prop_assert_eq!(m.rules.len(), mfs.pow(d as u32));
    }
}

#[test]
fn fcm_objective_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..100 {
        let n = rng.random_range(6..60);
        let d = rng.random_range(1..5);
        let data: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let params = FcmParams {
            clusters: rng.random_range(1..5.min(n)),
            fuzzifier: [1.5, 2.0, 3.0][case % 3],
            ..FcmParams::default()
        };
        let r = fcm(&data, &params, rng.random()).unwrap();
        for w in r.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "case {case}: {} -> {}", w[0], w[1]);
        }
        for row in &r.memberships {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn fcm_single_cluster_is_data_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<Vec<f64>> = (0..25).map(|_| vec![rng.random_range(0.0..5.0), rng.random_range(-3.0..3.0)]).collect();
    let params = FcmParams {
        clusters: 1,
        ..FcmParams::default()
    };
    let r = fcm(&data, &params, 1).unwrap();
    for j in 0..2 {
        let mean = data.iter().map(|x| x[j]).sum::<f64>() / data.len() as f64;
        assert!((r.centers[0][j] - mean).abs() < 1e-9);
    }
}

#[test]
fn consequent_solve_is_least_squares_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let mut m = random_fis(&mut rng, 4, 2);
        let (xs, ys) = random_xy(&mut rng, 60, 2);
        lse_consequents(&mut m, &xs, &ys, 0.0).unwrap();
        let base = sse(&m, &xs, &ys);
        for r in 0..m.rules.len() {
            for j in 0..m.rules[r].consequent.len() {
                for delta in [1e-3, -1e-3] {
                    m.rules[r].consequent[j] += delta;
                    assert!(sse(&m, &xs, &ys) >= base * (1.0 - 1e-12));
                    m.rules[r].consequent[j] -= delta;
                }
            }
        }
    }
}

#[test]
fn premise_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for case in 0..20 {
        let (rules, d) = (rng.random_range(1..5), rng.random_range(1..4));
        let mut m = random_fis(&mut rng, rules, d);
        let (xs, ys) = random_xy(&mut rng, 25, m.input_dim);
        let g = premise_gradient(&m, &xs, &ys);
        let p = premise_params(&m);
        let h = 1e-6;
        let fd: Vec<f64> = (0..p.len())
            .map(|i| {
                let mut q = p.clone();
                q[i] = p[i] + h;
                set_premise_params(&mut m, &q);
                let up = objective(&m, &xs, &ys);
                q[i] = p[i] - h;
                set_premise_params(&mut m, &q);
                let down = objective(&m, &xs, &ys);
                (up - down) / (2.0 * h)
            })
            .collect();
        set_premise_params(&mut m, &p);
        let err: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / norm.max(1e-12) < 1e-4, "case {case}: relative error {}", err / norm);
    }
}

#[test]
fn hybrid_training_keeps_best_snapshot() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = random_fis(&mut rng, 3, 2);
    let (xs, ys) = random_xy(&mut rng, 50, 2);
    let cfg = HybridConfig {
        epochs: 10,
        ..HybridConfig::default()
    };
    let (trained, rec) = train_hybrid(&m, (&xs, &ys), None, &cfg).unwrap();
    let best = rec.rmse.iter().copied().fold(f64::INFINITY, f64::min);
    let final_rmse = (sse(&trained, &xs, &ys) / xs.len() as f64).sqrt();
    assert!((final_rmse - best).abs() < 1e-9, "{final_rmse} vs {best}");
    assert!(trained.rules.iter().all(|r| r.antecedents.iter().all(|mf| mf.sigma >= 1e-4)));
}

#[test]
fn separable_blobs_classified_by_every_method() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let centres: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let normal = rand_distr::Normal::new(0.0, 0.02).unwrap();
    let mut draw = |per: usize| {
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        for (c, centre) in centres.iter().enumerate() {
            for _ in 0..per {
                xs.push(centre.iter().map(|v| v + rng.sample(normal)).collect::<Vec<f64>>());
                ls.push(c);
            }
        }
        (xs, ls)
    };
    let (xs, ls) = draw(30);
    let (tx, tl) = draw(40);
    for method in [RuleMethod::Grid, RuleMethod::Subtractive, RuleMethod::Fcm] {
        let (ens, _) = anfis_classify_ensemble((&xs, &ls), None, 5, method, &AnfisConfig::default(), 2).unwrap();
        let rep = apricot_core::classifiers::evaluate_classifier(&ens, &tx, &tl, 5).unwrap();
        assert!(rep.accuracy >= 99.0, "{method:?}: {}", rep.accuracy);
    }
}
