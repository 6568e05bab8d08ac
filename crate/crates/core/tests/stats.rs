use apricot_core::stats::{agreement, anova_oneway, letter_groups, tukey_hsd};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_groups(rng: &mut ChaCha8Rng, means: &[f64], sizes: &[usize], sd: f64) -> Vec<Vec<f64>> {
    means
        .iter()
        .zip(sizes)
        .map(|(m, &n)| {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + sd * z
                })
                .collect()
        })
        .collect()
}

#[test]
fn anova_null_rejection_rate_is_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let trials = 1000;
    let rejected = (0..trials)
        .filter(|_| {
            let g = normal_groups(&mut rng, &[0.0; 5], &[10; 5], 1.0);
            anova_oneway(&g).unwrap().p < 0.01
        })
        .count();
    let rate = rejected as f64 / trials as f64;
    assert!((rate - 0.01).abs() <= 0.01, "rejection rate {rate}");
}

#[test]
fn letters_agree_with_pairwise_tests() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..50 {
        let k = rng.random_range(2..7);
        let means: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..4.0)).collect();
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(3..15)).collect();
        let groups = normal_groups(&mut rng, &means, &sizes, 1.0);
        let alpha = [0.01, 0.05][case % 2];
        let letters = letter_groups(&groups, alpha).unwrap();
        let hsd = tukey_hsd(&groups, alpha).unwrap();
        for i in 0..k {
            assert!(!letters[i].is_empty());
            for j in (i + 1)..k {
                let share = letters[i].chars().any(|c| letters[j].contains(c));
                assert_eq!(share, !hsd.significant[i][j], "case {case}: {letters:?} {i} {j}");
            }
        }
    }
}

proptest! {
    #[test]
    fn f_invariant_under_shift_and_scale(seed in any::<u64>(), shift in -1e3..1e3f64, scale in 0.01..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = normal_groups(&mut rng, &[0.0, 0.5, 1.0], &[6, 8, 7], 1.0);
        let moved: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| scale * x + shift).collect()).collect();
        let (a, b) = (anova_oneway(&g).unwrap(), anova_oneway(&moved).unwrap());
        prop_assert!((a.f - b.f).abs() <= 1e-6 * a.f.max(1.0));
        prop_assert!((a.p - b.p).abs() <= 1e-6);
    }

    #[test]
    fn agreement_symmetric_and_affine_invariant(
        xs in prop::collection::vec(-100.0..100.0f64, 3..30),
        noise in prop::collection::vec(-10.0..10.0f64, 30),
        a in 0.1..10.0f64,
        b in -50.0..50.0f64,
    ) {
        let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| 2.0 * x + e).collect();
        let Ok(r) = agreement(&xs, &ys) else { return Ok(()); };
        prop_assert!((r - agreement(&ys, &xs).unwrap()).abs() < 1e-9);
        let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        prop_assert!((r - agreement(&mapped, &ys).unwrap()).abs() < 1e-9);
        let flipped: Vec<f64> = ys.iter().map(|y| -a * y + b).collect();
        prop_assert!((r - agreement(&xs, &flipped).unwrap()).abs() < 1e-9);
    }
}
