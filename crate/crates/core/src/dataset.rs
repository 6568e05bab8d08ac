//! Samples, stratified splits and min-max input normalization shared by every
//! learner.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_VARIETIES: usize = 5;
/// L, W, T, PA₁, PA₂, PA₃, mass.
pub const NUM_FEATURES: usize = 7;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["L", "W", "T", "PA1", "PA2", "PA3", "mass"];
/// Index of the mass column.
pub const MASS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variety {
    Ordubad,
    Shahrod,
    Maragheh,
    Oromieh,
    Nasiri,
}

impl Variety {
    pub const ALL: [Variety; NUM_VARIETIES] = [
        Variety::Ordubad,
        Variety::Shahrod,
        Variety::Maragheh,
        Variety::Oromieh,
        Variety::Nasiri,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Variety::Ordubad => "Ordubad",
            Variety::Shahrod => "Shahrod",
            Variety::Maragheh => "Maragheh",
            Variety::Oromieh => "Oromieh",
            Variety::Nasiri => "Nasiri",
        }
    }
}

impl fmt::Display for Variety {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variety {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variety '{s}'")))
    }
}

/// One fruit: six image features plus mass (actual or estimated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub variety: Variety,
    pub features: [f64; NUM_FEATURES],
}

impl Sample {
    pub fn new(id: impl Into<String>, variety: Variety, features: [f64; NUM_FEATURES]) -> Result<Self> {
        let id = id.into();
        if features.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "sample {id}: features must be finite and positive"
            )));
        }
        Ok(Self {
            id,
            variety,
            features,
        })
    }

    /// The six image features (mass excluded).
    pub fn image_features(&self) -> [f64; 6] {
        let f = &self.features;
        [f[0], f[1], f[2], f[3], f[4], f[5]]
    }

    pub fn mass(&self) -> f64 {
        self.features[MASS]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub verify: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            test: 0.15,
            verify: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.test, self.verify];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split ratios {parts:?} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }
}

/// Disjoint index lists into the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub verify: Vec<usize>,
}

pub const MIN_PER_CLASS: usize = 3;

/// Stratified split: per class, `round(n·test)` test and `round(n·verify)`
/// verify samples, the remainder going to train. Indices within each list
/// are sorted ascending.
pub fn split(samples: &[Sample], ratios: &SplitRatios, seed: u64) -> Result<Split> {
    ratios.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Split {
        seed,
        train: Vec::new(),
        test: Vec::new(),
        verify: Vec::new(),
    };
    for v in Variety::ALL {
        let mut idx: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.variety == v)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < MIN_PER_CLASS {
            return Err(Error::ClassTooSmall {
                class: v.to_string(),
                count: idx.len(),
                min: MIN_PER_CLASS,
            });
        }
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let n_test = (n * ratios.test).round() as usize;
        let n_verify = (n * ratios.verify).round() as usize;
        let n_verify = n_verify.min(idx.len() - n_test);
        out.test.extend_from_slice(&idx[..n_test]);
        out.verify.extend_from_slice(&idx[n_test..n_test + n_verify]);
        out.train.extend_from_slice(&idx[n_test + n_verify..]);
    }
    out.train.sort_unstable();
    out.test.sort_unstable();
    out.verify.sort_unstable();
    Ok(out)
}

/// Per-feature min-max scaling fitted on training rows. Constant columns
/// are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub dropped: Vec<bool>,
}

impl Normalizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("normalizer training rows"))?;
        let d = first.len();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            for (j, &v) in r.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let dropped = min.iter().zip(&max).map(|(a, b)| b - a == 0.0).collect();
        Ok(Self { min, max, dropped })
    }

    pub fn input_dim(&self) -> usize {
        self.min.len()
    }

    /// Number of retained features.
    pub fn output_dim(&self) -> usize {
        self.dropped.iter().filter(|d| !**d).count()
    }

    /// `(x − min)/(max − min)` on retained features; values outside the
    /// training range are not clipped.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "normalizer input width");
        x.iter()
            .enumerate()
            .filter(|(j, _)| !self.dropped[*j])
            .map(|(j, &v)| (v - self.min[j]) / (self.max[j] - self.min[j]))
            .collect()
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

pub fn fit_normalizer(train: &[Sample]) -> Result<Normalizer> {
    let rows: Vec<Vec<f64>> = train.iter().map(|s| s.features.to_vec()).collect();
    Normalizer::fit(&rows)
}

pub fn select<'a>(samples: &'a [Sample], idx: &[usize]) -> Vec<&'a Sample> {
    idx.iter().map(|&i| &samples[i]).collect()
}

/// One-hot rows for class labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|&c| {
            let mut v = vec![0.0; classes];
            v[c] = 1.0;
            v
        })
        .collect()
}
