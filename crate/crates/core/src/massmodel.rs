//! Linear mass model `M = W₀ + Σ Wᵢ·Fᵢ` over the six image features, with
//! exhaustive selection among all 63 non-empty feature subsets.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::linalg::{lstsq, pearson_r2, DEFAULT_RCOND};

pub const MASS_FEATURES: [&str; 6] = ["L", "W", "T", "PA1", "PA2", "PA3"];
pub const NUM_SUBSETS: usize = 63;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: [f64; 6],
    pub active: [bool; 6],
}

impl LinearModel {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn predict(&self, x: &[f64; 6]) -> f64 {
        predict_mass(self, x)
    }

    pub fn mask_label(&self) -> String {
        mask_label(&self.active)
    }
}

pub fn mask_from_bits(bits: u8) -> [bool; 6] {
    std::array::from_fn(|i| bits & (1 << i) != 0)
}

pub fn mask_label(mask: &[bool; 6]) -> String {
    MASS_FEATURES
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(n, _)| *n)
        .collect::<Vec<_>>()
        .join("+")
}

/// `W₀ + Σ Wᵢ·Fᵢ` over active features.
pub fn predict_mass(model: &LinearModel, x: &[f64; 6]) -> f64 {
    model.intercept
        + (0..6)
            .filter(|&i| model.active[i])
            .map(|i| model.weights[i] * x[i])
            .sum::<f64>()
}

/// Ordinary least squares on the active columns plus an intercept, solved by
/// an SVD of the equilibrated design matrix.
pub fn fit_least_squares(features: &[[f64; 6]], masses: &[f64], active: [bool; 6]) -> Result<LinearModel> {
    let cols: Vec<usize> = (0..6).filter(|&i| active[i]).collect();
    if cols.is_empty() {
        return Err(Error::InvalidParameter("mass model needs at least one active feature".into()));
    }
    if features.len() != masses.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: masses.len(),
        });
    }
    let n = features.len();
    if n < cols.len() + 1 {
        return Err(Error::InvalidParameter(format!(
            "{n} rows cannot fit {} parameters",
            cols.len() + 1
        )));
    }
    let a = DMatrix::from_fn(n, cols.len() + 1, |r, c| if c == 0 { 1.0 } else { features[r][cols[c - 1]] });
    let b = DMatrix::from_column_slice(n, 1, masses);
    let sol = lstsq(&a, &b, DEFAULT_RCOND)?;
    if !sol.full_rank() {
        return Err(Error::Singular {
            rank: sol.rank,
            cols: cols.len() + 1,
        });
    }
    let mut weights = [0.0; 6];
    for (k, &i) in cols.iter().enumerate() {
        weights[i] = sol.x[(k + 1, 0)];
    }
    Ok(LinearModel {
        intercept: sol.x[(0, 0)],
        weights,
        active,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub r_squared: f64,
    /// Mean of predicted − actual, g.
    pub mean_error: f64,
    /// Sample standard deviation of the errors, g.
    pub std_error: f64,
    pub rmse: f64,
}

/// Error statistics of `predictions` against `actual` (e = predicted − actual).
pub fn metrics(predictions: &[f64], actual: &[f64]) -> Result<RegressionMetrics> {
    let n = actual.len();
    if n < 2 || predictions.len() != n {
        return Err(Error::InvalidParameter("metrics need ≥ 2 paired samples".into()));
    }
    let mean_a = actual.iter().sum::<f64>() / n as f64;
    if actual.iter().all(|&a| a == mean_a) {
        return Err(Error::ZeroVariance);
    }
    let errors: Vec<f64> = predictions.iter().zip(actual).map(|(p, a)| p - a).collect();
    let mean_error = errors.iter().sum::<f64>() / n as f64;
    let std_error = (errors.iter().map(|e| (e - mean_error).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
    let r_squared = pearson_r2(predictions, actual).unwrap_or(0.0);
    Ok(RegressionMetrics {
        r_squared,
        mean_error,
        std_error,
        rmse,
    })
}

pub fn evaluate(model: &LinearModel, features: &[[f64; 6]], masses: &[f64]) -> Result<RegressionMetrics> {
    let pred: Vec<f64> = features.iter().map(|x| predict_mass(model, x)).collect();
    metrics(&pred, masses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub bits: u8,
    pub features: String,
    pub active_count: usize,
    pub model: Option<LinearModel>,
    pub train: Option<RegressionMetrics>,
    pub verify: Option<RegressionMetrics>,
    /// Failure reason when the subset could not be fitted or scored.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSearch {
    pub best: LinearModel,
    pub best_bits: u8,
    pub table: Vec<SubsetRow>,
}

fn split_xy(samples: &[&Sample]) -> (Vec<[f64; 6]>, Vec<f64>) {
    samples.iter().map(|s| (s.image_features(), s.mass())).unzip()
}

/// Fits every non-empty subset on `train` and keeps the one with the lowest
/// verify RMSE; ties go to the lower error std, then fewer features, then
/// the lower subset bitmask.
pub fn subset_search(train: &[&Sample], verify: &[&Sample]) -> Result<SubsetSearch> {
    let (xt, yt) = split_xy(train);
    let (xv, yv) = split_xy(verify);
    let table: Vec<SubsetRow> = (1..=NUM_SUBSETS as u8)
        .into_par_iter()
        .map(|bits| {
            let mask = mask_from_bits(bits);
            let mut row = SubsetRow {
                bits,
                features: mask_label(&mask),
                active_count: mask.iter().filter(|m| **m).count(),
                model: None,
                train: None,
                verify: None,
                failure: None,
            };
            let scored = fit_least_squares(&xt, &yt, mask).and_then(|m| {
                let t = evaluate(&m, &xt, &yt)?;
                let v = evaluate(&m, &xv, &yv)?;
                Ok((m, t, v))
            });
            match scored {
                Ok((m, t, v)) => {
                    row.model = Some(m);
                    row.train = Some(t);
                    row.verify = Some(v);
                }
                Err(e) => row.failure = Some(e.to_string()),
            }
            row
        })
        .collect();

    let best = table
        .iter()
        .filter_map(|r| Some((r, r.model?, r.verify?)))
        .min_by(|(ra, _, va), (rb, _, vb)| {
            va.rmse
                .total_cmp(&vb.rmse)
                .then(va.std_error.total_cmp(&vb.std_error))
                .then(ra.active_count.cmp(&rb.active_count))
                .then(ra.bits.cmp(&rb.bits))
        })
        .ok_or(Error::Singular { rank: 0, cols: 0 })?;
    Ok(SubsetSearch {
        best: best.1,
        best_bits: best.0.bits,
        table: table.clone(),
    })
}
