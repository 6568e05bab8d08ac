//! CSV manifests exchanged between CLI stages.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, Variety};
use crate::error::{Error, Result};
use crate::imaging::ExtractedFeatures;
use crate::synthgen::GroundTruthFruit;

/// Row of the synthetic ground-truth manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub variety: Variety,
    #[serde(rename = "L_mm")]
    pub length_mm: f64,
    #[serde(rename = "W_mm")]
    pub width_mm: f64,
    #[serde(rename = "T_mm")]
    pub thickness_mm: f64,
    pub mass_g: f64,
    pub seed: u64,
}

impl ManifestRow {
    pub fn from_fruit(id: impl Into<String>, f: &GroundTruthFruit) -> Self {
        Self {
            id: id.into(),
            variety: f.variety,
            length_mm: f.length,
            width_mm: f.width,
            thickness_mm: f.thickness,
            mass_g: f.mass,
            seed: f.seed,
        }
    }
}

/// Row of the extracted-features table (mm, mm²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: String,
    pub variety: Variety,
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "W")]
    pub width: f64,
    #[serde(rename = "T")]
    pub thickness: f64,
    #[serde(rename = "PA1")]
    pub pa1: f64,
    #[serde(rename = "PA2")]
    pub pa2: f64,
    #[serde(rename = "PA3")]
    pub pa3: f64,
}

impl FeatureRow {
    pub fn new(id: impl Into<String>, variety: Variety, f: &ExtractedFeatures) -> Self {
        Self {
            id: id.into(),
            variety,
            length: f.length,
            width: f.width,
            thickness: f.thickness,
            pa1: f.pa1,
            pa2: f.pa2,
            pa3: f.pa3,
        }
    }

    pub fn features(&self) -> [f64; 6] {
        [self.length, self.width, self.thickness, self.pa1, self.pa2, self.pa3]
    }
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Joins features with manifest masses by id, in feature-table order.
pub fn join_samples(features: &[FeatureRow], manifest: &[ManifestRow]) -> Result<Vec<Sample>> {
    let masses: std::collections::BTreeMap<&str, f64> =
        manifest.iter().map(|m| (m.id.as_str(), m.mass_g)).collect();
    features
        .iter()
        .map(|f| {
            let mass = masses
                .get(f.id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidParameter(format!("id {} missing from manifest", f.id)))?;
            let x = f.features();
            Sample::new(f.id.clone(), f.variety, [x[0], x[1], x[2], x[3], x[4], x[5], mass])
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
