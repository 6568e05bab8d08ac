//! Apricot grading pipeline.
//!
//! The crate covers every stage of a three-view fruit grading rig, from
//! synthetic ground truth to variety classification:
//!
//! - [`synthgen`]: per-variety fruit generation and superellipse silhouette rendering
//! - [`imaging`]: Otsu binarization, silhouette cleanup, calibration and metrology
//! - [`dataset`]: samples, stratified splits and min-max normalization
//! - [`massmodel`]: exhaustive best-subset linear mass models
//! - [`stats`]: one-way ANOVA, Tukey HSD letter displays, agreement
//! - [`classifiers`]: Levenberg-Marquardt MLP and least-squares RBF networks
//! - [`anfis`]: first-order Sugeno ANFIS with grid, subtractive and C-means rules
//! - [`pipeline`]: repeated end-to-end experiments and report emission
//!
//! All stochastic operations take explicit seeds; given the same inputs every
//! function returns bit-identical results.

pub mod anfis;
pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod io;
pub mod linalg;
pub mod massmodel;
pub mod pgm;
pub mod pipeline;
pub mod special;
pub mod stats;
pub mod synthgen;

pub use dataset::{Sample, Variety, NUM_FEATURES, NUM_VARIETIES};
pub use error::{Error, Result};
