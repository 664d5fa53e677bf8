//! ROI-gated perturbation explanations for segmentation models.
//!
//! The crate covers intensity preprocessing, superpixel partitions, ROI
//! derivation and patch gating, three perturbation engines (occlusion, RISE
//! and a LIME-style surrogate), overlap metrics and report serialization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod exec;
pub mod filter;
pub mod io;
pub mod lime;
pub mod metrics;
pub mod occlusion;
pub mod predictor;
pub mod preprocess;
pub mod report;
pub mod rise;
pub mod roi;
pub mod superpixel;
pub mod types;

pub use engine::{EngineFailure, Fill, RunOptions};
pub use error::{Error, Result};
pub use predictor::{Prediction, Predictor, PredictorInfo};
pub use types::{
    BinaryMask, ExplainReport, FloatMap, FlopsLedger, ImageF32, ImageGrid, ImageU8, Method,
    PatchGrid, SaliencyMap,
};
