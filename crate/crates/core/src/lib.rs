//! Video camouflaged object detection built from boosted-tree classifiers.
//!
//! Per frame, a four-stage multi-resolution cascade turns a dense feature
//! stack into a foreground probability map. Across frames, temporal
//! neighborhood cubes of those maps feed short- and long-term refiners whose
//! outputs are fused and thresholded. The crate also carries the evaluation
//! metrics and the parameter / MAC accounting for the whole pipeline.

pub mod cascade;
pub mod complexity;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod gbdt;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod temporal;
pub mod tensor;

pub use error::{Error, Result};
