//! Multi-modal malware open-set recognition.
//!
//! The pipeline ingests already-extracted static features in two
//! modalities — numeric vectors rendered as grayscale images and
//! import/behavior token lists rendered as fixed-length sentences — and
//! learns one fused 1,024-d embedding with three joint objectives:
//! cross-entropy over known families, a contrastive triplet loss in the
//! primary space, and a ρ-bounded enclosing-sphere loss in a learned
//! sub-space. At test time a sample is assigned its classifier-predicted
//! family only if its embedding falls within that family's centroid
//! distance threshold; otherwise it is flagged as an unknown family.
//!
//! Everything runs on CPU in f64 and is deterministic given
//! (seed, config, data).

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod detector;
pub mod dual_embedding;
pub mod error;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod numeric_encoder;
pub mod optim;
pub mod plot;
pub mod report;
pub mod tensor;
pub mod textual_encoder;
pub mod train;

pub use error::{Error, Result};
