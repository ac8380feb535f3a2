//! Camera view selection for multi-view crowd counting on a ground plane.
//!
//! Candidate cameras are projected to ground footprints, scored by coverage,
//! person-to-camera distance, and view diversity (optionally driven by a
//! predicted crowd density), and selected greedily. An active loop
//! interleaves selection with a simulated counting model whose accuracy
//! improves with labeled and pseudo-labeled data.

pub mod crowd;
pub mod error;
pub mod experiment;
pub mod export;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod predictor;
pub mod pseudo;
pub mod scenegen;
pub mod scoring;
pub mod selection;

pub use error::{Error, Result};
