//! Training-free conditional inference over contrastive embedding spaces.
//!
//! Given precomputed image, category and rationale embeddings, the crate
//! predicts categories conditioned on several rationales by projecting each
//! category onto the span of the image and rationale embeddings, searches for
//! the rationale set that maximises the joint objective, measures how
//! Bayes-consistent a conditioning method is, and scores predictions with the
//! RR/RW/WR/WW metrics.
//!
//! The `parallel` feature (on by default) spreads per-image work over a rayon
//! pool; see [`parallel`].

pub mod cli;
pub mod datastore;
pub mod diagnostics;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod metrics;
pub mod numkit;
pub mod parallel;
pub mod pipeline;
pub mod search;

pub use embedding::EmbeddingTable;
pub use error::{Error, Result};
pub use numkit::Temperature;
