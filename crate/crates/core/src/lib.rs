//! Recipient profiling toolkit.
//!
//! Predicts a sensitive attribute of a message's *recipient* (for example
//! their gender) from the text they received. The crate covers the whole
//! path from conversation corpora to analysis artifacts:
//!
//! - [`corpus`]: canonical record ingestion, annotation cleaning, filtering
//!   and dataset statistics.
//! - [`pipeline`]: concatenation of short utterances into chunks, class
//!   balancing and recipient-grouped train/validation/test splits.
//! - [`features`]: hashed word and character n-grams with TF-IDF weighting.
//! - [`model`]: binary logistic regression over sparse or dense vectors,
//!   model files and the embedding interchange reader.
//! - [`eval`]: confusion-matrix metrics, per-class gaps, transfer matrices
//!   and Cohen's kappa agreement.
//! - [`report`]: CSV tables, SVG charts and a markdown summary.
//! - [`synth`]: generator for the planted-signal fixture corpus.

pub(crate) mod codec;
pub mod corpus;
pub mod digest;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
