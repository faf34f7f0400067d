//! Interactive data programming engine.
//!
//! The crate runs the select → write-LF → retrain loop over a corpus of
//! examples described by primitives (keywords, object tags, ...) and
//! feature vectors:
//!
//! - [`corpus`]: ingestion, tokenization, TF-IDF features, splits.
//! - [`index`]: primitive → train-example postings.
//! - [`lf`]: primitive labeling functions and the label matrix.
//! - [`contextualizer`]: lineage-aware LF refinement and locality diagnostics.
//! - [`label_model`]: majority-vote and one-coin EM aggregation.
//! - [`end_model`]: logistic regression on soft labels.
//! - [`selection`]: Random, Abstain, Disagree and expected-utility selectors.
//! - [`simulator`]: gold-label driven simulated user.
//! - [`session`]: the interactive loop, learning curves and snapshots.
//! - [`synth`]: seeded synthetic corpora used for experiments and tests.

pub mod config;
pub mod contextualizer;
pub mod corpus;
pub mod distance;
pub mod end_model;
pub mod error;
pub mod index;
pub mod label;
pub mod label_model;
pub mod lf;
pub mod rng;
pub mod selection;
pub mod session;
pub mod simulator;
pub mod sparse;
pub mod synth;

pub use config::SessionConfig;
pub use corpus::{Corpus, Example, IngestConfig, InputFormat};
pub use error::{Error, Result};
pub use index::PrimitiveIndex;
pub use label::Label;
pub use lf::{LabelMatrix, LabelingFunction};
pub use session::{CurveSummary, IterationReport, Session};
