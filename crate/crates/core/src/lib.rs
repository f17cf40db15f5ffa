//! Character-level named-entity tagging trained directly on crowd
//! annotations.
//!
//! A BiLSTM-CRF tagger is extended with a common encoder that is trained
//! adversarially against a worker discriminator through a gradient-reversal
//! node, so the shared features stop encoding annotator identity.

pub mod cli;
pub mod crf;
pub mod data;
pub mod error;
pub mod layers;
pub mod model;
pub mod numcore;
pub mod tagscheme;
pub mod train_eval;

pub use error::{Error, Result};
