//! Regular-expression rules combined with BiLSTM models for intent detection
//! and slot filling.
//!
//! Rules can enter a model at three points: as input features (`feat`), as
//! attention supervision for two-side attention (`two_posi`, `two_neg`,
//! `two_both`), or as additive logit corrections (`logit`). The [`harness`]
//! module ties splits, rule annotation, training and evaluation together.

pub mod corpus;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rules;

pub use error::{Error, Result};
