//! Trustworthiness scoring for free-text model explanations in clinical
//! question answering.
//!
//! An explanation is scored for plausibility (agreement with a reference
//! explanation, plus stability across resampling and paraphrase) and for
//! faithfulness (whether the explanation actually reflects what drives the
//! model's answer). The two are combined with a harmonic mean into a single
//! trust score per item.

pub mod aggregation;
pub mod cache;
pub mod config;
pub mod context;
pub mod dataset;
pub mod demo;
pub mod error;
pub mod faithfulness;
pub mod parsing;
pub mod pipeline;
pub mod plausibility;
pub mod prompts;
pub mod providers;
pub mod report;
pub mod similarity;
pub mod text;
pub mod types;

pub use error::{Error, ProviderError, Result};
