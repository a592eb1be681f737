//! Addressee estimation for multiparty human-robot interaction.
//!
//! The crate covers the whole pipeline: a small reverse-mode autodiff engine
//! ([`numerics`]), the on-disk interaction corpus ([`corpus`]) and its seeded
//! synthetic generator ([`synth`]), preprocessing into 10-frame multimodal
//! sequences ([`preprocess`]), the five CNN+LSTM model variants ([`model`]),
//! the training protocol with cross-validation ([`train`]) and the evaluation
//! metrics ([`eval`]).

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gradsuite;
pub mod model;
pub mod numerics;
pub mod preprocess;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
