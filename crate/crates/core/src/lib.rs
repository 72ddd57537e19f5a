//! Receding-horizon planning of centroidal multi-contact locomotion.
//!
//! The crate provides the full-model multi-phase transcription, the convex
//! relaxed prediction-horizon models, an interior-point NLP solver, the
//! receding-horizon loop and the learned local-objective oracle.

pub mod error;
pub mod expr;
pub mod nlp;
pub mod oracle;
pub mod relaxations;
pub mod rhp;
pub mod solver;
pub mod transcription;
pub mod model;

pub use error::{PlanError, Result};
