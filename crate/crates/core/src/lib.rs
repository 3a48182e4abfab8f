//! Canonical trend detection.
//!
//! For every web source the crate learns a temporal convolution in
//! bag-of-words space that best predicts the pooled content of all other
//! sources, using regularized kernel CCA on a lag-embedded copy of the
//! source. Held-out prediction accuracy ranks sources as trend setters.
//!
//! Pipeline: [`corpus`] builds term × hour matrices, [`embedding`] pools and
//! lag-stacks them, [`kcca`] solves the canonical problem, [`evaluation`]
//! runs blocked cross-validation and ranking, [`synth`] generates test data.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod kcca;
pub mod matrix;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
