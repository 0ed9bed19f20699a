//! Latent network embedding.
//!
//! The pipeline simulates continuous-time diffusion cascades over an observed
//! graph ([`diffusion`]), infers a weighted latent transmission matrix from
//! them ([`inference`]), trains an adversarially regularized auto-encoder on
//! that matrix ([`laae`], built on the small dense kernel in [`nn`]) and
//! scores the resulting embeddings on link prediction and node
//! classification ([`eval`]). [`pipeline`] wires the stages together behind a
//! flat `key = value` configuration.

pub mod diffusion;
pub mod error;
pub mod eval;
pub mod graph;
pub mod inference;
pub mod laae;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod textfmt;

pub use error::{Error, Result};
pub use graph::Graph;
pub use matrix::Matrix;
