//! Twin-bottleneck auto-encoding hashing at desk scale.
//!
//! A feature vector is encoded into a binary code and a continuous latent,
//! a similarity graph built from the batch codes drives a graph-convolution
//! step, and a decoder reconstructs the input. Two discriminators push the
//! latents toward fixed priors, and an optional classification head on the
//! binary code injects label supervision. The crate covers training, code
//! generation, Hamming-ranking evaluation, and the statistical machinery
//! used to compare model variants.

pub mod analysis;
pub mod data;
pub mod error;
pub mod model;
pub mod numerics;
pub mod retrieval;
pub mod training;

pub use error::{Error, Result};
