//! Dense real-matrix arithmetic, a recording tape for reverse-mode
//! differentiation, a seedable random source, and a finite-difference
//! gradient checker. Everything upstream builds on this module.

mod gradcheck;
mod matrix;
mod rng;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use matrix::{sigmoid, Matrix};
pub use rng::Rng;
pub use tape::{Gradients, Tape, Var};
