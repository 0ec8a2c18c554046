//! Consistency training with random and adversarial spatial transformations,
//! for unsupervised domain adaptation (DA) and domain generalization (DG).
//!
//! The crate is framework-free: a small reverse-mode autodiff engine
//! ([`tensor`]), a RandAugment-style transformation library ([`augment`]), a
//! differentiable spatial transformer with gradient reversal ([`stn`]), a
//! compact CNN classifier ([`model`]), the consistency/entropy/adversarial
//! losses ([`losses`]), synthetic domain-shift data plus corruptions
//! ([`data`]), and an SGD training loop ([`trainer`]). Everything is
//! deterministic under a single seed (see [`rng`]).

pub mod augment;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod image;
mod kernels;
pub mod losses;
pub mod model;
pub mod rng;
pub mod stn;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
