//! Teacher-student mixture invariant training for waveform source separation.
//!
//! A MixIT teacher is trained without references on mixtures of mixtures.
//! Its highest-energy outputs on the original mixtures become pseudo-targets
//! for a PIT student with exactly as many outputs as there are sources. The
//! student can then be fine-tuned on a small supervised subset and distilled
//! into a differently shaped network.

pub mod assign;
pub mod datagen;
pub mod error;
pub mod losses;
pub mod pipeline;
pub mod seed;
pub mod separator;
pub mod signal;

pub use error::{Error, Result};
