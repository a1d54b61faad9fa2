//! Optimal bail-out dividend strategies for spectrally negative Lévy surplus
//! processes, with and without Markov regime switching.
//!
//! The single-regime solver computes the value of refraction-reflection
//! strategies through scale functions and locates the optimal refraction
//! threshold; the regime-switching solver iterates the single-regime problem
//! to a fixed point. A Monte-Carlo simulator provides an independent check.

pub mod error;
pub mod inversion;
pub mod levy_model;
pub mod numerics;
pub mod payoff;
pub mod regime_switching;
pub mod scale_functions;
pub mod simulator;
pub mod single_regime;

pub use error::{Error, Result};
