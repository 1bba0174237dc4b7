//! Optimal prediction of the ultimate maximum under a regime-switching
//! geometric Brownian motion.
//!
//! The library solves for the regret-minimizing stopping rule of
//! `inf_tau E[sup_{s <= T} Y_s / Y_tau]`, where the drift and volatility of
//! `Y` are driven by a finite-state Markov chain. It provides
//!
//! * the gain surface `G(t, x, j)` and its generator image `LG`,
//! * the value surface `V(t, x, j)` from a projected backward scheme,
//! * per-regime stopping boundaries `b(t, j)` and shape checks,
//! * Monte Carlo evaluation of the boundary integral equation and of
//!   stopping policies.
//!
//! Here `x` is the ratio of the running maximum to the current level.

pub mod boundary;
pub mod error;
pub mod gain;
pub mod grid;
pub mod markov;
pub mod mc;
pub mod model;
pub mod paths;
pub mod rng;
pub mod solve;
pub mod stepper;
pub mod strategy;
pub mod tolerances;
pub mod value;
pub mod volterra;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Surface};
pub use mc::Estimate;
pub use model::{ExerciseRegime, RegimeModel, ValidatedModel};
