//! Stabilized semi-implicit Fourier-spectral solvers for the Cahn–Hilliard and
//! slope-selection MBE equations on the periodic square `[0, 2π)²`, with a
//! verification harness for energy stability and convergence rates.
//!
//! Fourier convention: `f̂(k) = ∫ f e^{-ik·x} dx`, `f = (2π)^{-2} Σ f̂(k) e^{ik·x}`.

pub mod analysis;
pub mod error;
pub mod io;
pub mod models;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
pub use models::{ModelConfig, ModelKind, Nonlinearity, StabilizationPlan, StabilizerOrder};
pub use spectral::{Cutoff, Grid, GridSpec, Norm, PhysicalField, SpectralField};
pub use stepper::{make_initial, run, InitKind, Scheme, StepperState};
