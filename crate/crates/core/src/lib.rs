//! Fitting, homophasal sampling and benchmarking for notch-type
//! superconducting resonators.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod fit;
pub mod info;
pub mod io;
pub mod model;
pub mod rng;
pub mod synth;

pub use fit::{fit_full, FitError, FitOptions, FitResult};
pub use model::{Background, ComplexSample, ModelError, ResonatorParams};
pub use synth::{GridKind, NoiseSpec, Sweep, SynthError};
