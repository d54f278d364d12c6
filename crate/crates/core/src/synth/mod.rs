//! Synthetic sweep generation: frequency grids, noise injection, trace
//! averaging, and homophasal planning from a coarse scan.

mod grid;
mod noise;
mod sweep;
mod trace;

pub use grid::{grid_hpd, grid_hpd_span, grid_spd};
pub use noise::{inject_noise, unit_jitter, FrSpectrum, NoiseSpec};
pub use sweep::{GridKind, Sweep, SweepError};
pub use trace::{simulate_averaged, trace_average_plan, AveragingMode, TraceAveragePlan};

use crate::fit::{fit_circle_algebraic, fit_phase, remove_delay, DelayMode, FitError, PhaseFit};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("grid point {index} has non-positive frequency {value} Hz")]
    NonPositiveFrequency { index: usize, value: f64 },
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("planning fit failed: {0}")]
    Fit(#[from] FitError),
}

/// A homophasal measurement plan derived from a coarse scan.
#[derive(Debug, Clone, PartialEq)]
pub struct HpdPlan {
    pub freqs: Vec<f64>,
    pub theta_0: f64,
    pub q_l: f64,
    pub f_r: f64,
    pub warnings: Vec<String>,
}

/// Estimates `(θ_0, Q_l, f_r)` from a coarse sweep (delay removal, circle
/// centring, phase fit) and lays out a full-circle homophasal grid, or a
/// span-limited one when `span` is given.
pub fn plan_hpd_from_scan(coarse: &Sweep, n_points: usize, span: Option<f64>) -> Result<HpdPlan, SynthError> {
    if n_points < 5 {
        return Err(SynthError::TooFewPoints {
            needed: 5,
            got: n_points,
        });
    }
    let (delayed, _tau) = remove_delay(coarse, DelayMode::Refined)?;
    let circle = fit_circle_algebraic(&delayed.values())?;
    let PhaseFit { theta_0, q_l, f_r, .. } = fit_phase(&delayed, &circle, None)?;
    let mut warnings = Vec::new();
    let linewidth = f_r / q_l;
    if coarse.span() < linewidth {
        warnings.push(format!(
            "coarse span {:.6e} Hz covers less than one estimated linewidth ({:.6e} Hz)",
            coarse.span(),
            linewidth
        ));
    }
    let freqs = match span {
        Some(s) => grid_hpd_span(f_r, q_l, n_points, s)?,
        None => grid_hpd(f_r, q_l, n_points)?,
    };
    Ok(HpdPlan {
        freqs,
        theta_0,
        q_l,
        f_r,
        warnings,
    })
}
