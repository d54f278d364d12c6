//! Circle fitting of notch-type resonances: cable delay removal, algebraic
//! circle fit, phase fit, background calibration, diameter correction and
//! covariance-based uncertainties.

mod calibrate;
mod circle;
mod delay;
mod phase;
mod uncertainty;

pub use calibrate::{
    calibrate_background, diameter_correct, off_resonant_point, CalibratedSweep, DiameterCorrection,
};
pub use circle::{fit_circle_algebraic, CircleGeometry};
pub use delay::{remove_delay, DelayMode};
pub use phase::{fit_phase, PhaseFit, PhaseGuess};
pub use uncertainty::{
    estimate_uncertainties, jacobian, propagate_qi_error, DofMode, ModelPoint, Uncertainty,
};

use crate::model::{notch, Background};
use num_complex::Complex64;
use std::f64::consts::PI;
use crate::synth::Sweep;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Pipeline stage at which a fit failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Delay,
    Circle,
    Phase,
    Calibration,
    Refit,
    Diameter,
    Uncertainty,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Delay => "delay removal",
            Stage::Circle => "circle fit",
            Stage::Phase => "phase fit",
            Stage::Calibration => "calibration",
            Stage::Refit => "calibrated refit",
            Stage::Diameter => "diameter correction",
            Stage::Uncertainty => "uncertainty",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("not enough degrees of freedom: need at least {needed} points, got {got}")]
    DegreesOfFreedom { needed: usize, got: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("phase unwrap failed at sample {index}: ambiguous step of {jump:.3} rad")]
    PhaseUnwrap { index: usize, jump: f64 },
    #[error(
        "phase fit did not converge in {iterations} iterations \
         (last theta_0 = {theta_0}, q_l = {q_l}, f_r = {f_r} Hz)"
    )]
    PhaseFitDiverged {
        iterations: usize,
        theta_0: f64,
        q_l: f64,
        f_r: f64,
    },
    #[error("nonphysical internal quality factor: 1/q_i = {inv_qi:.6e}")]
    NonphysicalQi { inv_qi: f64 },
    #[error("rank-deficient Jacobian; null direction over (q_l, q_c_mag, f_r, phi) = {direction:?}")]
    RankDeficient { direction: [f64; 4] },
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        source: Box<FitError>,
    },
}

impl FitError {
    /// The underlying error with stage tags stripped.
    pub fn root(&self) -> &FitError {
        match self {
            FitError::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            FitError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn at<T>(stage: Stage, r: Result<T, FitError>) -> Result<T, FitError> {
    r.map_err(|e| FitError::Stage {
        stage,
        source: Box::new(e),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    #[serde(default)]
    pub delay: DelayMode,
    #[serde(default)]
    pub dof: DofMode,
}

/// Standard errors of the fitted quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigmas {
    pub sigma_q_l: f64,
    pub sigma_q_c_mag: f64,
    #[serde(rename = "sigma_f_r_hz")]
    pub sigma_f_r: f64,
    #[serde(rename = "sigma_phi_rad")]
    pub sigma_phi: f64,
    pub sigma_q_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub q_l: f64,
    pub q_c_mag: f64,
    pub q_i: f64,
    #[serde(rename = "f_r_hz")]
    pub f_r: f64,
    #[serde(rename = "phi_rad")]
    pub phi: f64,
    #[serde(rename = "theta0_rad")]
    pub theta_0: f64,
    pub a: f64,
    pub alpha_rad: f64,
    pub tau_s: f64,
    #[serde(flatten)]
    pub sigma: Sigmas,
    pub chi2: f64,
    pub n_points: usize,
    /// Row-major covariance of `(q_l, q_c_mag, f_r_hz, phi_rad)`.
    pub covariance: [[f64; 4]; 4],
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn background(&self) -> Background {
        Background {
            a: self.a,
            alpha: self.alpha_rad,
            tau: self.tau_s,
        }
    }

    pub fn model_point(&self) -> ModelPoint {
        ModelPoint {
            q_l: self.q_l,
            q_c_mag: self.q_c_mag,
            f_r: self.f_r,
            phi: self.phi,
        }
    }
}

/// Intermediate products of [`fit_full_with_diagnostics`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub tau: f64,
    pub raw_circle: CircleGeometry,
    pub raw_phase: PhaseFit,
    pub calibrated: Sweep,
    pub calibrated_circle: CircleGeometry,
    pub calibrated_phase: PhaseFit,
}

const RAW_PHASE_POINTS: usize = 2048;

fn subsample(sweep: &Sweep, max_points: usize) -> Sweep {
    if sweep.len() <= max_points {
        return sweep.clone();
    }
    let stride = sweep.len().div_ceil(max_points);
    let samples: Vec<_> = sweep.samples().iter().step_by(stride).copied().collect();
    Sweep::new(samples, sweep.grid_kind, sweep.provenance.clone()).expect("subset of a valid sweep")
}

pub fn fit_full(sweep: &Sweep, options: &FitOptions) -> Result<FitResult, FitError> {
    fit_full_with_diagnostics(sweep, options).map(|(r, _)| r)
}

pub fn fit_full_with_diagnostics(
    sweep: &Sweep,
    options: &FitOptions,
) -> Result<(FitResult, FitDiagnostics), FitError> {
    let needed = options.dof.params().max(4) + 1;
    if sweep.len() < needed {
        return Err(FitError::DegreesOfFreedom {
            needed,
            got: sweep.len(),
        });
    }
    let (delayed, tau) = at(Stage::Delay, remove_delay(sweep, options.delay))?;
    let first = fit_delayed(sweep.len(), delayed, tau, options)?;
    if options.delay == DelayMode::LinearOnly {
        return Ok(first);
    }
    // The circle residual barely responds to a delay error (it mostly moves
    // points along the circle), so τ is polished against the phase of the
    // fitted model. Each refit re-absorbs a fixed share of the correction;
    // a secant step on `polish(τ) − τ` lands on the fixed point. The pass
    // closest to the raw data wins.
    let refit = |t: f64| {
        let d = sweep.map_values(|f, s| s * Complex64::from_polar(1.0, 2.0 * PI * f * t));
        fit_delayed(sweep.len(), d, t, options).ok()
    };
    let mut best = (raw_sse(sweep, &first.0), first);
    let Some(t2) = polish_delay(sweep, &best.1 .0) else {
        return Ok(best.1);
    };
    let Some(second) = refit(t2) else {
        return Ok(best.1);
    };
    let t3 = polish_delay(sweep, &second.0);
    let sse2 = raw_sse(sweep, &second.0);
    if sse2 <= best.0 {
        best = (sse2, second);
    }
    if let Some(t3) = t3 {
        let (g1, g2) = (t2 - tau, t3 - t2);
        let t_star = if g1 != g2 { t2 - g2 * (t2 - tau) / (g2 - g1) } else { t3 };
        if let Some(third) = t_star.is_finite().then(|| refit(t_star)).flatten() {
            let sse3 = raw_sse(sweep, &third.0);
            if sse3 <= best.0 {
                best = (sse3, third);
            }
        }
    }
    Ok(best.1)
}

/// Squared residual of the raw sweep against the full fitted model.
fn raw_sse(sweep: &Sweep, r: &FitResult) -> f64 {
    let bg = r.background();
    sweep
        .samples()
        .iter()
        .map(|s| (s.s21 - bg.factor(s.f) * notch(r.q_l, r.q_c_mag, r.phi, r.f_r, s.f)).norm_sqr())
        .sum()
}

/// Delay corrected by the slope of `arg(S_data/S_model)` against frequency,
/// weighted by `|S_model|²`.
fn polish_delay(sweep: &Sweep, r: &FitResult) -> Option<f64> {
    let bg = r.background();
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let f_c = sweep.center();
    for s in sweep.samples() {
        let m = bg.factor(s.f) * notch(r.q_l, r.q_c_mag, r.phi, r.f_r, s.f);
        let w = m.norm_sqr();
        if !(w > 0.0) {
            continue;
        }
        let x = s.f - f_c;
        let y = (s.s21 / m).arg();
        sw += w;
        swx += w * x;
        swy += w * y;
        swxx += w * x * x;
        swxy += w * x * y;
    }
    let det = sw * swxx - swx * swx;
    if !(det > 0.0) {
        return None;
    }
    let slope = (sw * swxy - swx * swy) / det;
    let tau = r.tau_s - slope / (2.0 * PI);
    tau.is_finite().then_some(tau)
}

/// Every stage after delay removal.
fn fit_delayed(
    n_points: usize,
    delayed: Sweep,
    tau: f64,
    options: &FitOptions,
) -> Result<(FitResult, FitDiagnostics), FitError> {
    let raw_circle = at(Stage::Circle, fit_circle_algebraic(&delayed.values()))?;
    // The uncalibrated phase fit only seeds the calibration; a subsample suffices.
    let raw_phase = at(
        Stage::Phase,
        fit_phase(&subsample(&delayed, RAW_PHASE_POINTS), &raw_circle, None),
    )?;
    let cal = at(
        Stage::Calibration,
        calibrate_background(&delayed, &raw_circle, raw_phase.theta_0),
    )?;
    let calibrated_circle = at(Stage::Refit, fit_circle_algebraic(&cal.sweep.values()))?;
    let guess = PhaseGuess {
        theta_0: raw_phase.theta_0 - cal.alpha,
        q_l: raw_phase.q_l,
        f_r: raw_phase.f_r,
    };
    let calibrated_phase = at(
        Stage::Refit,
        fit_phase(&cal.sweep, &calibrated_circle, Some(guess)),
    )?;
    let q_l = calibrated_phase.q_l;
    // The refined off-resonant point sits at 1 up to the seed's error; fold
    // the remainder into the background.
    let p_off = off_resonant_point(&calibrated_circle, calibrated_phase.theta_0);
    let dc = at(
        Stage::Diameter,
        diameter_correct(&calibrated_circle, p_off, q_l),
    )?;
    let inv_off = p_off.inv();
    let calibrated = cal.sweep.map_values(|_, s| s * inv_off);
    let point = ModelPoint {
        q_l,
        q_c_mag: dc.q_c_mag,
        f_r: calibrated_phase.f_r,
        phi: dc.phi,
    };
    let unc = at(
        Stage::Uncertainty,
        estimate_uncertainties(&calibrated, &point, dc.q_i, options.dof),
    )?;
    let result = FitResult {
        q_l,
        q_c_mag: dc.q_c_mag,
        q_i: dc.q_i,
        f_r: point.f_r,
        phi: dc.phi,
        theta_0: calibrated_phase.theta_0,
        a: cal.a * p_off.norm(),
        alpha_rad: phase::wrap(cal.alpha + p_off.arg()),
        tau_s: tau,
        sigma: Sigmas {
            sigma_q_l: unc.sigma_q_l,
            sigma_q_c_mag: unc.sigma_q_c_mag,
            sigma_f_r: unc.sigma_f_r,
            sigma_phi: unc.sigma_phi,
            sigma_q_i: unc.sigma_q_i,
        },
        chi2: unc.chi2,
        n_points,
        covariance: unc.covariance,
        warnings: cal.warnings.clone(),
    };
    let diag = FitDiagnostics {
        tau,
        raw_circle,
        raw_phase,
        calibrated,
        calibrated_circle,
        calibrated_phase,
    };
    Ok((result, diag))
}
