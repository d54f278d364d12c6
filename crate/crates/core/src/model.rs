//! Notch-type resonator transmission model and closed-form derived quantities.
//!
//! The transmission of a resonator side-coupled to a feed line is
//!
//! ```text
//! S21(f) = a·exp(i(α − 2πfτ)) · [1 − (Q_l/|Q_c|)·exp(iφ) / (1 + 2iQ_l(f/f_r − 1))]
//! ```
//!
//! with `1/Q_l = 1/Q_i + cos(φ)/|Q_c|`. On the complex plane the bracket traces a
//! circle of diameter `Q_l/|Q_c|` passing through the off-resonant point `1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Planck constant in J·s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("model evaluation produced a non-finite value at f = {f} Hz")]
    NonFinite { f: f64 },
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}

/// Resonance parameters. `Q_l` is always derived from the other three.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ResonatorParams {
    f_r: f64,
    q_i: f64,
    q_c_mag: f64,
    phi: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    f_r_hz: f64,
    q_i: f64,
    q_c_mag: f64,
    phi_rad: f64,
}

impl TryFrom<RawParams> for ResonatorParams {
    type Error = ModelError;
    fn try_from(r: RawParams) -> Result<Self, ModelError> {
        ResonatorParams::new(r.f_r_hz, r.q_i, r.q_c_mag, r.phi_rad)
    }
}

impl From<ResonatorParams> for RawParams {
    fn from(p: ResonatorParams) -> Self {
        RawParams {
            f_r_hz: p.f_r,
            q_i: p.q_i,
            q_c_mag: p.q_c_mag,
            phi_rad: p.phi,
        }
    }
}

impl ResonatorParams {
    pub fn new(f_r: f64, q_i: f64, q_c_mag: f64, phi: f64) -> Result<Self, ModelError> {
        check("f_r", f_r, f_r > 0.0, "must be positive")?;
        check("q_i", q_i, q_i > 0.0, "must be positive")?;
        check("q_c_mag", q_c_mag, q_c_mag > 0.0, "must be positive")?;
        check(
            "phi",
            phi,
            phi.abs() < FRAC_PI_2,
            "must lie in the open interval (-pi/2, pi/2)",
        )?;
        Ok(Self {
            f_r,
            q_i,
            q_c_mag,
            phi,
        })
    }

    /// Builds parameters from the loaded quality factor instead of `Q_i`.
    pub fn from_loaded(f_r: f64, q_l: f64, q_c_mag: f64, phi: f64) -> Result<Self, ModelError> {
        check("q_l", q_l, q_l > 0.0, "must be positive")?;
        check("q_c_mag", q_c_mag, q_c_mag > 0.0, "must be positive")?;
        let inv_qi = 1.0 / q_l - phi.cos() / q_c_mag;
        check(
            "q_l",
            q_l,
            inv_qi > 0.0,
            "implies a non-positive internal quality factor",
        )?;
        Self::new(f_r, 1.0 / inv_qi, q_c_mag, phi)
    }

    pub fn f_r(&self) -> f64 {
        self.f_r
    }
    pub fn q_i(&self) -> f64 {
        self.q_i
    }
    pub fn q_c_mag(&self) -> f64 {
        self.q_c_mag
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn q_l(&self) -> f64 {
        1.0 / (1.0 / self.q_i + self.phi.cos() / self.q_c_mag)
    }

    /// Full linewidth `f_r / Q_l` in Hz.
    pub fn linewidth(&self) -> f64 {
        self.f_r / self.q_l()
    }

    /// Circle diameter `Q_l/|Q_c|` of the calibrated resonance.
    pub fn diameter(&self) -> f64 {
        self.q_l() / self.q_c_mag
    }

    /// Copy with a shifted resonance frequency, used for frequency jitter.
    pub fn with_f_r(&self, f_r: f64) -> Self {
        Self { f_r, ..*self }
    }
}

/// Measurement-environment prefactor `a·exp(i(α − 2πfτ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    pub a: f64,
    #[serde(rename = "alpha_rad")]
    pub alpha: f64,
    #[serde(rename = "tau_s")]
    pub tau: f64,
}

impl Default for Background {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Background {
    pub const IDENTITY: Background = Background {
        a: 1.0,
        alpha: 0.0,
        tau: 0.0,
    };

    pub fn new(a: f64, alpha: f64, tau: f64) -> Result<Self, ModelError> {
        check("a", a, a > 0.0, "must be positive")?;
        check("alpha", alpha, true, "must be finite")?;
        check("tau", tau, true, "must be finite")?;
        Ok(Self { a, alpha, tau })
    }

    pub fn factor(&self, f: f64) -> Complex64 {
        Complex64::from_polar(self.a, self.alpha - 2.0 * PI * f * self.tau)
    }
}

/// One measured or simulated point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexSample {
    pub f: f64,
    pub s21: Complex64,
}

impl ComplexSample {
    pub fn new(f: f64, s21: Complex64) -> Self {
        Self { f, s21 }
    }

    pub fn is_valid(&self) -> bool {
        self.f.is_finite() && self.f > 0.0 && self.s21.re.is_finite() && self.s21.im.is_finite()
    }
}

/// The calibrated (identity background) resonance term, without validation.
#[inline]
pub fn notch(q_l: f64, q_c_mag: f64, phi: f64, f_r: f64, f: f64) -> Complex64 {
    let k = Complex64::from_polar(q_l / q_c_mag, phi);
    let d = Complex64::new(1.0, 2.0 * q_l * (f / f_r - 1.0));
    Complex64::new(1.0, 0.0) - k / d
}

/// Partial derivatives of the calibrated model with respect to
/// `(Q_l, |Q_c|, f_r, φ)`, in that order.
#[inline]
pub fn notch_gradient(q_l: f64, q_c_mag: f64, phi: f64, f_r: f64, f: f64) -> [Complex64; 4] {
    let rot = Complex64::from_polar(1.0, phi);
    let k = rot * (q_l / q_c_mag);
    let d = Complex64::new(1.0, 2.0 * q_l * (f / f_r - 1.0));
    let inv_d = d.inv();
    let inv_d2 = inv_d * inv_d;
    let d_ql = -(rot / q_c_mag) * inv_d2;
    let d_qc = k / q_c_mag * inv_d;
    let d_fr = k * inv_d2 * Complex64::new(0.0, -2.0 * q_l * f / (f_r * f_r));
    let d_phi = -Complex64::i() * k * inv_d;
    [d_ql, d_qc, d_fr, d_phi]
}

/// Derivative of the calibrated model along frequency (tangent of the locus).
#[inline]
pub fn notch_tangent(q_l: f64, q_c_mag: f64, phi: f64, f_r: f64, f: f64) -> Complex64 {
    let k = Complex64::from_polar(q_l / q_c_mag, phi);
    let d = Complex64::new(1.0, 2.0 * q_l * (f / f_r - 1.0));
    k / (d * d) * Complex64::new(0.0, 2.0 * q_l / f_r)
}

/// Evaluates the full transmission model at frequency `f`.
pub fn s21_ideal(params: &ResonatorParams, bg: &Background, f: f64) -> Result<Complex64, ModelError> {
    check("f", f, f > 0.0, "must be positive")?;
    let s = bg.factor(f) * notch(params.q_l(), params.q_c_mag, params.phi, params.f_r, f);
    if s.re.is_finite() && s.im.is_finite() {
        Ok(s)
    } else {
        Err(ModelError::NonFinite { f })
    }
}

/// `df/dθ = Δf_r·[((f_r − f)/Δf_r)² + 1/4]` in Hz per radian.
pub fn df_dtheta(params: &ResonatorParams, f: f64) -> f64 {
    let lw = params.linewidth();
    let x = (params.f_r - f) / lw;
    lw * (x * x + 0.25)
}

/// Discrete phasal point density of a linear sweep, in points per radian.
pub fn phasal_density(
    params: &ResonatorParams,
    span: f64,
    n_points: usize,
    f: f64,
) -> Result<f64, ModelError> {
    check("span", span, span > 0.0, "must be positive")?;
    if n_points < 2 {
        return Err(ModelError::InvalidParameter {
            name: "n_points",
            value: n_points as f64,
            reason: "at least two points are required",
        });
    }
    let half = 0.5 * span;
    check(
        "f",
        f,
        f >= params.f_r - half && f <= params.f_r + half,
        "must lie within the sweep span",
    )?;
    Ok(n_points as f64 / span * df_dtheta(params, f))
}

/// Mean intracavity photon number for a given on-chip power in watts.
pub fn photon_number(params: &ResonatorParams, p_chip: f64) -> Result<f64, ModelError> {
    photon_number_from_parts(params.f_r, params.q_l(), params.q_c_mag, params.phi, p_chip)
}

/// Photon number from explicit `(f_r, Q_l, |Q_c|, φ)`, accepting the closed
/// interval `|φ| ≤ π/2` (the boundary yields zero).
pub fn photon_number_from_parts(
    f_r: f64,
    q_l: f64,
    q_c_mag: f64,
    phi: f64,
    p_chip: f64,
) -> Result<f64, ModelError> {
    check("p_chip", p_chip, p_chip >= 0.0, "must be non-negative")?;
    check("f_r", f_r, f_r > 0.0, "must be positive")?;
    check("q_l", q_l, q_l > 0.0, "must be positive")?;
    check("q_c_mag", q_c_mag, q_c_mag > 0.0, "must be positive")?;
    check("phi", phi, phi.abs() <= FRAC_PI_2 + 1e-12, "must satisfy |phi| <= pi/2")?;
    let cos_phi = if (phi.abs() - FRAC_PI_2).abs() <= 1e-12 {
        0.0
    } else {
        phi.cos()
    };
    Ok(p_chip / (2.0 * PI * PLANCK * f_r * f_r) * (2.0 * q_l * q_l * cos_phi / q_c_mag))
}

/// Power transmission and reflection coefficients at `f = f_r` for an ideal background.
pub fn on_resonance_power_coefficients(params: &ResonatorParams) -> (f64, f64) {
    let q_l = params.q_l();
    let qc = params.q_c_mag;
    let s21 = (qc * qc + q_l * q_l - 2.0 * q_l * qc * params.phi.cos()) / (qc * qc);
    let s11 = q_l * q_l / (qc * qc);
    (s21, s11)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// On-chip power in watts for an instrument power and a (negative) line attenuation.
pub fn chip_power_watts(p_vna_dbm: f64, attenuation_db: f64) -> f64 {
    dbm_to_watts(p_vna_dbm + attenuation_db)
}
