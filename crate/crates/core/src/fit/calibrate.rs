use super::circle::CircleGeometry;
use super::FitError;
use crate::synth::Sweep;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedSweep {
    pub sweep: Sweep,
    pub a: f64,
    pub alpha: f64,
    pub off_resonant: Complex64,
    pub warnings: Vec<String>,
}

/// The point of the circle reached far from resonance, opposite `θ_0`.
pub fn off_resonant_point(circle: &CircleGeometry, theta_0: f64) -> Complex64 {
    circle.center() + Complex64::from_polar(circle.r, theta_0 + PI)
}

/// Divides out the amplitude and phase of the off-resonant point so the
/// circle passes through `1 + 0i`.
pub fn calibrate_background(
    sweep: &Sweep,
    circle: &CircleGeometry,
    theta_0: f64,
) -> Result<CalibratedSweep, FitError> {
    let p_off = off_resonant_point(circle, theta_0);
    let a = p_off.norm();
    if !(a > 0.0 && a.is_finite()) {
        return Err(FitError::DegenerateGeometry(format!(
            "off-resonant point {p_off} has no usable magnitude"
        )));
    }
    let mut warnings = Vec::new();
    if a < 10.0 * circle.rms_radial_residual {
        warnings.push(format!(
            "off-resonant amplitude {a:.3e} is within 10x the radial noise {:.3e}",
            circle.rms_radial_residual
        ));
    }
    let inv = p_off.inv();
    Ok(CalibratedSweep {
        sweep: sweep.map_values(|_, s| s * inv),
        a,
        alpha: p_off.arg(),
        off_resonant: p_off,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterCorrection {
    pub q_c_mag: f64,
    pub phi: f64,
    pub q_i: f64,
}

/// Coupling and internal quality factors from the circle geometry.
///
/// The diameter, normalised by the off-resonant amplitude, is `Q_l/|Q_c|`;
/// the impedance-mismatch angle is the direction from the centre to the
/// off-resonant point.
pub fn diameter_correct(
    circle: &CircleGeometry,
    off_resonant: Complex64,
    q_l: f64,
) -> Result<DiameterCorrection, FitError> {
    let scale = off_resonant.norm();
    let d = 2.0 * circle.r / scale;
    if !(d > 0.0 && d.is_finite()) {
        return Err(FitError::DegenerateGeometry(format!("circle diameter {d}")));
    }
    let q_c_mag = q_l / d;
    let phi = ((off_resonant - circle.center()) / off_resonant).arg();
    let inv_qi = 1.0 / q_l - phi.cos() / q_c_mag;
    if !(inv_qi > 0.0) {
        return Err(FitError::NonphysicalQi { inv_qi });
    }
    Ok(DiameterCorrection {
        q_c_mag,
        phi,
        q_i: 1.0 / inv_qi,
    })
}
