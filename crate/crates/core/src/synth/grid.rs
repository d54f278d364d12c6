//! Frequency grids: linear (SPD) and homophasal (HPD).
//!
//! The homophasal grid inverts the phase relation around the circle centre,
//! `θ(f) = θ_0 + 2·atan(2Q_l(1 − f/f_r))`, so equal steps in θ map to
//! `f(θ) = f_r·(1 − tan((θ − θ_0)/2) / (2Q_l))`.

use super::SynthError;
use std::f64::consts::PI;

/// `n_points` linearly spaced frequencies over `[center − span/2, center + span/2]`.
pub fn grid_spd(center: f64, span: f64, n_points: usize) -> Result<Vec<f64>, SynthError> {
    if !(span > 0.0 && span.is_finite()) {
        return Err(SynthError::InvalidArgument(format!(
            "span must be positive, got {span}"
        )));
    }
    if n_points < 2 {
        return Err(SynthError::TooFewPoints {
            needed: 2,
            got: n_points,
        });
    }
    let start = center - 0.5 * span;
    let step = span / (n_points - 1) as f64;
    let grid: Vec<f64> = (0..n_points)
        .map(|k| {
            if k == n_points - 1 {
                center + 0.5 * span
            } else {
                start + step * k as f64
            }
        })
        .collect();
    check_positive(&grid)?;
    Ok(grid)
}

fn phase_to_freq(f_r: f64, q_l: f64, dtheta: f64) -> f64 {
    f_r * (1.0 - (0.5 * dtheta).tan() / (2.0 * q_l))
}

fn check_positive(grid: &[f64]) -> Result<(), SynthError> {
    match grid.iter().position(|&f| !(f > 0.0 && f.is_finite())) {
        Some(i) => Err(SynthError::NonPositiveFrequency {
            index: i,
            value: grid[i],
        }),
        None => Ok(()),
    }
}

fn check_hpd_args(f_r: f64, q_l: f64, n_points: usize) -> Result<(), SynthError> {
    if !(q_l > 0.0 && q_l.is_finite()) || !(f_r > 0.0 && f_r.is_finite()) {
        return Err(SynthError::InvalidArgument(format!(
            "f_r and q_l must be positive, got f_r = {f_r}, q_l = {q_l}"
        )));
    }
    if n_points < 5 {
        return Err(SynthError::TooFewPoints {
            needed: 5,
            got: n_points,
        });
    }
    Ok(())
}

/// Full-circle homophasal grid: `θ_k − θ_0 = −π + (2k+1)π/N`, returned in
/// ascending frequency. For odd `N` the middle point is exactly `f_r`.
pub fn grid_hpd(f_r: f64, q_l: f64, n_points: usize) -> Result<Vec<f64>, SynthError> {
    check_hpd_args(f_r, q_l, n_points)?;
    let n = n_points as f64;
    let mut grid = Vec::with_capacity(n_points);
    // Descending θ gives ascending frequency.
    for j in 0..n_points {
        let k = n_points - 1 - j;
        let dtheta = -PI + (2 * k + 1) as f64 * PI / n;
        let half = 0.5 * dtheta;
        if (half.abs() - 0.5 * PI).abs() < 1e-6 {
            return Err(SynthError::InvalidArgument(format!(
                "phase {dtheta} too close to the singular endpoint"
            )));
        }
        let f = if 2 * k + 1 == n_points {
            f_r
        } else {
            phase_to_freq(f_r, q_l, dtheta)
        };
        grid.push(f);
    }
    check_positive(&grid)?;
    Ok(grid)
}

/// Homophasal grid restricted to `[f_r − span/2, f_r + span/2]`: `N` phases
/// equally spaced over the closed arc `|θ − θ_0| ≤ 2·atan(span/Δf_r)`, so the
/// endpoints coincide with those of a linear sweep of the same span.
pub fn grid_hpd_span(f_r: f64, q_l: f64, n_points: usize, span: f64) -> Result<Vec<f64>, SynthError> {
    check_hpd_args(f_r, q_l, n_points)?;
    if !(span > 0.0 && span.is_finite()) {
        return Err(SynthError::InvalidArgument(format!(
            "span must be positive, got {span}"
        )));
    }
    let ratio = span * q_l / f_r;
    let theta_max = 2.0 * ratio.atan();
    let step = 2.0 * theta_max / (n_points - 1) as f64;
    let mut grid = Vec::with_capacity(n_points);
    for j in 0..n_points {
        let f = if 2 * j + 1 == n_points {
            f_r
        } else if j == 0 {
            f_r - 0.5 * span
        } else if j == n_points - 1 {
            f_r + 0.5 * span
        } else {
            phase_to_freq(f_r, q_l, theta_max - step * j as f64)
        };
        grid.push(f);
    }
    check_positive(&grid)?;
    Ok(grid)
}
