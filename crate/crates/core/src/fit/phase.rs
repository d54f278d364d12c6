use super::circle::CircleGeometry;
use super::FitError;
use crate::synth::Sweep;
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Starting point for the phase fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGuess {
    pub theta_0: f64,
    pub q_l: f64,
    pub f_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    pub theta_0: f64,
    pub q_l: f64,
    pub f_r: f64,
    pub iterations: usize,
    pub rms_residual: f64,
}

const MAX_ITER: usize = 100;

pub(crate) fn wrap(x: f64) -> f64 {
    let y = x - 2.0 * PI * (x / (2.0 * PI)).round();
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Phase of each sample about the circle centre.
fn centred_phase(sweep: &Sweep, center: Complex64) -> Vec<f64> {
    sweep.samples().iter().map(|s| (s.s21 - center).arg()).collect()
}

fn cost(freqs: &[f64], theta: &[f64], p: &PhaseGuess) -> f64 {
    let inv_fr = 1.0 / p.f_r;
    freqs
        .iter()
        .zip(theta)
        .map(|(&f, &t)| wrap(t - p.theta_0 - 2.0 * (2.0 * p.q_l * (1.0 - f * inv_fr)).atan()).powi(2))
        .sum()
}

fn circular_mean(angles: impl Iterator<Item = f64>) -> f64 {
    let s: Complex64 = angles.map(|a| Complex64::from_polar(1.0, a)).sum();
    s.arg()
}

/// Initial guesses: the resonance sits where the smoothed phase falls
/// fastest; a second candidate takes the point farthest from the
/// off-resonant end.
fn initial_guesses(freqs: &[f64], values: &[Complex64], theta: &[f64]) -> Vec<PhaseGuess> {
    let n = freqs.len();
    let w = (n / 500).clamp(1, 20);
    let phasors: Vec<Complex64> = theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    let mut smooth = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(n - 1);
        let s: Complex64 = phasors[lo..=hi].iter().sum();
        smooth.push(s.arg());
    }
    let mut unwrapped = Vec::with_capacity(n);
    unwrapped.push(smooth[0]);
    for i in 1..n {
        let prev = unwrapped[i - 1];
        unwrapped.push(prev + wrap(smooth[i] - smooth[i - 1]));
    }
    let mut best = (0usize, 0.0f64);
    for i in 0..n {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(n - 1);
        if hi == lo {
            continue;
        }
        let slope = (unwrapped[hi] - unwrapped[lo]) / (freqs[hi] - freqs[lo]);
        if slope < best.1 {
            best = (i, slope);
        }
    }

    let span = freqs[n - 1] - freqs[0];
    let mut out = Vec::with_capacity(2);
    let from_fr = |f_r: f64, q_l: f64| {
        let theta_0 = circular_mean(
            freqs
                .iter()
                .zip(theta)
                .map(|(&f, &t)| t - 2.0 * (2.0 * q_l * (1.0 - f / f_r)).atan()),
        );
        PhaseGuess { theta_0, q_l, f_r }
    };
    let q_floor = 2.0 * freqs[n / 2] / span.max(f64::MIN_POSITIVE);
    if best.1 < 0.0 {
        let f_r = freqs[best.0];
        let q_l = (best.1.abs() * f_r / 4.0).max(q_floor * 0.1);
        out.push(from_fr(f_r, q_l));
    }
    let off = 0.5 * (values[0] + values[n - 1]);
    let far = values
        .iter()
        .enumerate()
        .max_by(|a, b| (a.1 - off).norm().total_cmp(&(b.1 - off).norm()))
        .map(|(i, _)| i)
        .unwrap_or(n / 2);
    let q_l = out.first().map(|g| g.q_l).unwrap_or(q_floor);
    out.push(from_fr(freqs[far], q_l));
    out
}

/// Least-squares fit of `θ(f) = θ_0 + 2·atan(2Q_l(1 − f/f_r))` to the phase
/// of the data about `circle`'s centre. Residuals are wrapped to (−π, π].
pub fn fit_phase(
    sweep: &Sweep,
    circle: &CircleGeometry,
    init: Option<PhaseGuess>,
) -> Result<PhaseFit, FitError> {
    let n = sweep.len();
    if n < 5 {
        return Err(FitError::TooFewPoints { needed: 5, got: n });
    }
    let freqs = sweep.freqs();
    let values = sweep.values();
    let theta = centred_phase(sweep, circle.center());
    let guesses = match init {
        Some(g) => vec![g],
        None => initial_guesses(&freqs, &values, &theta),
    };
    let mut best: Option<PhaseFit> = None;
    let mut last_err = None;
    for g in guesses {
        match levenberg_marquardt(&freqs, &theta, g) {
            Ok(fit) => {
                if best.is_none_or(|b| fit.rms_residual < b.rms_residual) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one guess is always tried"),
    }
}

fn levenberg_marquardt(freqs: &[f64], theta: &[f64], g: PhaseGuess) -> Result<PhaseFit, FitError> {
    // Work in scaled coordinates: Q_l relative to its guess and f_r offset in
    // units of the guessed linewidth.
    let q_ref = g.q_l;
    let f_ref = g.f_r;
    let lw = f_ref / q_ref;
    let unscale = |x: &Vector3<f64>| PhaseGuess {
        theta_0: x[0],
        q_l: x[1] * q_ref,
        f_r: f_ref + x[2] * lw,
    };
    let mut x = Vector3::new(g.theta_0, 1.0, 0.0);
    let mut p = unscale(&x);
    let mut c = cost(freqs, theta, &p);
    let mut lambda = 1e-3;
    let n = freqs.len();

    for iter in 1..=MAX_ITER {
        let (mut a11, mut a12, mut a13, mut a22, mut a23, mut a33) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut g1, mut g2, mut g3) = (0.0, 0.0, 0.0);
        let inv_fr = 1.0 / p.f_r;
        for (&f, &t) in freqs.iter().zip(theta) {
            let ratio = f * inv_fr;
            let u = 2.0 * p.q_l * (1.0 - ratio);
            let datan = 2.0 / (1.0 + u * u);
            let r = wrap(t - p.theta_0 - 2.0 * u.atan());
            let j2 = datan * 2.0 * (1.0 - ratio) * q_ref;
            let j3 = datan * 2.0 * p.q_l * ratio * inv_fr * lw;
            a11 += 1.0;
            a12 += j2;
            a13 += j3;
            a22 += j2 * j2;
            a23 += j2 * j3;
            a33 += j3 * j3;
            g1 += r;
            g2 += j2 * r;
            g3 += j3 * r;
        }
        let a = Matrix3::new(a11, a12, a13, a12, a22, a23, a13, a23, a33);
        let grad = Vector3::new(g1, g2, g3);
        // Inner loop: raise damping until the step lowers the cost.
        loop {
            let mut damped = a;
            for k in 0..3 {
                damped[(k, k)] += lambda * a[(k, k)].max(1e-300);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&grad),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        return Err(diverged(iter, &p));
                    }
                    continue;
                }
            };
            let x_new = x + step;
            let rel = (0..3)
                .map(|k| step[k].abs() / x_new[k].abs().max(1.0))
                .fold(0.0, f64::max);
            let p_new = unscale(&x_new);
            let c_new = if p_new.q_l > 0.0 && p_new.f_r > 0.0 {
                cost(freqs, theta, &p_new)
            } else {
                f64::INFINITY
            };
            if c_new <= c {
                x = x_new;
                p = p_new;
                c = c_new;
                lambda = (lambda * 0.1).max(1e-12);
                if rel < 1e-10 {
                    return Ok(finish(p, iter, c, n));
                }
                break;
            }
            if rel < 1e-10 {
                // The remaining step is below rounding level.
                return Ok(finish(p, iter, c, n));
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // No downhill direction left at machine precision.
                return Ok(finish(p, iter, c, n));
            }
        }
    }
    Err(diverged(MAX_ITER, &p))
}

fn finish(p: PhaseGuess, iterations: usize, cost: f64, n: usize) -> PhaseFit {
    PhaseFit {
        theta_0: wrap(p.theta_0),
        q_l: p.q_l,
        f_r: p.f_r,
        iterations,
        rms_residual: (cost / n as f64).sqrt(),
    }
}

fn diverged(iterations: usize, p: &PhaseGuess) -> FitError {
    FitError::PhaseFitDiverged {
        iterations,
        theta_0: p.theta_0,
        q_l: p.q_l,
        f_r: p.f_r,
    }
}
