use super::circle::{radial_sse, taubin};
use super::FitError;
use crate::synth::Sweep;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    /// Slope of the unwrapped phase only.
    LinearOnly,
    /// Linear estimate refined by minimising the circle-fit residual.
    #[default]
    Refined,
}

/// Unwraps `phase`, rejecting steps that are ambiguous (|Δ| > 0.9π) in the
/// outer quarters of the sweep, where the resonance cannot explain them.
fn unwrap_phase(phase: &[f64]) -> Result<Vec<f64>, FitError> {
    let n = phase.len();
    let mut out = Vec::with_capacity(n);
    out.push(phase[0]);
    let mut offset = 0.0;
    for i in 1..n {
        let d = phase[i] - phase[i - 1];
        let turns = (d / (2.0 * PI)).round();
        let wrapped = d - 2.0 * PI * turns;
        let in_tail = i <= n / 4 || i >= n - n / 4;
        if in_tail && wrapped.abs() > 0.9 * PI {
            return Err(FitError::PhaseUnwrap { index: i, jump: wrapped });
        }
        offset -= 2.0 * PI * turns;
        out.push(phase[i] + offset);
    }
    Ok(out)
}

fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - xm) * (b - ym);
        sxx += (a - xm) * (a - xm);
    }
    sxy / sxx
}

/// Sum of squared radial residuals of the circle fitted to the data after
/// undoing a delay `tau`.
struct DelayCost {
    freqs: Vec<f64>,
    values: Vec<Complex64>,
    f_ref: f64,
    buf: Vec<Complex64>,
}

impl DelayCost {
    fn new(freqs: Vec<f64>, values: Vec<Complex64>) -> Self {
        let f_ref = 0.5 * (freqs[0] + freqs[freqs.len() - 1]);
        let n = freqs.len();
        Self {
            freqs,
            values,
            f_ref,
            buf: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    fn eval(&mut self, tau: f64) -> f64 {
        // A common rotation leaves the residual unchanged, so phases are
        // measured from the sweep centre.
        for ((b, &f), &z) in self.buf.iter_mut().zip(&self.freqs).zip(&self.values) {
            *b = z * Complex64::from_polar(1.0, 2.0 * PI * (f - self.f_ref) * tau);
        }
        match taubin(&self.buf) {
            Ok((c, r)) => radial_sse(&self.buf, c, r).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Brent's parabolic-interpolation minimiser on `[a, b]`.
pub(crate) fn brent_min<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    abs_tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = 1e-12 * x.abs() + abs_tol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Estimates the cable delay and returns the sweep with it removed
/// (`S21·e^{+2πifτ}`) together with `τ`.
pub fn remove_delay(sweep: &Sweep, mode: DelayMode) -> Result<(Sweep, f64), FitError> {
    let n = sweep.len();
    if n < 5 {
        return Err(FitError::TooFewPoints { needed: 5, got: n });
    }
    let freqs = sweep.freqs();
    let values = sweep.values();
    let phase: Vec<f64> = values.iter().map(|z| z.arg()).collect();
    let unwrapped = unwrap_phase(&phase)?;
    let tau0 = -linear_slope(&freqs, &unwrapped) / (2.0 * PI);

    let tau = match mode {
        DelayMode::LinearOnly => tau0,
        DelayMode::Refined => refine(&freqs, &values, tau0),
    };
    let out = sweep.map_values(|f, s| s * Complex64::from_polar(1.0, 2.0 * PI * f * tau));
    Ok((out, tau))
}

fn refine(freqs: &[f64], values: &[Complex64], tau0: f64) -> f64 {
    // The resonance contributes a phase whose deviation from its mean is below
    // π, which bounds the error of the regression slope.
    let n = freqs.len() as f64;
    let xm = freqs.iter().sum::<f64>() / n;
    let (mut s1, mut s2) = (0.0, 0.0);
    for &f in freqs {
        s1 += (f - xm).abs();
        s2 += (f - xm) * (f - xm);
    }
    let half = 1.1 * s1 / (2.0 * s2);

    let stride = freqs.len().div_ceil(512).max(1);
    let sub_f: Vec<f64> = freqs.iter().step_by(stride).copied().collect();
    let sub_v: Vec<Complex64> = values.iter().step_by(stride).copied().collect();
    let mut coarse = DelayCost::new(sub_f, sub_v);
    const K: usize = 81;
    let step = 2.0 * half / (K - 1) as f64;
    let mut best = (tau0, coarse.eval(tau0));
    for k in 0..K {
        let t = tau0 - half + step * k as f64;
        let c = coarse.eval(t);
        if c < best.1 {
            best = (t, c);
        }
    }

    let mut full = DelayCost::new(freqs.to_vec(), values.to_vec());
    let (t, c) = brent_min(|t| full.eval(t), best.0 - step, best.0 + step, 1e-12 * step, 200);
    let c0 = full.eval(tau0);
    if c <= c0 {
        t
    } else {
        tau0
    }
}
