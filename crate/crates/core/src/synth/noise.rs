use super::sweep::{GridKind, Sweep};
use super::SynthError;
use crate::model::{notch, Background, ResonatorParams};
use crate::rng;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Spectral shape of the resonance-frequency jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrSpectrum {
    #[default]
    White,
    OneOverSqrtF,
}

/// Noise applied to a synthetic sweep.
///
/// Background noise is drawn per point from sub-stream 0 of `seed` (real part
/// then imaginary part), frequency jitter from sub-stream 1. Draws are indexed
/// by point rank, so two grids of equal length see identical noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma_n_re: f64,
    pub sigma_n_im: f64,
    #[serde(rename = "sigma_fr_hz")]
    pub sigma_fr: f64,
    #[serde(default)]
    pub fr_spectrum: FrSpectrum,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        sigma_n_re: 0.0,
        sigma_n_im: 0.0,
        sigma_fr: 0.0,
        fr_spectrum: FrSpectrum::White,
        seed: 0,
    };

    pub fn isotropic(sigma_n: f64, sigma_fr: f64, seed: u64) -> Self {
        Self {
            sigma_n_re: sigma_n,
            sigma_n_im: sigma_n,
            sigma_fr,
            fr_spectrum: FrSpectrum::White,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in [
            ("sigma_n_re", self.sigma_n_re),
            ("sigma_n_im", self.sigma_n_im),
            ("sigma_fr", self.sigma_fr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::InvalidArgument(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_n_re == 0.0 && self.sigma_n_im == 0.0 && self.sigma_fr == 0.0
    }

    /// Background noise scaled down by trace averaging.
    pub fn averaged(&self, n_traces: u32) -> Self {
        let s = (n_traces.max(1) as f64).sqrt();
        Self {
            sigma_n_re: self.sigma_n_re / s,
            sigma_n_im: self.sigma_n_im / s,
            ..*self
        }
    }
}

/// Unit-variance jitter sequence of length `n`.
pub fn unit_jitter(n: usize, spectrum: FrSpectrum, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, 1);
    let white: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    match spectrum {
        FrSpectrum::White => white,
        FrSpectrum::OneOverSqrtF => shape_one_over_sqrt_f(white),
    }
}

/// Shapes white noise so its power spectral density falls as `1/√f`
/// (amplitude `f^(-1/4)`), then rescales to unit sample variance.
fn shape_one_over_sqrt_f(white: Vec<f64>) -> Vec<f64> {
    let n = white.len();
    if n < 2 {
        return white;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = white.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fwd.process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, b) in buf.iter_mut().enumerate().skip(1) {
        let freq = k.min(n - k) as f64;
        *b *= freq.powf(-0.25);
    }
    inv.process(&mut buf);
    let shaped: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = shaped.iter().sum::<f64>() / n as f64;
    let var = shaped.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = if var > 0.0 { var.sqrt().recip() } else { 0.0 };
    shaped.into_iter().map(|x| (x - mean) * scale).collect()
}

/// Evaluates the model on `freqs`, jittering `f_r` per point and adding
/// complex Gaussian background noise. Deterministic given `noise.seed`.
pub fn inject_noise(
    params: &ResonatorParams,
    bg: &Background,
    freqs: &[f64],
    noise: &NoiseSpec,
    grid_kind: GridKind,
) -> Result<Sweep, SynthError> {
    if freqs.is_empty() {
        return Err(SynthError::TooFewPoints { needed: 1, got: 0 });
    }
    noise.validate()?;
    let q_l = params.q_l();
    let jitter = if noise.sigma_fr > 0.0 {
        Some(unit_jitter(freqs.len(), noise.fr_spectrum, noise.seed))
    } else {
        None
    };
    let add_bg = noise.sigma_n_re > 0.0 || noise.sigma_n_im > 0.0;
    let mut r = rng::stream(noise.seed, 0);
    let mut values = Vec::with_capacity(freqs.len());
    for (i, &f) in freqs.iter().enumerate() {
        let f_r = match &jitter {
            Some(j) => params.f_r() + noise.sigma_fr * j[i],
            None => params.f_r(),
        };
        let mut s = bg.factor(f) * notch(q_l, params.q_c_mag(), params.phi(), f_r, f);
        if add_bg {
            let dre: f64 = r.sample(StandardNormal);
            let dim: f64 = r.sample(StandardNormal);
            s += Complex64::new(noise.sigma_n_re * dre, noise.sigma_n_im * dim);
        }
        values.push(s);
    }
    let provenance = format!(
        "synthetic f_r_hz={} q_i={} q_c_mag={} phi_rad={} a={} alpha_rad={} tau_s={} \
         sigma_n_re={} sigma_n_im={} sigma_fr_hz={} seed={}",
        params.f_r(),
        params.q_i(),
        params.q_c_mag(),
        params.phi(),
        bg.a,
        bg.alpha,
        bg.tau,
        noise.sigma_n_re,
        noise.sigma_n_im,
        noise.sigma_fr,
        noise.seed
    );
    Sweep::from_parts(freqs, &values, grid_kind, provenance).map_err(SynthError::from)
}
