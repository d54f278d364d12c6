use super::noise::{inject_noise, NoiseSpec};
use super::sweep::{GridKind, Sweep};
use super::SynthError;
use crate::model::{Background, ResonatorParams};
use crate::rng::derive_seed;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Power-dependent trace averaging: `N_tr = (P + 50)² + 20` below −50 dBm, 20 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceAveragePlan {
    pub p_vna_dbm: f64,
    pub n_tr: u32,
}

pub fn trace_average_plan(p_vna_dbm: f64) -> Result<TraceAveragePlan, SynthError> {
    if !p_vna_dbm.is_finite() {
        return Err(SynthError::InvalidArgument(format!(
            "p_vna_dbm must be finite, got {p_vna_dbm}"
        )));
    }
    let n_tr = if p_vna_dbm < -50.0 {
        ((p_vna_dbm + 50.0).powi(2) + 20.0).round() as u32
    } else {
        20
    };
    Ok(TraceAveragePlan { p_vna_dbm, n_tr })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// Scale the background noise by `1/√N_tr`.
    #[default]
    Scaled,
    /// Generate `N_tr` independent noisy traces and average them.
    Literal,
}

/// Simulates a trace-averaged sweep.
pub fn simulate_averaged(
    params: &ResonatorParams,
    bg: &Background,
    freqs: &[f64],
    noise: &NoiseSpec,
    plan: &TraceAveragePlan,
    mode: AveragingMode,
    grid_kind: GridKind,
) -> Result<Sweep, SynthError> {
    match mode {
        AveragingMode::Scaled => inject_noise(params, bg, freqs, &noise.averaged(plan.n_tr), grid_kind),
        AveragingMode::Literal => {
            let mut acc = vec![Complex64::new(0.0, 0.0); freqs.len()];
            let mut first = None;
            for k in 0..plan.n_tr {
                let spec = NoiseSpec {
                    seed: derive_seed(noise.seed, &[k as u64]),
                    ..*noise
                };
                let sw = inject_noise(params, bg, freqs, &spec, grid_kind)?;
                for (a, s) in acc.iter_mut().zip(sw.samples()) {
                    *a += s.s21;
                }
                first.get_or_insert(sw);
            }
            let inv = 1.0 / plan.n_tr as f64;
            let first = first.expect("n_tr >= 1");
            Ok(first.with_values(acc.into_iter().map(|v| v * inv).collect()))
        }
    }
}
