//! Strict JSON inputs. Physical quantities are always explicit.

use std::path::Path;

use resfit_core::synth::{grid_hpd, grid_hpd_span, grid_spd, FrSpectrum};
use resfit_core::{Background, GridKind, ResonatorParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    Spd,
    /// Homophasal over the full circle.
    Hpd,
    /// Homophasal over the arc a linear sweep of `span_hz` would cover.
    HpdSpan,
}

/// Resonator plus sampling grid, shared by `simulate` and `entropy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorGrid {
    pub f_r_hz: f64,
    pub q_i: f64,
    pub q_c_mag: f64,
    pub phi_rad: f64,
    pub grid: GridChoice,
    pub n_points: usize,
    #[serde(default)]
    pub span_hz: Option<f64>,
}

impl ResonatorGrid {
    pub fn params(&self) -> Result<ResonatorParams, CliError> {
        Ok(ResonatorParams::new(self.f_r_hz, self.q_i, self.q_c_mag, self.phi_rad)?)
    }

    pub fn kind(&self) -> GridKind {
        match self.grid {
            GridChoice::Spd => GridKind::Spd,
            GridChoice::Hpd | GridChoice::HpdSpan => GridKind::Hpd,
        }
    }

    pub fn freqs(&self, p: &ResonatorParams) -> Result<Vec<f64>, CliError> {
        if self.n_points < 5 {
            return Err(CliError::Validation(format!(
                "n_points must be at least 5, got {}",
                self.n_points
            )));
        }
        let span = || {
            self.span_hz
                .ok_or_else(|| CliError::Validation(format!("grid {:?} requires span_hz", self.grid)))
        };
        Ok(match self.grid {
            GridChoice::Spd => grid_spd(p.f_r(), span()?, self.n_points)?,
            GridChoice::Hpd => grid_hpd(p.f_r(), p.q_l(), self.n_points)?,
            GridChoice::HpdSpan => grid_hpd_span(p.f_r(), p.q_l(), self.n_points, span()?)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub f_r_hz: f64,
    pub q_i: f64,
    pub q_c_mag: f64,
    pub phi_rad: f64,
    pub grid: GridChoice,
    pub n_points: usize,
    #[serde(default)]
    pub span_hz: Option<f64>,
    pub background: Background,
    pub sigma_n_re: f64,
    pub sigma_n_im: f64,
    pub sigma_fr_hz: f64,
    #[serde(default)]
    pub fr_spectrum: FrSpectrum,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SimulateConfig {
    pub fn resonator(&self) -> ResonatorGrid {
        ResonatorGrid {
            f_r_hz: self.f_r_hz,
            q_i: self.q_i,
            q_c_mag: self.q_c_mag,
            phi_rad: self.phi_rad,
            grid: self.grid,
            n_points: self.n_points,
            span_hz: self.span_hz,
        }
    }
}

/// Generating truth written next to a simulated sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: SimulateConfig,
    pub seed: u64,
    pub q_l: f64,
    pub linewidth_hz: f64,
    pub diameter: f64,
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(&text, &path.display().to_string())
}

pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Validation(format!("{origin}: {e}")))
}
