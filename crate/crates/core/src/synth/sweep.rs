use crate::model::ComplexSample;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Linear frequency spacing.
    Spd,
    /// Uniform spacing in resonance phase.
    Hpd,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("sweep is empty")]
    Empty,
    #[error("sample {index} is not finite or has non-positive frequency")]
    InvalidSample { index: usize },
    #[error("frequencies must be strictly increasing (sample {index})")]
    NotIncreasing { index: usize },
}

/// An ordered frequency sweep of complex transmission samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    samples: Vec<ComplexSample>,
    pub grid_kind: GridKind,
    pub provenance: String,
}

impl Sweep {
    /// Validates ordering and finiteness. The minimum point count needed for
    /// fitting is enforced by the fit itself.
    pub fn new(
        samples: Vec<ComplexSample>,
        grid_kind: GridKind,
        provenance: impl Into<String>,
    ) -> Result<Self, SweepError> {
        if samples.is_empty() {
            return Err(SweepError::Empty);
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.is_valid() {
                return Err(SweepError::InvalidSample { index: i });
            }
            if i > 0 && s.f <= samples[i - 1].f {
                return Err(SweepError::NotIncreasing { index: i });
            }
        }
        Ok(Self {
            samples,
            grid_kind,
            provenance: provenance.into(),
        })
    }

    pub fn from_parts(
        freqs: &[f64],
        values: &[Complex64],
        grid_kind: GridKind,
        provenance: impl Into<String>,
    ) -> Result<Self, SweepError> {
        assert_eq!(freqs.len(), values.len(), "frequency/value length mismatch");
        let samples = freqs
            .iter()
            .zip(values)
            .map(|(&f, &s21)| ComplexSample::new(f, s21))
            .collect();
        Self::new(samples, grid_kind, provenance)
    }

    pub fn samples(&self) -> &[ComplexSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_points(&self) -> usize {
        self.samples.len()
    }

    pub fn freqs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.f).collect()
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.samples.iter().map(|s| s.s21).collect()
    }

    pub fn span(&self) -> f64 {
        self.samples[self.samples.len() - 1].f - self.samples[0].f
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.samples[self.samples.len() - 1].f + self.samples[0].f)
    }

    /// Same frequencies with the transmission values replaced.
    pub fn with_values(&self, values: Vec<Complex64>) -> Sweep {
        assert_eq!(values.len(), self.samples.len());
        let samples = self
            .samples
            .iter()
            .zip(values)
            .map(|(s, v)| ComplexSample::new(s.f, v))
            .collect();
        Sweep {
            samples,
            grid_kind: self.grid_kind,
            provenance: self.provenance.clone(),
        }
    }

    /// Applies `g(f, s21)` to every sample.
    pub fn map_values(&self, mut g: impl FnMut(f64, Complex64) -> Complex64) -> Sweep {
        let values = self.samples.iter().map(|s| g(s.f, s.s21)).collect();
        self.with_values(values)
    }
}
