use super::FitError;
use crate::model::{notch, notch_gradient, notch_tangent};
use crate::synth::Sweep;
use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Residual degrees of freedom used to scale the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofMode {
    /// `N − 4`: one per fitted model parameter.
    #[default]
    NMinus4,
    /// `N − 6`: also counts the background amplitude and phase.
    NMinus6,
}

impl DofMode {
    pub fn params(self) -> usize {
        match self {
            DofMode::NMinus4 => 4,
            DofMode::NMinus6 => 6,
        }
    }
}

/// Calibrated model parameters in covariance order `(Q_l, |Q_c|, f_r, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub q_l: f64,
    pub q_c_mag: f64,
    pub f_r: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    pub covariance: [[f64; 4]; 4],
    pub sigma_q_l: f64,
    pub sigma_q_c_mag: f64,
    pub sigma_f_r: f64,
    pub sigma_phi: f64,
    pub sigma_q_i: f64,
    pub chi2: f64,
}

/// Condition threshold on the correlation-scaled normal matrix.
const RANK_TOL: f64 = 1e-13;

/// Below this rms residual (relative to the largest `|S21|`) the data are
/// treated as exact: residual directions are then solver roundoff, often
/// all radial, and projecting on them would hide the tangential `f_r` axis.
const EXACT_RMS: f64 = 1e-7;

/// Real Jacobian of the residual magnitudes: each complex derivative is
/// projected on the residual direction, or on the locus tangent where the
/// residual is too small to define one. Returns the rows and `χ²`.
pub fn jacobian(sweep: &Sweep, m: &ModelPoint) -> (Vec<[f64; 4]>, f64) {
    let mut chi = Vec::with_capacity(sweep.len());
    let mut chi2 = 0.0;
    for s in sweep.samples() {
        let r = s.s21 - notch(m.q_l, m.q_c_mag, m.phi, m.f_r, s.f);
        chi2 += r.norm_sqr();
        chi.push(r);
    }
    let max = chi.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let scale = sweep.samples().iter().map(|s| s.s21.norm()).fold(0.0, f64::max);
    let exact = (chi2 / chi.len().max(1) as f64).sqrt() <= EXACT_RMS * scale;
    let mut rows = Vec::with_capacity(sweep.len());
    for (s, r) in sweep.samples().iter().zip(&chi) {
        let g = notch_gradient(m.q_l, m.q_c_mag, m.phi, m.f_r, s.f);
        let project = |dir: Complex64| {
            [
                (g[0] * dir.conj()).re,
                (g[1] * dir.conj()).re,
                (g[2] * dir.conj()).re,
                (g[3] * dir.conj()).re,
            ]
        };
        if exact {
            // Keep both components of the complex gradient.
            rows.push(project(Complex64::new(1.0, 0.0)));
            rows.push(project(Complex64::i()));
        } else if r.norm() >= 1e-3 * max {
            rows.push(project(r / r.norm()));
        } else {
            let t = notch_tangent(m.q_l, m.q_c_mag, m.phi, m.f_r, s.f);
            rows.push(project(t / t.norm()));
        }
    }
    (rows, chi2)
}

/// Covariance `χ²/(N − p)·(JᵀJ)⁻¹` of `(Q_l, |Q_c|, f_r, φ)` from the
/// calibrated sweep, with `σ_Qi` propagated through the coupling relation.
pub fn estimate_uncertainties(
    sweep: &Sweep,
    m: &ModelPoint,
    q_i: f64,
    dof: DofMode,
) -> Result<Uncertainty, FitError> {
    let n = sweep.len();
    let p = dof.params();
    if n <= p {
        return Err(FitError::DegreesOfFreedom { needed: p + 1, got: n });
    }
    let (rows, chi2) = jacobian(sweep, m);
    let mut a = Matrix4::<f64>::zeros();
    for row in &rows {
        let j = Vector4::from_row_slice(row);
        a += j * j.transpose();
    }
    let d = Vector4::from_fn(|k, _| a[(k, k)].sqrt());
    if d.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        let mut direction = [0.0; 4];
        if let Some(k) = d.iter().position(|x| !(*x > 0.0)) {
            direction[k] = 1.0;
        }
        return Err(FitError::RankDeficient { direction });
    }
    let corr = Matrix4::from_fn(|i, j| a[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(corr);
    let (imin, &emin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("four eigenvalues");
    let emax = eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
    if !(emin > RANK_TOL * emax) {
        let v = eig.eigenvectors.column(imin);
        let raw = Vector4::from_fn(|k, _| v[k] / d[k]);
        let raw = raw / raw.norm();
        return Err(FitError::RankDeficient {
            direction: [raw[0], raw[1], raw[2], raw[3]],
        });
    }
    let inv_corr = corr
        .cholesky()
        .ok_or(FitError::RankDeficient { direction: [0.0; 4] })?
        .inverse();
    let scale = chi2 / (n - p) as f64;
    let cov = Matrix4::from_fn(|i, j| scale * inv_corr[(i, j)] / (d[i] * d[j]));
    let mut covariance = [[0.0; 4]; 4];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            // The Cholesky inverse is symmetric only to roundoff.
            *c = 0.5 * (cov[(i, j)] + cov[(j, i)]);
        }
    }
    let sigma_q_i = propagate_qi_error(m, q_i, &covariance);
    Ok(Uncertainty {
        covariance,
        sigma_q_l: cov[(0, 0)].sqrt(),
        sigma_q_c_mag: cov[(1, 1)].sqrt(),
        sigma_f_r: cov[(2, 2)].sqrt(),
        sigma_phi: cov[(3, 3)].sqrt(),
        sigma_q_i,
        chi2,
    })
}

/// First-order propagation of the covariance through
/// `1/Q_i = 1/Q_l − cos φ/|Q_c|`.
pub fn propagate_qi_error(m: &ModelPoint, q_i: f64, cov: &[[f64; 4]; 4]) -> f64 {
    let qi2 = q_i * q_i;
    let g = [
        qi2 / (m.q_l * m.q_l),
        -qi2 * m.phi.cos() / (m.q_c_mag * m.q_c_mag),
        0.0,
        -qi2 * m.phi.sin() / m.q_c_mag,
    ];
    let mut var = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            var += g[i] * cov[i][j] * g[j];
        }
    }
    var.max(0.0).sqrt()
}
