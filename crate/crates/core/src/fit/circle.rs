use super::FitError;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleGeometry {
    pub xc: f64,
    pub yc: f64,
    pub r: f64,
    pub rms_radial_residual: f64,
}

impl CircleGeometry {
    pub fn center(&self) -> Complex64 {
        Complex64::new(self.xc, self.yc)
    }
}

/// Centred moments of a point cloud, the input to the Taubin fit.
struct Moments {
    xm: f64,
    ym: f64,
    mxx: f64,
    myy: f64,
    mxy: f64,
    mxz: f64,
    myz: f64,
    mzz: f64,
}

fn moments(points: &[Complex64]) -> Moments {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.re, b + p.im));
    let (xm, ym) = (sx / n, sy / n);
    let mut m = Moments {
        xm,
        ym,
        mxx: 0.0,
        myy: 0.0,
        mxy: 0.0,
        mxz: 0.0,
        myz: 0.0,
        mzz: 0.0,
    };
    for p in points {
        let x = p.re - xm;
        let y = p.im - ym;
        let z = x * x + y * y;
        m.mxx += x * x;
        m.myy += y * y;
        m.mxy += x * y;
        m.mxz += x * z;
        m.myz += y * z;
        m.mzz += z * z;
    }
    m.mxx /= n;
    m.myy /= n;
    m.mxy /= n;
    m.mxz /= n;
    m.myz /= n;
    m.mzz /= n;
    m
}

/// Taubin's gradient-weighted algebraic circle fit.
///
/// The smallest generalised eigenvalue of the moment matrix pencil is found by
/// Newton iteration on its characteristic polynomial starting from zero; the
/// centre then follows in closed form. Exact for points on a circle, and
/// invariant under translation, rotation and scaling of the data.
pub fn fit_circle_algebraic(points: &[Complex64]) -> Result<CircleGeometry, FitError> {
    let (c, r) = taubin(points)?;
    let rms = radial_sse(points, c, r).map(|s| (s / points.len() as f64).sqrt())?;
    Ok(CircleGeometry {
        xc: c.re,
        yc: c.im,
        r,
        rms_radial_residual: rms,
    })
}

pub(crate) fn taubin(points: &[Complex64]) -> Result<(Complex64, f64), FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let m = moments(points);
    let mz = m.mxx + m.myy;
    if !(mz > 0.0) {
        return Err(FitError::DegenerateGeometry(
            "all points coincide".to_string(),
        ));
    }
    let cov_xy = m.mxx * m.myy - m.mxy * m.mxy;
    let var_z = m.mzz - mz * mz;
    let a3 = 4.0 * mz;
    let a2 = -3.0 * mz * mz - m.mzz;
    let a1 = var_z * mz + 4.0 * cov_xy * mz - m.mxz * m.mxz - m.myz * m.myz;
    let a0 = m.mxz * (m.mxz * m.myy - m.myz * m.mxy) + m.myz * (m.myz * m.mxx - m.mxz * m.mxy)
        - var_z * cov_xy;
    let a22 = 2.0 * a2;
    let a33 = 3.0 * a3;

    let mut x = 0.0f64;
    let mut y = a0;
    for _ in 0..100 {
        let dy = a1 + x * (a22 + a33 * x);
        let xnew = x - y / dy;
        if xnew == x || !xnew.is_finite() {
            break;
        }
        let ynew = a0 + xnew * (a1 + xnew * (a2 + xnew * a3));
        if ynew.abs() >= y.abs() {
            break;
        }
        x = xnew;
        y = ynew;
    }

    let det = x * x - x * mz + cov_xy;
    let cx = (m.mxz * (m.myy - x) - m.myz * m.mxy) / det / 2.0;
    let cy = (m.myz * (m.mxx - x) - m.mxz * m.mxy) / det / 2.0;
    let r = (cx * cx + cy * cy + mz).sqrt();
    // A radius many orders beyond the data extent means the points are collinear.
    if !(r.is_finite() && cx.is_finite() && cy.is_finite()) || r > 1e8 * mz.sqrt() {
        return Err(FitError::DegenerateGeometry(
            "points are collinear".to_string(),
        ));
    }
    Ok((Complex64::new(cx + m.xm, cy + m.ym), r))
}

/// Sum of squared radial residuals about `(c, r)`.
pub(crate) fn radial_sse(points: &[Complex64], c: Complex64, r: f64) -> Result<f64, FitError> {
    Ok(points
        .iter()
        .map(|p| {
            let d = (p - c).norm() - r;
            d * d
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Background, ResonatorParams, s21_ideal};
    use crate::synth::grid_spd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn three_points_unit_circle() {
        let pts = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
        ];
        let c = fit_circle_algebraic(&pts).unwrap();
        assert!(c.xc.abs() < 1e-12 && c.yc.abs() < 1e-12);
        assert!((c.r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resonance_locus_radius() {
        let p = ResonatorParams::new(5e9, 3e4, 1e4, 0.5).unwrap();
        let f = grid_spd(p.f_r(), 10.0 * p.linewidth(), 2001).unwrap();
        let z: Vec<_> = f
            .iter()
            .map(|&f| s21_ideal(&p, &Background::IDENTITY, f).unwrap())
            .collect();
        let c = fit_circle_algebraic(&z).unwrap();
        let expect = p.q_l() / (2.0 * p.q_c_mag());
        assert!((c.r - expect).abs() / expect < 1e-10);
        assert!(c.rms_radial_residual < 1e-13);
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts: Vec<_> = (0..10).map(|k| Complex64::new(k as f64, 2.0 * k as f64)).collect();
        assert!(matches!(
            fit_circle_algebraic(&pts),
            Err(FitError::DegenerateGeometry(_))
        ));
        assert!(matches!(
            fit_circle_algebraic(&pts[..2]),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn noisy_circle_statistics() {
        // 95% of seeds must land within 1e-4 of the generating circle.
        let n = 10_000;
        let mut good = 0;
        let seeds = 40;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..n)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    let nx: f64 = rng.sample(StandardNormal);
                    let ny: f64 = rng.sample(StandardNormal);
                    Complex64::new(0.3 + t.cos() + 1e-3 * nx, -0.2 + t.sin() + 1e-3 * ny)
                })
                .collect();
            let c = fit_circle_algebraic(&pts).unwrap();
            let err = (c.xc - 0.3).abs().max((c.yc + 0.2).abs()).max((c.r - 1.0).abs());
            if err < 1e-4 {
                good += 1;
            }
        }
        assert!(good as f64 >= 0.95 * seeds as f64, "{good}/{seeds}");
    }
}
