//! Shannon-entropy metrics of a sweep.
//!
//! Each calibrated sample is read as a photon absorption probability
//! `p_r = |1 − S21|²`, worth `H = −p_r·log₂ p_r` bits.

use crate::model::{notch, ResonatorParams};
use crate::synth::Sweep;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// `|1 − s21|²` clamped to `[0, 1]`, and whether clamping was needed.
pub fn absorption_prob_checked(s21: Complex64) -> (f64, bool) {
    let p = (Complex64::new(1.0, 0.0) - s21).norm_sqr();
    if p > 1.0 {
        (1.0, true)
    } else {
        (p, false)
    }
}

pub fn absorption_prob(s21: Complex64) -> f64 {
    absorption_prob_checked(s21).0
}

/// `−p·log₂ p`, zero at both ends.
pub fn entropy_point(p_r: f64) -> f64 {
    if p_r <= 0.0 || p_r >= 1.0 {
        0.0
    } else {
        -p_r * p_r.log2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub f_hz: f64,
    pub p_r: f64,
    pub h_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub per_point: Vec<EntropyPoint>,
    pub h_set: f64,
    pub h_density: f64,
    pub clamp_count: usize,
}

/// JSON summary of an [`EntropyReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySummary {
    pub h_set_bits: f64,
    pub h_density: f64,
    pub clamp_count: usize,
    pub n_points: usize,
}

impl EntropyReport {
    fn from_samples(samples: impl Iterator<Item = (f64, Complex64)>) -> Self {
        let mut per_point = Vec::new();
        let mut clamp_count = 0;
        let mut h_set = 0.0;
        for (f, s) in samples {
            let (p_r, clamped) = absorption_prob_checked(s);
            clamp_count += clamped as usize;
            let h = entropy_point(p_r);
            h_set += h;
            per_point.push(EntropyPoint { f_hz: f, p_r, h_bits: h });
        }
        let n = per_point.len().max(1) as f64;
        Self {
            h_density: h_set / n,
            per_point,
            h_set,
            clamp_count,
        }
    }

    pub fn summary(&self) -> EntropySummary {
        EntropySummary {
            h_set_bits: self.h_set,
            h_density: self.h_density,
            clamp_count: self.clamp_count,
            n_points: self.per_point.len(),
        }
    }

    /// Writes `f_hz,p_r,h_bits` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "f_hz,p_r,h_bits")?;
        for p in &self.per_point {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", p.f_hz, p.p_r, p.h_bits)?;
        }
        Ok(())
    }
}

/// Entropy of a background-calibrated sweep.
pub fn entropy_set(sweep: &Sweep) -> EntropyReport {
    EntropyReport::from_samples(sweep.samples().iter().map(|s| (s.f, s.s21)))
}

/// Entropy of the noiseless calibrated model sampled at `freqs`.
pub fn entropy_model(params: &ResonatorParams, freqs: &[f64]) -> EntropyReport {
    let (q_l, q_c, phi, f_r) = (params.q_l(), params.q_c_mag(), params.phi(), params.f_r());
    EntropyReport::from_samples(freqs.iter().map(|&f| (f, notch(q_l, q_c, phi, f_r, f))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{grid_hpd_span, grid_spd, GridKind};
    use std::f64::consts::E;

    #[test]
    fn absorption_examples() {
        assert_eq!(absorption_prob(Complex64::new(1.0, 0.0)), 0.0);
        assert!((absorption_prob(Complex64::new(0.5, 0.0)) - 0.25).abs() < 1e-15);
        assert_eq!(absorption_prob_checked(Complex64::new(-0.2, 0.0)), (1.0, true));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_point(0.0), 0.0);
        assert_eq!(entropy_point(1.0), 0.0);
        assert!((entropy_point(0.5) - 0.5).abs() < 1e-15);
        let peak = entropy_point(1.0 / E);
        assert!((peak - E.log2() / E).abs() < 1e-15);
        assert!((peak - 0.5307).abs() < 1e-4);
        for p in [0.3, 0.35, 0.4, 0.45] {
            assert!(entropy_point(p) < peak);
        }
    }

    #[test]
    fn off_resonant_single_point() {
        let p = ResonatorParams::new(5e9, 5e4, 1e4, 0.0).unwrap();
        let r = entropy_model(&p, &[5e9 + 1e3 * p.linewidth()]);
        assert!(r.h_set < 1e-5);
    }

    fn app_f() -> ResonatorParams {
        ResonatorParams::new(5e9, 5e4, 1e4, 0.0).unwrap()
    }

    #[test]
    fn two_symmetric_peaks_and_central_dip() {
        let p = app_f();
        let f = grid_spd(p.f_r(), 4.0 * p.linewidth(), 201).unwrap();
        let r = entropy_model(&p, &f);
        let h: Vec<f64> = r.per_point.iter().map(|x| x.h_bits).collect();
        for i in 0..100 {
            assert!((h[i] - h[200 - i]).abs() < 1e-10);
        }
        let left = (0..100).max_by(|&a, &b| h[a].total_cmp(&h[b])).unwrap();
        assert!(h[100] < h[left]);
        // Peak where p_r = 1/e on the Lorentzian d²/(1 + 4Q_l²(f/f_r − 1)²).
        let d = p.diameter();
        let x = (E * d * d - 1.0).sqrt();
        let detuning = x / (2.0 * p.q_l()) * p.f_r() / p.linewidth();
        assert!((detuning - 0.5).abs() < 0.05, "{detuning}");
        let found = (p.f_r() - f[left]) / p.linewidth();
        assert!((found - detuning).abs() < 0.02 + 4.0 / 200.0, "{found}");
        let sum: f64 = h.iter().sum();
        assert!((sum - r.h_set).abs() <= 1e-12 * r.h_set);
    }

    #[test]
    fn spd_density_peak_near_one_and_a_half() {
        let p = app_f();
        let spans: Vec<f64> = (0..=40).map(|k| 0.5 + 0.05 * k as f64).collect();
        let dens: Vec<f64> = spans
            .iter()
            .map(|&s| entropy_model(&p, &grid_spd(p.f_r(), s * p.linewidth(), 10001).unwrap()).h_density)
            .collect();
        let k = (0..dens.len()).max_by(|&a, &b| dens[a].total_cmp(&dens[b])).unwrap();
        assert!((1.2..=1.8).contains(&spans[k]), "{}", spans[k]);
    }

    #[test]
    fn hpd_density_matches_arc_average() {
        // On the span-limited homophasal grid p_r = d²cos²(ψ/2) with ψ uniform on
        // [−ψ_max, ψ_max], so H/N is the arc average of H.
        let p = app_f();
        let d2 = p.diameter().powi(2);
        for s in [2.0, 10.0, 100.0] {
            let f = grid_hpd_span(p.f_r(), p.q_l(), 4001, s * p.linewidth()).unwrap();
            let got = entropy_model(&p, &f).h_density;
            let psi_max = 2.0 * s.atan();
            let m = 200_000;
            let quad = (0..m)
                .map(|k| {
                    let psi = -psi_max + (k as f64 + 0.5) * 2.0 * psi_max / m as f64;
                    entropy_point(d2 * (0.5 * psi).cos().powi(2))
                })
                .sum::<f64>()
                / m as f64;
            assert!((got - quad).abs() / quad < 2e-3, "{s}: {got} vs {quad}");
        }
    }

    #[test]
    fn clamped_points_counted() {
        let p = ResonatorParams::new(5e9, 1e7, 1e4, 1.2).unwrap();
        let f = grid_spd(p.f_r(), 4.0 * p.linewidth(), 201).unwrap();
        let r = entropy_model(&p, &f);
        assert!(r.clamp_count > 0);
        assert!(r.per_point.iter().all(|x| (0.0..=1.0).contains(&x.p_r) && x.h_bits >= 0.0));
        let sweep = crate::synth::inject_noise(
            &p,
            &crate::model::Background::IDENTITY,
            &f,
            &crate::synth::NoiseSpec::NONE,
            GridKind::Spd,
        )
        .unwrap();
        assert_eq!(entropy_set(&sweep), r);
    }

    #[test]
    fn csv_and_summary() {
        let p = app_f();
        let r = entropy_model(&p, &grid_spd(p.f_r(), 4.0 * p.linewidth(), 5).unwrap());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("f_hz,p_r,h_bits\n"));
        assert_eq!(text.lines().count(), 6);
        let v = serde_json::to_value(r.summary()).unwrap();
        assert!(v.get("h_set_bits").is_some() && v.get("clamp_count").is_some());
    }
}
