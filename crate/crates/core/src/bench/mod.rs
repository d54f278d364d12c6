//! Monte Carlo benchmark harness.
//!
//! A [`BenchConfig`] spans a grid of cells (true `Q_i`, noise levels, point
//! count, span ratio, grid kind). Every cell runs `trials_per_cell` independent
//! synthetic sweeps through [`fit_full`]. Trial seeds are derived from the
//! master seed and the cell coordinates excluding the grid kind, so SPD and
//! HPD trials of the same cell see identical noise draws.

mod analysis;
mod output;
pub mod stats;

pub use analysis::{
    entropy_vs_span, error_ratio_map, scaling_collapse, sweep_coupling, sweep_span, CollapseCurve,
    CollapseReport, CouplingCurve, CouplingReport, EntropyRow, EntropyTable, RatioCell, RatioMap,
    SpanCurve, SpanReport,
};
pub use output::{
    svg_heatmap, svg_line_plot, write_records_csv, write_trials_csv, Manifest, PlotSeries,
};

use crate::fit::{fit_full, FitOptions};
use crate::info::entropy_model;
use crate::model::{Background, ResonatorParams};
use crate::rng::{derive_seed, float_key, stream};
use crate::synth::{grid_hpd, grid_hpd_span, grid_spd, inject_noise, FrSpectrum, GridKind, NoiseSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Which frequency grid a cell uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchGrid {
    /// Linear grid over the span.
    Spd,
    /// Homophasal grid restricted to the span.
    Hpd,
    /// Homophasal grid over the full circle; ignores the span.
    HpdFull,
}

impl BenchGrid {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchGrid::Spd => "spd",
            BenchGrid::Hpd => "hpd",
            BenchGrid::HpdFull => "hpd_full",
        }
    }

    fn kind(self) -> GridKind {
        match self {
            BenchGrid::Spd => GridKind::Spd,
            _ => GridKind::Hpd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRangeAxis {
    pub log_range: LogRange,
}

/// A sweep axis: explicit values or a log-spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Log(LogRangeAxis),
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Log(LogRangeAxis { log_range: r }) => log_space(r.start, r.stop, r.count),
        }
    }

    pub fn single(x: f64) -> Self {
        Axis::Values(vec![x])
    }
}

/// `count` points log-spaced from `start` to `stop`, endpoints exact.
pub fn log_space(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![start],
        _ => {
            let (a, b) = (start.log10(), stop.log10());
            (0..count)
                .map(|k| match k {
                    0 => start,
                    _ if k == count - 1 => stop,
                    _ => 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64),
                })
                .collect()
        }
    }
}

fn default_window() -> [f64; 2] {
    [2.0, 100.0]
}

/// Benchmark definition. Physical quantities carry their unit in the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub name: String,
    pub f_r_hz: f64,
    pub q_c_mag: f64,
    pub phi_rad: f64,
    pub q_i: Axis,
    pub background: Background,
    /// Background noise per quadrature.
    pub sigma_n: Axis,
    /// Ratio of imaginary to real background noise; 1 for isotropic noise.
    #[serde(default = "one")]
    pub sigma_n_im_ratio: f64,
    pub sigma_fr_hz: Axis,
    #[serde(default)]
    pub fr_spectrum: FrSpectrum,
    pub n_points: Vec<usize>,
    /// Span in units of the true linewidth.
    pub span_ratio: Axis,
    pub grids: Vec<BenchGrid>,
    pub trials_per_cell: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub fit: FitOptions,
    /// Span-ratio window for slope regressions.
    #[serde(default = "default_window")]
    pub slope_window: [f64; 2],
}

fn one() -> f64 {
    1.0
}

/// Coordinates of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub q_i: f64,
    pub sigma_n: f64,
    pub sigma_fr_hz: f64,
    pub n_points: usize,
    pub span_ratio: f64,
    pub grid: BenchGrid,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidConfig(m));
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.f_r_hz) || !positive(self.q_c_mag) {
            return bad("f_r_hz and q_c_mag must be positive".into());
        }
        if !(self.phi_rad.abs() < std::f64::consts::FRAC_PI_2) {
            return bad(format!("phi_rad must lie in (-pi/2, pi/2), got {}", self.phi_rad));
        }
        if let Err(e) = Background::new(self.background.a, self.background.alpha, self.background.tau) {
            return bad(e.to_string());
        }
        for (name, axis, allow_zero) in [
            ("q_i", &self.q_i, false),
            ("sigma_n", &self.sigma_n, true),
            ("sigma_fr_hz", &self.sigma_fr_hz, true),
            ("span_ratio", &self.span_ratio, false),
        ] {
            if let Axis::Log(LogRangeAxis { log_range: r }) = axis {
                if !(positive(r.start) && positive(r.stop)) || r.count == 0 {
                    return bad(format!("{name}: log_range needs positive start/stop and count >= 1"));
                }
            }
            let v = axis.values();
            if v.is_empty() {
                return bad(format!("axis {name} is empty"));
            }
            if v.iter().any(|&x| !(x.is_finite() && (x > 0.0 || (allow_zero && x == 0.0)))) {
                return bad(format!("axis {name} has an out-of-range value"));
            }
        }
        if !(self.sigma_n_im_ratio >= 0.0 && self.sigma_n_im_ratio.is_finite()) {
            return bad("sigma_n_im_ratio must be non-negative".into());
        }
        if self.n_points.is_empty() || self.n_points.iter().any(|&n| n < 5) {
            return bad("n_points must be non-empty with every value >= 5".into());
        }
        if self.grids.is_empty() {
            return bad("grids is empty".into());
        }
        if self.trials_per_cell == 0 {
            return bad("trials_per_cell must be >= 1".into());
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for q_i in self.q_i.values() {
            for sigma_n in self.sigma_n.values() {
                for sigma_fr_hz in self.sigma_fr_hz.values() {
                    for &n_points in &self.n_points {
                        for span_ratio in self.span_ratio.values() {
                            for &grid in &self.grids {
                                out.push(Cell {
                                    q_i,
                                    sigma_n,
                                    sigma_fr_hz,
                                    n_points,
                                    span_ratio,
                                    grid,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn cell_count(&self) -> usize {
        self.cells().len()
    }

    pub fn trial_count(&self) -> usize {
        self.cell_count() * self.trials_per_cell
    }

    fn params(&self, q_i: f64) -> Result<ResonatorParams, BenchError> {
        ResonatorParams::new(self.f_r_hz, q_i, self.q_c_mag, self.phi_rad)
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))
    }

    /// Noise seed of a trial; independent of the grid kind.
    pub fn trial_seed(&self, cell: &Cell, trial: usize) -> u64 {
        derive_seed(
            self.master_seed,
            &[
                float_key(cell.q_i),
                float_key(cell.sigma_n),
                float_key(cell.sigma_fr_hz),
                cell.n_points as u64,
                float_key(cell.span_ratio),
                trial as u64,
            ],
        )
    }
}

/// Frequencies of a cell's grid.
pub fn cell_grid(params: &ResonatorParams, cell: &Cell) -> Result<Vec<f64>, String> {
    let span = cell.span_ratio * params.linewidth();
    let r = match cell.grid {
        BenchGrid::Spd => grid_spd(params.f_r(), span, cell.n_points),
        BenchGrid::Hpd => grid_hpd_span(params.f_r(), params.q_l(), cell.n_points, span),
        BenchGrid::HpdFull => grid_hpd(params.f_r(), params.q_l(), cell.n_points),
    };
    r.map_err(|e| e.to_string())
}

/// Outcome of one synthetic fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub converged: bool,
    pub q_i: f64,
    pub sigma_q_i: f64,
    pub chi2: f64,
    pub error: Option<String>,
}

/// Aggregates of one cell over its converged trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    #[serde(flatten)]
    pub cell: Cell,
    pub ratio: f64,
    pub n_trials: usize,
    pub n_failed: usize,
    pub median_rel_err: f64,
    pub rel_err_ci: (f64, f64),
    pub median_rel_sigma: f64,
    pub rel_sigma_ci: (f64, f64),
    /// Fraction of converged trials with the truth inside ±2σ.
    pub coverage_2sigma: f64,
    pub mean_rel_bias: f64,
    /// Entropy density of the noiseless model on this grid.
    pub h_density: f64,
    pub trials: Vec<TrialRecord>,
}

impl BenchRecord {
    pub fn converged(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(|t| t.converged)
    }

    pub fn rel_sigmas(&self) -> Vec<f64> {
        self.converged().map(|t| t.sigma_q_i / t.q_i).collect()
    }
}

/// Result of [`run`]: per-cell records in config order plus timing.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub records: Vec<BenchRecord>,
    pub elapsed_s: f64,
    pub threads: usize,
}

impl BenchRun {
    pub fn n_trials(&self) -> usize {
        self.records.iter().map(|r| r.n_trials).sum()
    }

    pub fn n_failed(&self) -> usize {
        self.records.iter().map(|r| r.n_failed).sum()
    }

    pub fn converged_fraction(&self) -> f64 {
        let n = self.n_trials();
        if n == 0 {
            1.0
        } else {
            1.0 - self.n_failed() as f64 / n as f64
        }
    }
}

fn run_trial(cfg: &BenchConfig, params: &ResonatorParams, freqs: &Result<Vec<f64>, String>, cell: &Cell, trial: usize) -> TrialRecord {
    let seed = cfg.trial_seed(cell, trial);
    let fail = |e: String| TrialRecord {
        trial,
        seed,
        converged: false,
        q_i: f64::NAN,
        sigma_q_i: f64::NAN,
        chi2: f64::NAN,
        error: Some(e),
    };
    let freqs = match freqs {
        Ok(f) => f,
        Err(e) => return fail(e.clone()),
    };
    let noise = NoiseSpec {
        sigma_n_re: cell.sigma_n,
        sigma_n_im: cell.sigma_n * cfg.sigma_n_im_ratio,
        sigma_fr: cell.sigma_fr_hz,
        fr_spectrum: cfg.fr_spectrum,
        seed,
    };
    let sweep = match inject_noise(params, &cfg.background, freqs, &noise, cell.grid.kind()) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    match fit_full(&sweep, &cfg.fit) {
        Ok(r) if r.q_i.is_finite() && r.sigma.sigma_q_i.is_finite() => TrialRecord {
            trial,
            seed,
            converged: true,
            q_i: r.q_i,
            sigma_q_i: r.sigma.sigma_q_i,
            chi2: r.chi2,
            error: None,
        },
        Ok(_) => fail("non-finite fit result".to_string()),
        Err(e) => fail(e.to_string()),
    }
}

fn aggregate(cfg: &BenchConfig, index: usize, cell: Cell, h_density: f64, trials: Vec<TrialRecord>) -> BenchRecord {
    let ok: Vec<&TrialRecord> = trials.iter().filter(|t| t.converged).collect();
    let rel_err: Vec<f64> = ok.iter().map(|t| (t.q_i - cell.q_i).abs() / cell.q_i).collect();
    let rel_sigma: Vec<f64> = ok.iter().map(|t| t.sigma_q_i / t.q_i).collect();
    let covered = ok
        .iter()
        .filter(|t| (t.q_i - cell.q_i).abs() <= 2.0 * t.sigma_q_i)
        .count();
    let mut rng = stream(derive_seed(cfg.master_seed, &[0xB007, index as u64]), 2);
    let rel_err_ci = stats::bootstrap_median_ci(&rel_err, &mut rng);
    let rel_sigma_ci = stats::bootstrap_median_ci(&rel_sigma, &mut rng);
    let n_ok = ok.len();
    BenchRecord {
        ratio: cell.q_i / cfg.q_c_mag,
        n_trials: trials.len(),
        n_failed: trials.len() - n_ok,
        median_rel_err: stats::median(&rel_err),
        rel_err_ci,
        median_rel_sigma: stats::median(&rel_sigma),
        rel_sigma_ci,
        coverage_2sigma: if n_ok > 0 { covered as f64 / n_ok as f64 } else { f64::NAN },
        mean_rel_bias: if n_ok > 0 {
            ok.iter().map(|t| (t.q_i - cell.q_i) / cell.q_i).sum::<f64>() / n_ok as f64
        } else {
            f64::NAN
        },
        h_density,
        cell,
        trials,
    }
}

/// Runs every cell of `cfg` on up to `threads` workers (all cores when
/// `None`). Output is identical for any worker count.
pub fn run(cfg: &BenchConfig, threads: Option<usize>) -> Result<BenchRun, BenchError> {
    cfg.validate()?;
    let start = Instant::now();
    let cells = cfg.cells();
    let prepared: Vec<(ResonatorParams, Result<Vec<f64>, String>, f64)> = cells
        .iter()
        .map(|c| {
            let p = cfg.params(c.q_i)?;
            let freqs = cell_grid(&p, c);
            let h = freqs.as_ref().map(|f| entropy_model(&p, f).h_density).unwrap_or(f64::NAN);
            Ok((p, freqs, h))
        })
        .collect::<Result<_, BenchError>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials_per_cell).map(move |t| (c, t)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| BenchError::Pool(e.to_string()))?;
    let results: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, t)| run_trial(cfg, &prepared[c].0, &prepared[c].1, &cells[c], t))
            .collect()
    });
    let mut it = results.into_iter();
    let records = cells
        .iter()
        .enumerate()
        .map(|(i, &cell)| {
            let trials: Vec<TrialRecord> = it.by_ref().take(cfg.trials_per_cell).collect();
            aggregate(cfg, i, cell, prepared[i].2, trials)
        })
        .collect();
    Ok(BenchRun {
        records,
        elapsed_s: start.elapsed().as_secs_f64(),
        threads: pool.current_num_threads(),
    })
}

/// Desk-scale coupling sweep: `Q̃_i ∈ [10², 10⁷]` over 25 log-spaced values,
/// `Q̃_c = 10⁴`, `f_r = 5 GHz`, `σ_n = 10⁻³`, `N = 20001`, `ΔF = 10Δf_r`,
/// 50 trials per cell.
pub fn fig2_desk() -> BenchConfig {
    BenchConfig {
        name: "fig2_desk".to_string(),
        f_r_hz: 5e9,
        q_c_mag: 1e4,
        phi_rad: 0.0,
        q_i: Axis::Log(LogRangeAxis {
            log_range: LogRange {
                start: 1e2,
                stop: 1e7,
                count: 25,
            },
        }),
        background: Background::IDENTITY,
        sigma_n: Axis::single(1e-3),
        sigma_n_im_ratio: 1.0,
        sigma_fr_hz: Axis::single(0.0),
        fr_spectrum: FrSpectrum::White,
        n_points: vec![20001],
        span_ratio: Axis::single(10.0),
        grids: vec![BenchGrid::Spd],
        trials_per_cell: 50,
        master_seed: 20240601,
        fit: FitOptions::default(),
        slope_window: default_window(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BenchConfig {
        BenchConfig {
            name: "tiny".into(),
            q_i: Axis::Values(vec![1e4, 1e5]),
            n_points: vec![201],
            trials_per_cell: 4,
            grids: vec![BenchGrid::Spd, BenchGrid::Hpd],
            ..fig2_desk()
        }
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(1e2, 1e7, 25);
        assert_eq!(v.len(), 25);
        assert_eq!(v[0], 1e2);
        assert_eq!(v[24], 1e7);
        assert!((v[12] - 10f64.powf(4.5)).abs() / v[12] < 1e-12);
    }

    #[test]
    fn config_json_is_strict() {
        let cfg = fig2_desk();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: BenchConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<BenchConfig>(v).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("f_r_hz");
        let err = serde_json::from_value::<BenchConfig>(v).unwrap_err().to_string();
        assert!(err.contains("f_r_hz"), "{err}");
    }

    #[test]
    fn validation() {
        let mut c = tiny();
        c.trials_per_cell = 0;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.q_i = Axis::Values(vec![]);
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.n_points = vec![4];
        assert!(c.validate().is_err());
        assert_eq!(tiny().cell_count(), 4);
        assert_eq!(fig2_desk().cell_count(), 25);
    }

    #[test]
    fn spd_and_hpd_share_seeds() {
        let c = tiny();
        let cells = c.cells();
        assert_eq!(cells[0].grid, BenchGrid::Spd);
        assert_eq!(cells[1].grid, BenchGrid::Hpd);
        assert_eq!(c.trial_seed(&cells[0], 3), c.trial_seed(&cells[1], 3));
        assert_ne!(c.trial_seed(&cells[0], 3), c.trial_seed(&cells[0], 2));
        assert_ne!(c.trial_seed(&cells[0], 3), c.trial_seed(&cells[2], 3));
    }

    #[test]
    fn run_is_independent_of_worker_count() {
        let c = tiny();
        let a = run(&c, Some(1)).unwrap();
        let b = run(&c, Some(3)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.n_failed(), 0);
        let r = &a.records[0];
        assert_eq!(r.n_trials, 4);
        assert!(r.rel_err_ci.0 <= r.median_rel_err && r.median_rel_err <= r.rel_err_ci.1);
    }

    #[test]
    fn noiseless_cells_are_exact() {
        let mut c = tiny();
        c.sigma_n = Axis::single(0.0);
        c.trials_per_cell = 1;
        c.q_i = Axis::Values(vec![1e1, 1e4, 1e7]);
        let run = run(&c, None).unwrap();
        for r in &run.records {
            assert_eq!(r.n_failed, 0, "{:?}", r.trials[0].error);
            assert!(r.median_rel_err < 1e-6, "{} {}", r.cell.q_i, r.median_rel_err);
        }
    }

    #[test]
    fn failed_trials_are_recorded() {
        let mut c = tiny();
        // Span so wide that the full-circle grid would need negative frequencies
        // is fine for SPD; force an invalid grid instead.
        c.span_ratio = Axis::single(1e9);
        c.grids = vec![BenchGrid::Spd];
        c.q_i = Axis::Values(vec![1e4]);
        let run = run(&c, Some(1)).unwrap();
        assert_eq!(run.records[0].n_failed, 4);
        assert!(run.records[0].median_rel_err.is_nan());
        assert!(run.converged_fraction() < 0.99);
    }
}
