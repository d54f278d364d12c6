//! Benchmark studies built on [`run`](super::run): coupling sweeps, span
//! studies, the SPD/HPD error-ratio map, noise scaling collapse and the
//! entropy table.

use super::stats::{bootstrap_ci, loglog_regression, linear_regression, median, Regression};
use super::{run, BenchConfig, BenchError, BenchGrid, BenchRecord, BenchRun};
use crate::rng::{derive_seed, stream};
use serde::{Deserialize, Serialize};

/// Groups records by `key`, keeping first-appearance order of groups and the
/// original order inside each group.
fn group_by<K: PartialEq + Clone>(records: &[BenchRecord], key: impl Fn(&BenchRecord) -> K) -> Vec<(K, Vec<&BenchRecord>)> {
    let mut out: Vec<(K, Vec<&BenchRecord>)> = Vec::new();
    for r in records {
        let k = key(r);
        match out.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r),
            None => out.push((k, vec![r])),
        }
    }
    out
}

fn finite_pairs(x: &[f64], y: &[f64], keep: impl Fn(f64) -> bool) -> (Vec<f64>, Vec<f64>) {
    x.iter()
        .zip(y)
        .filter(|(a, b)| keep(**a) && a.is_finite() && b.is_finite() && **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (*a, *b))
        .unzip()
}

fn window_loglog(x: &[f64], y: &[f64], lo: f64, hi: f64) -> Option<Regression> {
    let eps = 1e-9;
    let (xs, ys) = finite_pairs(x, y, |v| v >= lo * (1.0 - eps) && v <= hi * (1.0 + eps));
    (xs.len() >= 2).then(|| loglog_regression(&xs, &ys))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingCurve {
    pub sigma_n: f64,
    pub sigma_fr_hz: f64,
    pub n_points: usize,
    pub span_ratio: f64,
    pub grid: BenchGrid,
    pub ratios: Vec<f64>,
    pub median_rel_sigma: Vec<f64>,
    pub median_rel_err: Vec<f64>,
    /// `Q̃_i/Q̃_c` at the smallest median `σ_Qi/Q_i`.
    pub argmin_ratio: f64,
    /// Log-log slope of `σ_Qi/Q_i` against the ratio for ratios in `[10, 10³]`.
    pub overcoupled_slope: Option<Regression>,
    /// Pooled fraction of converged trials with the truth inside ±2σ.
    pub coverage_2sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    /// Records sorted by `Q̃_i/Q̃_c`.
    pub records: Vec<BenchRecord>,
    pub curves: Vec<CouplingCurve>,
    pub run: BenchRun,
}

fn pooled_coverage(rs: &[&BenchRecord]) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for r in rs {
        for t in r.converged() {
            n += 1;
            hit += ((t.q_i - r.cell.q_i).abs() <= 2.0 * t.sigma_q_i) as usize;
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        hit as f64 / n as f64
    }
}

/// Error against coupling ratio at fixed span.
pub fn sweep_coupling(cfg: &BenchConfig, threads: Option<usize>) -> Result<CouplingReport, BenchError> {
    let run = run(cfg, threads)?;
    let mut records = run.records.clone();
    records.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
    let curves = group_by(&records, |r| {
        (r.cell.sigma_n, r.cell.sigma_fr_hz, r.cell.n_points, r.cell.span_ratio, r.cell.grid)
    })
    .into_iter()
    .map(|((sigma_n, sigma_fr_hz, n_points, span_ratio, grid), rs)| {
        let ratios: Vec<f64> = rs.iter().map(|r| r.ratio).collect();
        let sig: Vec<f64> = rs.iter().map(|r| r.median_rel_sigma).collect();
        let err: Vec<f64> = rs.iter().map(|r| r.median_rel_err).collect();
        let argmin_ratio = (0..sig.len())
            .filter(|&i| sig[i].is_finite())
            .min_by(|&a, &b| sig[a].total_cmp(&sig[b]))
            .map_or(f64::NAN, |i| ratios[i]);
        CouplingCurve {
            sigma_n,
            sigma_fr_hz,
            n_points,
            span_ratio,
            grid,
            overcoupled_slope: window_loglog(&ratios, &sig, 10.0, 1e3),
            argmin_ratio,
            coverage_2sigma: pooled_coverage(&rs),
            ratios,
            median_rel_sigma: sig,
            median_rel_err: err,
        }
    })
    .collect();
    Ok(CouplingReport { records, curves, run })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanCurve {
    pub q_i: f64,
    pub sigma_n: f64,
    pub sigma_fr_hz: f64,
    pub n_points: usize,
    pub grid: BenchGrid,
    pub spans: Vec<f64>,
    pub median_rel_sigma: Vec<f64>,
    pub median_rel_err: Vec<f64>,
    /// Log-log slope of `σ_Qi/Q_i` against span over the config's slope window.
    pub slope: Option<Regression>,
    /// Pooled per-trial regression of `(Q_i − Q̃_i)/Q̃_i` on `log10(span)`.
    pub bias: Option<Regression>,
}

impl SpanCurve {
    /// Median `σ_Qi/Q_i` at the span closest to `span`.
    pub fn rel_sigma_at(&self, span: f64) -> f64 {
        (0..self.spans.len())
            .min_by(|&a, &b| (self.spans[a] / span).ln().abs().total_cmp(&(self.spans[b] / span).ln().abs()))
            .map_or(f64::NAN, |i| self.median_rel_sigma[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanReport {
    pub curves: Vec<SpanCurve>,
    pub run: BenchRun,
}

impl SpanReport {
    pub fn curve(&self, grid: BenchGrid) -> Option<&SpanCurve> {
        self.curves.iter().find(|c| c.grid == grid)
    }
}

fn needs_paired_grids(cfg: &BenchConfig) -> Result<(), BenchError> {
    let has_hpd = cfg.grids.iter().any(|g| *g != BenchGrid::Spd);
    if !cfg.grids.contains(&BenchGrid::Spd) || !has_hpd {
        return Err(BenchError::InvalidConfig(
            "grids must contain spd and at least one of hpd, hpd_full".into(),
        ));
    }
    Ok(())
}

/// Error and bias against measurement span, SPD and HPD on paired noise.
pub fn sweep_span(cfg: &BenchConfig, threads: Option<usize>) -> Result<SpanReport, BenchError> {
    needs_paired_grids(cfg)?;
    let run = run(cfg, threads)?;
    let [lo, hi] = cfg.slope_window;
    let curves = group_by(&run.records, |r| {
        (r.cell.q_i, r.cell.sigma_n, r.cell.sigma_fr_hz, r.cell.n_points, r.cell.grid)
    })
    .into_iter()
    .map(|((q_i, sigma_n, sigma_fr_hz, n_points, grid), mut rs)| {
        rs.sort_by(|a, b| a.cell.span_ratio.total_cmp(&b.cell.span_ratio));
        let spans: Vec<f64> = rs.iter().map(|r| r.cell.span_ratio).collect();
        let sig: Vec<f64> = rs.iter().map(|r| r.median_rel_sigma).collect();
        let (mut bx, mut by) = (Vec::new(), Vec::new());
        for r in &rs {
            for t in r.converged() {
                bx.push(r.cell.span_ratio.log10());
                by.push((t.q_i - q_i) / q_i);
            }
        }
        let distinct_spans = spans.len() >= 2;
        SpanCurve {
            q_i,
            sigma_n,
            sigma_fr_hz,
            n_points,
            grid,
            slope: window_loglog(&spans, &sig, lo, hi),
            bias: (distinct_spans && bx.len() > 2).then(|| linear_regression(&bx, &by)),
            median_rel_err: rs.iter().map(|r| r.median_rel_err).collect(),
            median_rel_sigma: sig,
            spans,
        }
    })
    .collect();
    Ok(SpanReport { curves, run })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCell {
    pub span_ratio: f64,
    pub sigma_fr_hz: f64,
    pub q_i: f64,
    pub sigma_n: f64,
    pub n_points: usize,
    pub hpd_grid: BenchGrid,
    /// Median SPD `σ_Qi` over median HPD `σ_Qi`; `None` when HPD trials failed.
    pub ratio: Option<f64>,
    pub ratio_ci: Option<(f64, f64)>,
    pub n_spd: usize,
    pub n_hpd: usize,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioMap {
    pub cells: Vec<RatioCell>,
    pub run: BenchRun,
}

impl RatioMap {
    pub fn spans(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !v.contains(&c.span_ratio) {
                v.push(c.span_ratio);
            }
        }
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn sigma_frs(&self) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !v.contains(&c.sigma_fr_hz) {
                v.push(c.sigma_fr_hz);
            }
        }
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn cell(&self, span_ratio: f64, sigma_fr_hz: f64) -> Option<&RatioCell> {
        self.cells
            .iter()
            .find(|c| c.span_ratio == span_ratio && c.sigma_fr_hz == sigma_fr_hz)
    }
}

/// `σ_Qi^SPD / σ_Qi^HPD` over span and frequency jitter. The HPD side uses the
/// span-limited grid when configured, the full-circle grid otherwise. CIs
/// come from a paired bootstrap over trials where both fits converged.
pub fn error_ratio_map(cfg: &BenchConfig, threads: Option<usize>) -> Result<RatioMap, BenchError> {
    needs_paired_grids(cfg)?;
    let hpd_grid = if cfg.grids.contains(&BenchGrid::Hpd) {
        BenchGrid::Hpd
    } else {
        BenchGrid::HpdFull
    };
    let run = run(cfg, threads)?;
    let key = |r: &BenchRecord| {
        (r.cell.q_i, r.cell.sigma_n, r.cell.sigma_fr_hz, r.cell.n_points, r.cell.span_ratio)
    };
    let mut cells = Vec::new();
    for (idx, (k, rs)) in group_by(&run.records, key).into_iter().enumerate() {
        let spd = rs.iter().find(|r| r.cell.grid == BenchGrid::Spd).expect("spd configured");
        let hpd = rs.iter().find(|r| r.cell.grid == hpd_grid).expect("hpd configured");
        let pairs: Vec<(f64, f64)> = spd
            .trials
            .iter()
            .zip(&hpd.trials)
            .filter(|(a, b)| a.converged && b.converged)
            .map(|(a, b)| (a.sigma_q_i, b.sigma_q_i))
            .collect();
        let n_hpd = hpd.n_trials - hpd.n_failed;
        let (ratio, ratio_ci) = if hpd.n_failed > 0 || pairs.is_empty() {
            (None, None)
        } else {
            let ratio_of = |idx: &[usize]| {
                let a: Vec<f64> = idx.iter().map(|&i| pairs[i].0).collect();
                let b: Vec<f64> = idx.iter().map(|&i| pairs[i].1).collect();
                median(&a) / median(&b)
            };
            let all: Vec<usize> = (0..pairs.len()).collect();
            let mut rng = stream(derive_seed(cfg.master_seed, &[0x2A71, idx as u64]), 2);
            (Some(ratio_of(&all)), Some(bootstrap_ci(pairs.len(), &mut rng, ratio_of)))
        };
        cells.push(RatioCell {
            q_i: k.0,
            sigma_n: k.1,
            sigma_fr_hz: k.2,
            n_points: k.3,
            span_ratio: k.4,
            hpd_grid,
            ratio,
            ratio_ci,
            n_spd: spd.n_trials - spd.n_failed,
            n_hpd,
            n_pairs: pairs.len(),
        });
    }
    Ok(RatioMap { cells, run })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseCurve {
    pub sigma_n: f64,
    pub n_points: usize,
    pub ratios: Vec<f64>,
    /// `(σ_Qi/Q_i)·√N/σ_n` per ratio.
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseReport {
    pub curves: Vec<CollapseCurve>,
    /// Largest `(max − min)/min` across curves at a common ratio.
    pub max_deviation: f64,
    pub run: BenchRun,
}

/// Normalized error curves per `(σ_n, N)` pair and their spread.
pub fn scaling_collapse(cfg: &BenchConfig, threads: Option<usize>) -> Result<CollapseReport, BenchError> {
    let run = run(cfg, threads)?;
    let curves: Vec<CollapseCurve> = group_by(&run.records, |r| (r.cell.sigma_n, r.cell.n_points))
        .into_iter()
        .map(|((sigma_n, n_points), mut rs)| {
            rs.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
            let scale = (n_points as f64).sqrt() / sigma_n;
            CollapseCurve {
                sigma_n,
                n_points,
                ratios: rs.iter().map(|r| r.ratio).collect(),
                normalized: rs.iter().map(|r| r.median_rel_sigma * scale).collect(),
            }
        })
        .collect();
    let mut max_deviation = 0.0f64;
    if let Some(first) = curves.first() {
        for x in &first.ratios {
            let vals: Vec<f64> = curves
                .iter()
                .filter_map(|c| c.ratios.iter().position(|r| r == x).map(|j| c.normalized[j]))
                .collect();
            if vals.iter().any(|v| !v.is_finite()) {
                max_deviation = f64::NAN;
                break;
            }
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if vals.len() > 1 {
                max_deviation = max_deviation.max((hi - lo) / lo);
            }
        }
    }
    Ok(CollapseReport {
        curves,
        max_deviation,
        run,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub span_ratio: f64,
    pub h_density_spd: f64,
    pub h_density_hpd: f64,
    pub rel_sigma_spd: f64,
    pub rel_sigma_hpd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTable {
    pub rows: Vec<EntropyRow>,
    /// Span with the largest SPD entropy density.
    pub spd_peak_span: f64,
    /// SPD regression of `log σ_Qi/Q_i` on `log H_set/N` over the slope window.
    pub regression: Option<Regression>,
    pub run: BenchRun,
}

/// Noiseless entropy density and noisy fit error against span.
pub fn entropy_vs_span(cfg: &BenchConfig, threads: Option<usize>) -> Result<EntropyTable, BenchError> {
    needs_paired_grids(cfg)?;
    let hpd_grid = if cfg.grids.contains(&BenchGrid::Hpd) {
        BenchGrid::Hpd
    } else {
        BenchGrid::HpdFull
    };
    let run = run(cfg, threads)?;
    let mut rows: Vec<EntropyRow> = group_by(&run.records, |r| r.cell.span_ratio)
        .into_iter()
        .map(|(span_ratio, rs)| {
            let pick = |g: BenchGrid| -> Vec<&&BenchRecord> { rs.iter().filter(|r| r.cell.grid == g).collect() };
            let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
            let spd = pick(BenchGrid::Spd);
            let hpd = pick(hpd_grid);
            EntropyRow {
                span_ratio,
                h_density_spd: mean(spd.iter().map(|r| r.h_density).collect()),
                h_density_hpd: mean(hpd.iter().map(|r| r.h_density).collect()),
                rel_sigma_spd: median(&spd.iter().map(|r| r.median_rel_sigma).collect::<Vec<_>>()),
                rel_sigma_hpd: median(&hpd.iter().map(|r| r.median_rel_sigma).collect::<Vec<_>>()),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.span_ratio.total_cmp(&b.span_ratio));
    let spd_peak_span = rows
        .iter()
        .max_by(|a, b| a.h_density_spd.total_cmp(&b.h_density_spd))
        .map_or(f64::NAN, |r| r.span_ratio);
    let [lo, hi] = cfg.slope_window;
    let (h, s): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.span_ratio >= lo * (1.0 - 1e-9) && r.span_ratio <= hi * (1.0 + 1e-9))
        .map(|r| (r.h_density_spd, r.rel_sigma_spd))
        .unzip();
    let (h, s) = finite_pairs(&h, &s, |_| true);
    Ok(EntropyTable {
        regression: (h.len() >= 2).then(|| loglog_regression(&h, &s)),
        rows,
        spd_peak_span,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{fig2_desk, Axis};
    use super::*;

    fn small() -> BenchConfig {
        BenchConfig {
            name: "small".into(),
            q_i: Axis::Values(vec![1e3, 1e4, 1e5]),
            n_points: vec![201],
            trials_per_cell: 6,
            ..fig2_desk()
        }
    }

    #[test]
    fn coupling_sorted_and_grouped() {
        let mut c = small();
        c.q_i = Axis::Values(vec![1e5, 1e3, 1e4]);
        let rep = sweep_coupling(&c, None).unwrap();
        let ratios: Vec<f64> = rep.records.iter().map(|r| r.ratio).collect();
        assert_eq!(ratios, vec![0.1, 1.0, 10.0]);
        assert_eq!(rep.curves.len(), 1);
        assert!(rep.curves[0].argmin_ratio.is_finite());
        assert!(rep.curves[0].overcoupled_slope.is_none());
    }

    #[test]
    fn single_curve_collapses_exactly() {
        let rep = scaling_collapse(&small(), None).unwrap();
        assert_eq!(rep.curves.len(), 1);
        assert_eq!(rep.max_deviation, 0.0);
    }

    #[test]
    fn collapse_deviation_is_relative_spread() {
        let mut c = small();
        c.sigma_n = Axis::Values(vec![1e-3, 2e-3]);
        let rep = scaling_collapse(&c, None).unwrap();
        assert_eq!(rep.curves.len(), 2);
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            let a = rep.curves[0].normalized[i];
            let b = rep.curves[1].normalized[i];
            worst = worst.max((a - b).abs() / a.min(b));
        }
        assert!((rep.max_deviation - worst).abs() < 1e-15);
    }

    #[test]
    fn span_and_ratio_need_both_grids() {
        let c = small();
        assert!(sweep_span(&c, None).is_err());
        assert!(error_ratio_map(&c, None).is_err());
    }

    #[test]
    fn ratio_map_cells_and_ci() {
        let mut c = small();
        c.q_i = Axis::single(5e4);
        c.span_ratio = Axis::Values(vec![1.0, 30.0]);
        c.grids = vec![BenchGrid::Spd, BenchGrid::Hpd];
        c.trials_per_cell = 12;
        let map = error_ratio_map(&c, None).unwrap();
        assert_eq!(map.cells.len(), 2);
        assert_eq!(map.spans(), vec![1.0, 30.0]);
        for cell in &map.cells {
            let r = cell.ratio.unwrap();
            let (lo, hi) = cell.ratio_ci.unwrap();
            assert!(lo <= r && r <= hi);
            assert_eq!(cell.n_pairs, 12);
        }
        assert!(map.cell(30.0, 0.0).unwrap().ratio.unwrap() > map.cell(1.0, 0.0).unwrap().ratio.unwrap());
    }

    #[test]
    fn entropy_table_peak() {
        let mut c = small();
        c.q_i = Axis::single(5e4);
        c.sigma_n = Axis::single(1e-3);
        c.span_ratio = Axis::Values(vec![0.5, 1.5, 5.0, 20.0]);
        c.grids = vec![BenchGrid::Spd, BenchGrid::Hpd];
        c.trials_per_cell = 3;
        let t = entropy_vs_span(&c, None).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.spd_peak_span, 1.5);
        assert!(t.regression.is_some());
    }
}
