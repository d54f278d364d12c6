use std::path::PathBuf;

use clap::{Args, ValueEnum};
use resfit_core::bench::{
    entropy_vs_span, error_ratio_map, run, scaling_collapse, svg_heatmap, svg_line_plot, sweep_coupling,
    sweep_span, write_records_csv, write_trials_csv, Axis, BenchConfig, BenchRun, Manifest, PlotSeries,
};
use serde_json::{json, Value};

use crate::config::{load_json, parse_json};
use crate::error::CliError;
use crate::{Ctx, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    /// Per-cell records only.
    Raw,
    /// Error against coupling ratio.
    Coupling,
    /// Error against span for SPD and HPD grids.
    Span,
    /// SPD/HPD error ratio over span and frequency noise.
    RatioMap,
    /// Noise- and length-normalized error curves.
    Collapse,
    /// Information density against span.
    Entropy,
}

impl Analysis {
    fn as_str(self) -> &'static str {
        match self {
            Analysis::Raw => "raw",
            Analysis::Coupling => "coupling",
            Analysis::Span => "span",
            Analysis::RatioMap => "ratio_map",
            Analysis::Collapse => "collapse",
            Analysis::Entropy => "entropy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig2Desk,
    SpanStudy,
    RatioMap,
    Collapse,
    Entropy,
}

impl Preset {
    fn load(self) -> Result<(BenchConfig, Analysis), CliError> {
        let (text, analysis) = match self {
            Preset::Fig2Desk => (include_str!("../configs/fig2_desk.json"), Analysis::Coupling),
            Preset::SpanStudy => (include_str!("../configs/span_study.json"), Analysis::Span),
            Preset::RatioMap => (include_str!("../configs/ratio_map.json"), Analysis::RatioMap),
            Preset::Collapse => (include_str!("../configs/collapse.json"), Analysis::Collapse),
            Preset::Entropy => (include_str!("../configs/entropy.json"), Analysis::Entropy),
        };
        Ok((parse_json(text, "bundled preset")?, analysis))
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Bundled configuration.
    #[arg(long, value_enum, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<Preset>,
    /// JSON benchmark configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Post-processing; defaults to the preset's own, or `raw` for config files.
    #[arg(long, value_enum)]
    analysis: Option<Analysis>,
    /// Override trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (capped by RESFIT_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

/// Worker count from the flag and the RESFIT_THREADS cap.
fn threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let cap = match std::env::var("RESFIT_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(|| {
            CliError::Validation(format!("RESFIT_THREADS must be a positive integer, got {v:?}"))
        })?),
        Err(_) => None,
    };
    Ok(match (flag, cap) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    })
}

/// Seconds per fitted point, measured on one trial of the longest grid.
fn probe_cost(cfg: &BenchConfig) -> Option<f64> {
    let n = *cfg.n_points.iter().max()?;
    let probe = BenchConfig {
        name: "probe".into(),
        q_i: Axis::single(*cfg.q_i.values().first()?),
        sigma_n: Axis::single(*cfg.sigma_n.values().first()?),
        sigma_fr_hz: Axis::single(*cfg.sigma_fr_hz.values().first()?),
        n_points: vec![n],
        span_ratio: Axis::single(*cfg.span_ratio.values().first()?),
        grids: vec![cfg.grids[0]],
        trials_per_cell: 1,
        ..cfg.clone()
    };
    let r = run(&probe, Some(1)).ok()?;
    Some(r.elapsed_s / n as f64)
}

pub fn bench(ctx: &Ctx, args: &BenchArgs) -> Result<(), CliError> {
    let (mut cfg, default_analysis) = match (&args.preset, &args.config) {
        (Some(p), _) => p.load()?,
        (None, Some(path)) => (load_json::<BenchConfig>(path)?, Analysis::Raw),
        (None, None) => return Err(CliError::Validation("either --preset or --config is required".into())),
    };
    if let Some(seed) = ctx.seed {
        cfg.master_seed = seed;
    }
    if let Some(t) = args.trials {
        cfg.trials_per_cell = t;
    }
    cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let analysis = args.analysis.unwrap_or(default_analysis);
    let threads = threads(args.threads)?;

    let workers = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let cells = cfg.cells();
    let points: usize = cells.iter().map(|c| c.n_points * cfg.trials_per_cell).sum();
    let eta = probe_cost(&cfg).map(|c| c * points as f64 / workers as f64);
    println!(
        "{}: {} cells, {} trials, {} workers, analysis {}, estimated {}",
        cfg.name,
        cfg.cell_count(),
        cfg.trial_count(),
        workers,
        analysis.as_str(),
        eta.map_or("unknown".to_string(), |s| format!("{s:.0} s"))
    );
    if ctx.dry_run {
        return Ok(());
    }

    let fail = |e: resfit_core::bench::BenchError| CliError::Validation(e.to_string());
    let mut plots: Vec<(String, String)> = Vec::new();
    let (run, summary): (BenchRun, Value) = match analysis {
        Analysis::Raw => (run(&cfg, threads).map_err(fail)?, Value::Null),
        Analysis::Coupling => {
            let rep = sweep_coupling(&cfg, threads).map_err(fail)?;
            if args.plot {
                let series: Vec<PlotSeries> = rep
                    .curves
                    .iter()
                    .map(|c| PlotSeries {
                        label: format!("sn={} N={} {}", c.sigma_n, c.n_points, c.grid.as_str()),
                        x: c.ratios.clone(),
                        y: c.median_rel_sigma.clone(),
                    })
                    .collect();
                plots.push((
                    "coupling".into(),
                    svg_line_plot("Fit error vs coupling", "Q_i/Q_c", "sigma_Qi/Q_i", &series, true, true),
                ));
            }
            (rep.run, json!({ "curves": rep.curves }))
        }
        Analysis::Span => {
            let rep = sweep_span(&cfg, threads).map_err(fail)?;
            if args.plot {
                let series: Vec<PlotSeries> = rep
                    .curves
                    .iter()
                    .map(|c| PlotSeries {
                        label: format!("{} sfr={}", c.grid.as_str(), c.sigma_fr_hz),
                        x: c.spans.clone(),
                        y: c.median_rel_sigma.clone(),
                    })
                    .collect();
                plots.push((
                    "span".into(),
                    svg_line_plot("Fit error vs span", "span / linewidth", "sigma_Qi/Q_i", &series, true, true),
                ));
            }
            (rep.run, json!({ "curves": rep.curves }))
        }
        Analysis::RatioMap => {
            let map = error_ratio_map(&cfg, threads).map_err(fail)?;
            if args.plot {
                let (xs, ys) = (map.spans(), map.sigma_frs());
                let values: Vec<Vec<Option<f64>>> = ys
                    .iter()
                    .map(|&fr| xs.iter().map(|&s| map.cell(s, fr).and_then(|c| c.ratio)).collect())
                    .collect();
                plots.push((
                    "ratio_map".into(),
                    svg_heatmap("SPD/HPD error ratio", "span / linewidth", "sigma_fr (Hz)", &xs, &ys, &values),
                ));
            }
            (map.run, json!({ "cells": map.cells }))
        }
        Analysis::Collapse => {
            let rep = scaling_collapse(&cfg, threads).map_err(fail)?;
            if args.plot {
                let series: Vec<PlotSeries> = rep
                    .curves
                    .iter()
                    .map(|c| PlotSeries {
                        label: format!("sn={} N={}", c.sigma_n, c.n_points),
                        x: c.ratios.clone(),
                        y: c.normalized.clone(),
                    })
                    .collect();
                plots.push((
                    "collapse".into(),
                    svg_line_plot("Normalized fit error", "Q_i/Q_c", "(sigma_Qi/Q_i) sqrt(N)/sigma_n", &series, true, true),
                ));
            }
            (rep.run, json!({ "curves": rep.curves, "max_deviation": rep.max_deviation }))
        }
        Analysis::Entropy => {
            let t = entropy_vs_span(&cfg, threads).map_err(fail)?;
            if args.plot {
                let spans: Vec<f64> = t.rows.iter().map(|r| r.span_ratio).collect();
                let series = [
                    PlotSeries {
                        label: "SPD".into(),
                        x: spans.clone(),
                        y: t.rows.iter().map(|r| r.h_density_spd).collect(),
                    },
                    PlotSeries {
                        label: "HPD".into(),
                        x: spans,
                        y: t.rows.iter().map(|r| r.h_density_hpd).collect(),
                    },
                ];
                plots.push((
                    "entropy".into(),
                    svg_line_plot("Information density", "span / linewidth", "H_set/N (bits)", &series, true, false),
                ));
            }
            (
                t.run,
                json!({ "rows": t.rows, "spd_peak_span": t.spd_peak_span, "regression": t.regression }),
            )
        }
    };

    let name = cfg.name.clone();
    let mut files = Vec::new();
    match ctx.format {
        Format::Csv => {
            let mut records = Vec::new();
            write_records_csv(&run.records, &mut records).expect("in-memory write");
            let mut trials = Vec::new();
            write_trials_csv(&run.records, &mut trials).expect("in-memory write");
            files.push(format!("{name}.records.csv"));
            ctx.write(&files[0], &records)?;
            files.push(format!("{name}.trials.csv"));
            ctx.write(&files[1], &trials)?;
        }
        Format::Json => {
            files.push(format!("{name}.records.json"));
            ctx.write_json(&files[0], &run.records)?;
        }
    }
    for (stem, svg) in &plots {
        let file = format!("{name}.{stem}.svg");
        ctx.write(&file, svg.as_bytes())?;
        files.push(file);
    }
    let manifest_file = format!("{name}.manifest.json");
    let manifest = Manifest {
        name: name.clone(),
        analysis: analysis.as_str().to_string(),
        config: cfg.clone(),
        n_cells: run.records.len(),
        n_trials: run.n_trials(),
        n_failed: run.n_failed(),
        converged_fraction: run.converged_fraction(),
        threads: run.threads,
        elapsed_s: run.elapsed_s,
        summary,
        files: files.clone(),
    };
    ctx.write_json(&manifest_file, &manifest)?;
    println!(
        "{} of {} trials converged in {:.1} s -> {}",
        run.n_trials() - run.n_failed(),
        run.n_trials(),
        run.elapsed_s,
        ctx.path(&manifest_file).display()
    );
    if run.converged_fraction() < 0.99 {
        return Err(CliError::Degraded(format!(
            "only {:.1}% of trials converged (threshold 99%)",
            100.0 * run.converged_fraction()
        )));
    }
    Ok(())
}
