mod bench;
mod config;
mod error;

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use resfit_core::fit::{DelayMode, DofMode};
use resfit_core::info::{entropy_model, entropy_set, EntropyReport};
use resfit_core::io::{read_plan, read_sweep, write_plan, write_sweep_csv_to};
use resfit_core::model::{chip_power_watts, photon_number_from_parts};
use resfit_core::synth::{inject_noise, plan_hpd_from_scan};
use resfit_core::{fit_full, FitOptions, FitResult, NoiseSpec, Sweep};
use serde_json::json;

use crate::config::{load_json, ResonatorGrid, SimulateConfig, Truth};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "resfit", version, about = "Notch resonator circle fits, homophasal planning and fit-error benchmarks")]
pub struct Cli {
    /// Seed override for anything random.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Validate and report what would be done without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic sweep and its truth sidecar from a JSON config.
    Simulate {
        config: PathBuf,
        /// Output file stem.
        #[arg(long, default_value = "sweep")]
        name: String,
        /// Sample at the frequencies of a plan file instead of the configured grid.
        #[arg(long)]
        freqs: Option<PathBuf>,
    },
    /// Fit a sweep (CSV or .s2p) and write the result as JSON.
    Fit {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = DelayArg::Refined)]
        delay: DelayArg,
        #[arg(long, value_enum, default_value_t = DofArg::NMinus4)]
        dof: DofArg,
    },
    /// Plan a homophasal frequency list from a coarse sweep.
    HpdPlan {
        input: PathBuf,
        #[arg(long)]
        n_points: usize,
        /// Limit the plan to the arc covered by this linear span.
        #[arg(long)]
        span_hz: Option<f64>,
    },
    /// Run a Monte Carlo benchmark from a bundled preset or a JSON config.
    Bench(bench::BenchArgs),
    /// Mean resonator photon number for a fitted resonance.
    Photons {
        /// Fit result JSON written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        p_vna_dbm: f64,
        /// Line attenuation in dB (negative for loss).
        #[arg(long, allow_hyphen_values = true)]
        attenuation_db: f64,
    },
    /// Shannon entropy of a calibrated sweep or of model parameters.
    Entropy {
        /// Background-calibrated sweep (CSV or .s2p).
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        sweep: Option<PathBuf>,
        /// Resonator and grid JSON; entropy of the noiseless model.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fit the sweep first and divide out its background.
        #[arg(long, requires = "sweep")]
        calibrate: bool,
        /// Output file stem.
        #[arg(long, default_value = "entropy")]
        name: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DelayArg {
    Refined,
    LinearOnly,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DofArg {
    NMinus4,
    NMinus6,
}

pub struct Ctx {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub format: Format,
    pub dry_run: bool,
}

impl Ctx {
    pub fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    pub fn write(&self, file: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))?;
        let path = self.path(file);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(&self, file: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(file, text.as_bytes())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
        format: cli.format,
        dry_run: cli.dry_run,
    };
    let result = match cli.command {
        Command::Simulate { config, name, freqs } => simulate(&ctx, &config, &name, freqs.as_deref()),
        Command::Fit { input, delay, dof } => fit(&ctx, &input, delay, dof),
        Command::HpdPlan { input, n_points, span_hz } => hpd_plan(&ctx, &input, n_points, span_hz),
        Command::Bench(args) => bench::bench(&ctx, &args),
        Command::Photons {
            fit,
            p_vna_dbm,
            attenuation_db,
        } => photons(&ctx, &fit, p_vna_dbm, attenuation_db),
        Command::Entropy {
            sweep,
            config,
            calibrate,
            name,
        } => entropy(&ctx, sweep.as_deref(), config.as_deref(), calibrate, &name),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep").to_string()
}

fn sweep_bytes(sweep: &Sweep, format: Format) -> Vec<u8> {
    match format {
        Format::Csv => {
            let mut out = Vec::new();
            write_sweep_csv_to(sweep, &mut out).expect("in-memory write");
            out
        }
        Format::Json => {
            let rows: Vec<_> = sweep
                .samples()
                .iter()
                .map(|s| json!({"f_hz": s.f, "s21_re": s.s21.re, "s21_im": s.s21.im}))
                .collect();
            let mut text = serde_json::to_string_pretty(&rows).expect("serializable");
            text.push('\n');
            text.into_bytes()
        }
    }
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn simulate(ctx: &Ctx, config: &Path, name: &str, plan: Option<&Path>) -> Result<(), CliError> {
    let cfg: SimulateConfig = load_json(config)?;
    let grid = cfg.resonator();
    let params = grid.params()?;
    let freqs = match plan {
        Some(path) => read_plan(path)?,
        None => grid.freqs(&params)?,
    };
    let seed = ctx.seed.or(cfg.seed).unwrap_or(0);
    let noise = NoiseSpec {
        sigma_n_re: cfg.sigma_n_re,
        sigma_n_im: cfg.sigma_n_im,
        sigma_fr: cfg.sigma_fr_hz,
        fr_spectrum: cfg.fr_spectrum,
        seed,
    };
    noise.validate()?;
    let kind = if plan.is_some() { resfit_core::GridKind::Hpd } else { grid.kind() };
    let sweep = inject_noise(&params, &cfg.background, &freqs, &noise, kind)?;
    let data = format!("{name}.{}", ext(ctx.format));
    let truth_file = format!("{name}.truth.json");
    if ctx.dry_run {
        println!("would write {} points to {} and {}", sweep.len(), ctx.path(&data).display(), ctx.path(&truth_file).display());
        return Ok(());
    }
    let truth = Truth {
        config: cfg.clone(),
        seed,
        q_l: params.q_l(),
        linewidth_hz: params.linewidth(),
        diameter: params.diameter(),
    };
    let p = ctx.write(&data, &sweep_bytes(&sweep, ctx.format))?;
    ctx.write_json(&truth_file, &truth)?;
    println!("wrote {} points to {}", sweep.len(), p.display());
    Ok(())
}

fn fit(ctx: &Ctx, input: &Path, delay: DelayArg, dof: DofArg) -> Result<(), CliError> {
    let sweep = read_sweep(input)?;
    let options = FitOptions {
        delay: match delay {
            DelayArg::Refined => DelayMode::Refined,
            DelayArg::LinearOnly => DelayMode::LinearOnly,
        },
        dof: match dof {
            DofArg::NMinus4 => DofMode::NMinus4,
            DofArg::NMinus6 => DofMode::NMinus6,
        },
    };
    let result = fit_full(&sweep, &options)?;
    let file = format!("{}.fit.json", stem(input));
    if ctx.dry_run {
        println!("fit converged: q_i = {:.6e}; would write {}", result.q_i, ctx.path(&file).display());
        return Ok(());
    }
    let p = ctx.write_json(&file, &result)?;
    println!(
        "q_i = {:.6e} +- {:.3e}, |q_c| = {:.6e}, f_r = {:.9e} Hz -> {}",
        result.q_i,
        result.sigma.sigma_q_i,
        result.q_c_mag,
        result.f_r,
        p.display()
    );
    for w in &result.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn hpd_plan(ctx: &Ctx, input: &Path, n_points: usize, span_hz: Option<f64>) -> Result<(), CliError> {
    if n_points < 5 {
        return Err(CliError::Validation(format!("n_points must be at least 5, got {n_points}")));
    }
    let coarse = read_sweep(input)?;
    let plan = plan_hpd_from_scan(&coarse, n_points, span_hz)?;
    let base = stem(input);
    let (txt, echo) = (format!("{base}.plan.txt"), format!("{base}.plan.json"));
    if ctx.dry_run {
        println!("planned {} points; would write {} and {}", plan.freqs.len(), ctx.path(&txt).display(), ctx.path(&echo).display());
        return Ok(());
    }
    fs::create_dir_all(&ctx.out_dir).map_err(|e| CliError::io(&ctx.out_dir, e))?;
    write_plan(&plan.freqs, &ctx.path(&txt))?;
    ctx.write_json(
        &echo,
        &json!({
            "theta0_rad": plan.theta_0,
            "q_l": plan.q_l,
            "f_r_hz": plan.f_r,
            "n_points": plan.freqs.len(),
            "span_hz": span_hz,
            "warnings": plan.warnings,
        }),
    )?;
    println!(
        "planned {} points around f_r = {:.9e} Hz (q_l = {:.4e}) -> {}",
        plan.freqs.len(),
        plan.f_r,
        plan.q_l,
        ctx.path(&txt).display()
    );
    for w in &plan.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn photons(ctx: &Ctx, fit: &Path, p_vna_dbm: f64, attenuation_db: f64) -> Result<(), CliError> {
    let r: FitResult = load_json(fit)?;
    if r.phi.abs() > FRAC_PI_2 + 1e-12 {
        return Err(CliError::Validation(format!("phi_rad = {} lies outside [-pi/2, pi/2]", r.phi)));
    }
    let p_chip = chip_power_watts(p_vna_dbm, attenuation_db);
    let n = photon_number_from_parts(r.f_r, r.q_l, r.q_c_mag, r.phi, p_chip)?;
    let mut warnings = Vec::new();
    if n == 0.0 {
        warnings.push("phi = +-pi/2: the coupling is purely reactive and the photon number vanishes".to_string());
    }
    let out = json!({
        "photon_number": n,
        "p_vna_dbm": p_vna_dbm,
        "attenuation_db": attenuation_db,
        "p_chip_w": p_chip,
        "f_r_hz": r.f_r,
        "q_l": r.q_l,
        "q_c_mag": r.q_c_mag,
        "phi_rad": r.phi,
        "warnings": warnings,
    });
    println!("<n_r> = {n:.6e} at P_chip = {p_chip:.6e} W ({p_vna_dbm} dBm {attenuation_db:+} dB)");
    for w in &warnings {
        println!("warning: {w}");
    }
    if !ctx.dry_run {
        ctx.write_json(&format!("{}.photons.json", stem(fit).trim_end_matches(".fit")), &out)?;
    }
    Ok(())
}

fn entropy(ctx: &Ctx, sweep: Option<&Path>, config: Option<&Path>, calibrate: bool, name: &str) -> Result<(), CliError> {
    let report: EntropyReport = match (sweep, config) {
        (Some(path), _) => {
            let mut sw = read_sweep(path)?;
            if calibrate {
                let bg = fit_full(&sw, &FitOptions::default())?.background();
                sw = sw.map_values(|f, s| s / bg.factor(f));
            }
            entropy_set(&sw)
        }
        (None, Some(path)) => {
            let g: ResonatorGrid = load_json(path)?;
            let p = g.params()?;
            entropy_model(&p, &g.freqs(&p)?)
        }
        (None, None) => return Err(CliError::Validation("either --sweep or --config is required".into())),
    };
    let summary = report.summary();
    if sweep.is_some() && !calibrate && 2 * summary.clamp_count > summary.n_points {
        eprintln!(
            "warning: {} of {} points clamped; is the sweep background-calibrated? (see --calibrate)",
            summary.clamp_count, summary.n_points
        );
    }
    let table = format!("{name}.{}", ext(ctx.format));
    if ctx.dry_run {
        println!("H_set = {:.6} bits over {} points; would write {}", summary.h_set_bits, summary.n_points, ctx.path(&table).display());
        return Ok(());
    }
    let bytes = match ctx.format {
        Format::Csv => {
            let mut out = Vec::new();
            report.write_csv(&mut out).expect("in-memory write");
            out
        }
        Format::Json => {
            let mut t = serde_json::to_string_pretty(&report.per_point).expect("serializable");
            t.push('\n');
            t.into_bytes()
        }
    };
    ctx.write(&table, &bytes)?;
    ctx.write_json(&format!("{name}.summary.json"), &summary)?;
    println!(
        "H_set = {:.6} bits, H_set/N = {:.6}, clamped points {}",
        summary.h_set_bits, summary.h_density, summary.clamp_count
    );
    Ok(())
}
