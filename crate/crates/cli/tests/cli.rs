use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn resfit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resfit"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("RESFIT_THREADS")
        .output()
        .expect("spawn resfit")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn sim_config(f_r: f64, q_i: f64, q_c: f64, phi: f64, span: f64, n: usize, sigma_n: f64) -> Value {
    json!({
        "f_r_hz": f_r, "q_i": q_i, "q_c_mag": q_c, "phi_rad": phi,
        "grid": "spd", "n_points": n, "span_hz": span,
        "background": {"a": 1.149, "alpha_rad": 1.597, "tau_s": -8.825e-11},
        "sigma_n_re": sigma_n, "sigma_n_im": sigma_n, "sigma_fr_hz": 0.0,
        "seed": 7
    })
}

fn measured_config(span_linewidths: f64, n: usize, sigma_n: f64) -> Value {
    let (f_r, q_i, q_c, phi) = (4.364e9, 5.181e6, 6.73e4, 0.668f64);
    let q_l = 1.0 / (1.0 / q_i + phi.cos() / q_c);
    sim_config(f_r, q_i, q_c, phi, span_linewidths * f_r / q_l, n, sigma_n)
}

#[test]
fn simulate_writes_sweep_and_truth() {
    let d = TempDir::new().unwrap();
    let mut cfg = sim_config(5e9, 1e4, 1e4, 0.0, 10.0 * 5e9 / 5e3, 20001, 1e-3);
    cfg["background"] = json!({"a": 1.0, "alpha_rad": 0.0, "tau_s": 0.0});
    let c = write_json(d.path(), "cell.json", &cfg);
    let o = resfit(d.path(), &["simulate", c.to_str().unwrap(), "--name", "cell"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("cell.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("f_hz,s21_re,s21_im"));
    assert_eq!(lines.count(), 20001);
    let truth = read_json(&d.path().join("cell.truth.json"));
    assert_eq!(truth["config"]["q_i"], json!(1e4));
    assert_eq!(truth["seed"], json!(7));
    assert!((truth["q_l"].as_f64().unwrap() - 5e3).abs() < 1e-9);
}

#[test]
fn noiseless_round_trip_through_files() {
    let d = TempDir::new().unwrap();
    let c = write_json(d.path(), "cfg.json", &measured_config(10.0, 2001, 0.0));
    let o = resfit(d.path(), &["simulate", c.to_str().unwrap(), "--name", "clean"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = resfit(d.path(), &["fit", d.path().join("clean.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fit = read_json(&d.path().join("clean.fit.json"));
    let truth = read_json(&d.path().join("clean.truth.json"));
    let q_i = truth["config"]["q_i"].as_f64().unwrap();
    assert!((fit["q_i"].as_f64().unwrap() - q_i).abs() / q_i < 1e-6, "{fit}");
    assert!((fit["a"].as_f64().unwrap() - 1.149).abs() < 1e-6);
}

#[test]
fn missing_key_is_a_validation_error() {
    let d = TempDir::new().unwrap();
    let mut cfg = measured_config(10.0, 101, 0.0);
    cfg.as_object_mut().unwrap().remove("f_r_hz");
    let c = write_json(d.path(), "cfg.json", &cfg);
    let o = resfit(d.path(), &["simulate", c.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("f_r_hz"), "{}", stderr(&o));
    assert!(!d.path().join("sweep.csv").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let d = TempDir::new().unwrap();
    let mut cfg = measured_config(10.0, 101, 0.0);
    cfg["span"] = json!(1.0);
    let c = write_json(d.path(), "cfg.json", &cfg);
    let o = resfit(d.path(), &["simulate", c.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("span"), "{}", stderr(&o));
}

#[test]
fn four_rows_is_a_fit_failure() {
    let d = TempDir::new().unwrap();
    let p = d.path().join("tiny.csv");
    fs::write(&p, "f_hz,s21_re,s21_im\n1e9,1,0\n2e9,0.5,0.1\n3e9,0.2,0\n4e9,1,0\n").unwrap();
    let o = resfit(d.path(), &["fit", p.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("need"), "{}", stderr(&o));
}

#[test]
fn non_monotonic_rows_name_the_line() {
    let d = TempDir::new().unwrap();
    let p = d.path().join("bad.csv");
    fs::write(
        &p,
        "f_hz,s21_re,s21_im\n1e9,1,0\n2e9,1,0\n1.5e9,1,0\n3e9,1,0\n4e9,1,0\n5e9,1,0\n",
    )
    .unwrap();
    let o = resfit(d.path(), &["fit", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn hpd_plan_is_centred_and_beats_linear_sweep() {
    let d = TempDir::new().unwrap();
    let dir = d.path().to_str().unwrap();
    let coarse = write_json(d.path(), "coarse.json", &measured_config(10.0, 401, 0.0));
    assert_eq!(code(&resfit(d.path(), &["simulate", coarse.to_str().unwrap(), "--name", "coarse"])), 0);
    let span_hz = measured_config(10.0, 401, 0.0)["span_hz"].as_f64().unwrap().to_string();
    let o = resfit(
        d.path(),
        &["hpd-plan", &format!("{dir}/coarse.csv"), "--n-points", "2001", "--span-hz", &span_hz],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let plan: Vec<f64> = fs::read_to_string(d.path().join("coarse.plan.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(plan.len(), 2001);
    assert!((plan[1000] - 4.364e9).abs() < 1.0, "{}", plan[1000] - 4.364e9);
    let echo = read_json(&d.path().join("coarse.plan.json"));
    assert!(echo["theta0_rad"].is_number());

    // Same noise level and point count, linear against planned grid.
    let noisy = write_json(d.path(), "noisy.json", &measured_config(10.0, 2001, 3.5e-4));
    assert_eq!(code(&resfit(d.path(), &["simulate", noisy.to_str().unwrap(), "--name", "spd"])), 0);
    let o = resfit(
        d.path(),
        &["simulate", noisy.to_str().unwrap(), "--name", "hpd", "--freqs", &format!("{dir}/coarse.plan.txt")],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["spd", "hpd"] {
        assert_eq!(code(&resfit(d.path(), &["fit", &format!("{dir}/{name}.csv")])), 0);
    }
    let sigma = |name: &str| read_json(&d.path().join(format!("{name}.fit.json")))["sigma_q_i"].as_f64().unwrap();
    assert!(sigma("hpd") < sigma("spd"), "hpd {} spd {}", sigma("hpd"), sigma("spd"));
}

#[test]
fn hpd_plan_needs_five_points() {
    let d = TempDir::new().unwrap();
    let coarse = write_json(d.path(), "c.json", &measured_config(10.0, 201, 0.0));
    assert_eq!(code(&resfit(d.path(), &["simulate", coarse.to_str().unwrap(), "--name", "c"])), 0);
    let o = resfit(d.path(), &["hpd-plan", d.path().join("c.csv").to_str().unwrap(), "--n-points", "3"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("at least 5"));
}

fn small_bench(dir: &Path, q_i: Value, sigma_n: f64, trials: usize) -> PathBuf {
    write_json(
        dir,
        "bench.json",
        &json!({
            "name": "small", "f_r_hz": 5e9, "q_c_mag": 1e4, "phi_rad": 0.0,
            "q_i": q_i, "background": {"a": 1.0, "alpha_rad": 0.0, "tau_s": 0.0},
            "sigma_n": [sigma_n], "sigma_fr_hz": [0.0, 10.0], "n_points": [201],
            "span_ratio": [10.0], "grids": ["spd", "hpd"], "trials_per_cell": trials,
            "master_seed": 11
        }),
    )
}

#[test]
fn bench_dry_run_writes_nothing() {
    let d = TempDir::new().unwrap();
    let cfg = small_bench(d.path(), json!([1e3, 1e4, 1e5]), 1e-3, 4);
    let out = d.path().join("out");
    let o = resfit(&out, &["--dry-run", "bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("12 cells"), "{}", stdout(&o));
    assert!(!out.exists());
}

#[test]
fn bench_is_reproducible_and_writes_manifest() {
    let d = TempDir::new().unwrap();
    let cfg = small_bench(d.path(), json!([1e3, 1e5]), 1e-3, 4);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        let o = resfit(dir, &["bench", "--config", cfg.to_str().unwrap(), "--analysis", "ratio-map", "--plot", "--threads", threads]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["small.records.csv", "small.trials.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m = read_json(&a.join("small.manifest.json"));
    assert_eq!(m["analysis"], json!("ratio_map"));
    assert_eq!(m["n_trials"], json!(32));
    assert!(m["summary"]["cells"].is_array());
    assert!(fs::read_to_string(a.join("small.ratio_map.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn bench_reports_degradation() {
    let d = TempDir::new().unwrap();
    let cfg = small_bench(d.path(), json!([10.0]), 1.0, 5);
    let o = resfit(d.path(), &["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let m = read_json(&d.path().join("small.manifest.json"));
    assert!(m["n_failed"].as_u64().unwrap() > 0);
}

#[test]
fn bench_rejects_bad_thread_cap() {
    let d = TempDir::new().unwrap();
    let cfg = small_bench(d.path(), json!([1e4]), 1e-3, 2);
    let o = Command::new(env!("CARGO_BIN_EXE_resfit"))
        .args(["--dry-run", "bench", "--config", cfg.to_str().unwrap()])
        .env("RESFIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("RESFIT_THREADS"));
}

fn fit_json(dir: &Path, phi: f64) -> PathBuf {
    let c = write_json(dir, "cfg.json", &sim_config(5e9, 1e5, 2e4, 0.3, 10.0 * 5e9 / 1.6e4, 501, 0.0));
    assert_eq!(code(&resfit(dir, &["simulate", c.to_str().unwrap(), "--name", "r"])), 0);
    assert_eq!(code(&resfit(dir, &["fit", dir.join("r.csv").to_str().unwrap()])), 0);
    let p = dir.join("r.fit.json");
    let mut v = read_json(&p);
    v["phi_rad"] = json!(phi);
    write_json(dir, "r.fit.json", &v)
}

#[test]
fn photons_apply_line_attenuation() {
    let d = TempDir::new().unwrap();
    let fit = fit_json(d.path(), 0.3);
    let o = resfit(d.path(), &["photons", "--fit", fit.to_str().unwrap(), "--p-vna-dbm", "-35", "--attenuation-db", "-73"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = read_json(&d.path().join("r.photons.json"));
    let p_chip = v["p_chip_w"].as_f64().unwrap();
    assert!((p_chip / (10f64.powf(-10.8) * 1e-3) - 1.0).abs() < 1e-12);
    let (f_r, q_l, q_c) = (v["f_r_hz"].as_f64().unwrap(), v["q_l"].as_f64().unwrap(), v["q_c_mag"].as_f64().unwrap());
    let h = 6.626_070_15e-34;
    let expected = p_chip / (2.0 * std::f64::consts::PI * h * f_r * f_r) * 2.0 * q_l * q_l * 0.3f64.cos() / q_c;
    assert!((v["photon_number"].as_f64().unwrap() / expected - 1.0).abs() < 1e-12);

    let o = resfit(d.path(), &["photons", "--fit", fit.to_str().unwrap(), "--p-vna-dbm", "0", "--attenuation-db", "0"]);
    assert_eq!(code(&o), 0);
    let v = read_json(&d.path().join("r.photons.json"));
    assert!((v["p_chip_w"].as_f64().unwrap() - 1e-3).abs() < 1e-18);
}

#[test]
fn photons_vanish_for_reactive_coupling() {
    let d = TempDir::new().unwrap();
    let fit = fit_json(d.path(), FRAC_PI_2);
    let o = resfit(d.path(), &["photons", "--fit", fit.to_str().unwrap(), "--p-vna-dbm", "-35", "--attenuation-db", "-73"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("warning"));
    let v = read_json(&d.path().join("r.photons.json"));
    assert_eq!(v["photon_number"], json!(0.0));

    let fit = fit_json(d.path(), 2.0);
    let o = resfit(d.path(), &["photons", "--fit", fit.to_str().unwrap(), "--p-vna-dbm", "-35", "--attenuation-db", "-73"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn entropy_of_model_has_two_peaks() {
    let d = TempDir::new().unwrap();
    let cfg = write_json(
        d.path(),
        "p.json",
        &json!({"f_r_hz": 5e9, "q_i": 5e4, "q_c_mag": 1e4, "phi_rad": 0.0,
                "grid": "spd", "n_points": 201, "span_hz": 4.0 * 5e9 / (1.0 / (1.0 / 5e4 + 1.0 / 1e4))}),
    );
    let o = resfit(d.path(), &["entropy", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("entropy.csv")).unwrap();
    let h: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(h.len(), 201);
    let local_max = (1..h.len() - 1).filter(|&i| h[i] > h[i - 1] && h[i] >= h[i + 1]).count();
    assert_eq!(local_max, 2);
    let s = read_json(&d.path().join("entropy.summary.json"));
    assert_eq!(s["clamp_count"], json!(0));
}

#[test]
fn entropy_rejects_empty_and_counts_clamps() {
    let d = TempDir::new().unwrap();
    let empty = d.path().join("empty.csv");
    fs::write(&empty, "f_hz,s21_re,s21_im\n").unwrap();
    let o = resfit(d.path(), &["entropy", "--sweep", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let odd = d.path().join("odd.csv");
    fs::write(&odd, "f_hz,s21_re,s21_im\n1e9,1,0\n2e9,-0.5,0\n3e9,1,0\n").unwrap();
    let o = resfit(d.path(), &["entropy", "--sweep", odd.to_str().unwrap(), "--name", "odd"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = read_json(&d.path().join("odd.summary.json"));
    assert_eq!(s["clamp_count"], json!(1));
}

#[test]
fn entropy_calibrates_raw_sweeps_on_request() {
    let d = TempDir::new().unwrap();
    let (f_r, q_i, q_c) = (5e9, 5e4, 1e4);
    let span = 4.0 * f_r / (1.0 / (1.0 / q_i + 1.0 / q_c));
    let c = write_json(d.path(), "cfg.json", &sim_config(f_r, q_i, q_c, 0.0, span, 401, 0.0));
    let o = resfit(d.path(), &["simulate", c.to_str().unwrap(), "--name", "raw"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let raw = d.path().join("raw.csv");

    let o = resfit(d.path(), &["entropy", "--sweep", raw.to_str().unwrap(), "--name", "plain"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("--calibrate"), "{}", stderr(&o));

    let o = resfit(d.path(), &["entropy", "--sweep", raw.to_str().unwrap(), "--calibrate", "--name", "cal"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let grid = write_json(
        d.path(),
        "grid.json",
        &json!({"f_r_hz": f_r, "q_i": q_i, "q_c_mag": q_c, "phi_rad": 0.0,
                "grid": "spd", "n_points": 401, "span_hz": span}),
    );
    let o = resfit(d.path(), &["entropy", "--config", grid.to_str().unwrap(), "--name", "model"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cal = read_json(&d.path().join("cal.summary.json"));
    let model = read_json(&d.path().join("model.summary.json"));
    let (a, b) = (cal["h_set_bits"].as_f64().unwrap(), model["h_set_bits"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-6 * b, "{a} vs {b}");
    assert_eq!(cal["clamp_count"], json!(0));
}
