use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use resfit_core::bench::{fig2_desk, run, Axis, BenchConfig};
use resfit_core::fit::{fit_circle_algebraic, remove_delay, DelayMode};
use resfit_core::synth::{grid_hpd, grid_spd, inject_noise};
use resfit_core::{fit_full, Background, FitOptions, GridKind, NoiseSpec, ResonatorParams, Sweep};
use std::hint::black_box;

fn sweep(n: usize, kind: GridKind) -> Sweep {
    let p = ResonatorParams::new(4.364e9, 5.181e6, 6.73e4, 0.668).unwrap();
    let bg = Background::new(1.149, 1.597, -8.825e-11).unwrap();
    let f = match kind {
        GridKind::Spd => grid_spd(p.f_r(), 10.0 * p.linewidth(), n).unwrap(),
        GridKind::Hpd => grid_hpd(p.f_r(), p.q_l(), n).unwrap(),
    };
    inject_noise(&p, &bg, &f, &NoiseSpec::isotropic(3.5e-4, 0.0, 1), kind).unwrap()
}

fn full_fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_full");
    for n in [201, 2001, 20001] {
        for kind in [GridKind::Spd, GridKind::Hpd] {
            let sw = sweep(n, kind);
            g.bench_with_input(BenchmarkId::new(format!("{kind:?}"), n), &sw, |b, sw| {
                b.iter(|| fit_full(black_box(sw), &FitOptions::default()).unwrap())
            });
        }
    }
    g.finish();
}

fn stages(c: &mut Criterion) {
    let sw = sweep(2001, GridKind::Spd);
    c.bench_function("remove_delay/refined/2001", |b| {
        b.iter(|| remove_delay(black_box(&sw), DelayMode::Refined).unwrap())
    });
    let (delayed, _) = remove_delay(&sw, DelayMode::Refined).unwrap();
    let z = delayed.values();
    c.bench_function("circle_fit/2001", |b| b.iter(|| fit_circle_algebraic(black_box(&z)).unwrap()));
}

fn small_bench(c: &mut Criterion) {
    let cfg = BenchConfig {
        q_i: Axis::Values(vec![1e3, 1e4, 1e5]),
        n_points: vec![201],
        trials_per_cell: 4,
        ..fig2_desk()
    };
    let mut g = c.benchmark_group("bench_run");
    g.sample_size(10);
    g.bench_function("3_cells_x_4_trials", |b| b.iter(|| run(black_box(&cfg), Some(1)).unwrap()));
    g.finish();
}

criterion_group!(benches, full_fit, stages, small_bench);
criterion_main!(benches);
