//! Criterion benchmarks for the fitting pipeline live under `benches/`.
//! Run them with `cargo bench -p resfit-benches`.
