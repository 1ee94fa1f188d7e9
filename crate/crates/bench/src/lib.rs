//! Criterion benchmarks for `cns-core` live under `benches/`.
