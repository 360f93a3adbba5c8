//! Criterion benchmarks for the `gph` crate; see `benches/`.
