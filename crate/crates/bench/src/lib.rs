//! Criterion benchmarks for the ranking pipeline live in `benches/`.
