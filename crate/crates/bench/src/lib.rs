//! Criterion benchmarks for gcond; see `benches/`.
