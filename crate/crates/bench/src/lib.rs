//! Criterion benchmarks for the generation pipeline; see `benches/`.
