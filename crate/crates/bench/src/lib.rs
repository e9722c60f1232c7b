//! Criterion benchmarks for the abcaw samplers; see `benches/`.
