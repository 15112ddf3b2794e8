//! Criterion benchmarks for the travel-time model and the policies; see `benches/`.
