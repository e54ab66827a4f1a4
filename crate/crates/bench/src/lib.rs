//! Criterion benchmarks for the eegrid hot paths; see `benches/`.
