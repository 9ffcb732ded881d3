//! Benchmark harness package; see `benches/pipeline.rs`. No library code.
