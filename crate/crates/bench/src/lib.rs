// Benchmarks live in benches/pipeline.rs; the crate itself exports nothing.
