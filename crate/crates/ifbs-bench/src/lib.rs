//! Criterion benchmarks for the solver's hot paths; see `benches/solver.rs`.
//! This crate has no library surface of its own.
