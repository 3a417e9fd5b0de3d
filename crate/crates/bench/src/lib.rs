//! Criterion benchmarks for the routing pipeline live in `benches/`.

pub use symroute_core;
