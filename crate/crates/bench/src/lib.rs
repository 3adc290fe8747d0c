//! Criterion benchmarks for `bernpois`; see `benches/oracle.rs`.
