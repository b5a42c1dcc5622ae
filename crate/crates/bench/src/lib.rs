//! Criterion benchmarks for the PC-PG kernels live in `benches/`.
