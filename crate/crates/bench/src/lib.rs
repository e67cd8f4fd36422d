//! Criterion benchmarks for the `pmfem` kernels live in `benches/`.
