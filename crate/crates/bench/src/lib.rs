//! Criterion benchmarks for the steppers and the Gaussian averages live in `benches/`.
