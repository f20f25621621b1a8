//! Criterion benchmarks for the convolution kernels and bicubic resize.
//! Run with `cargo bench -p srforge-bench`.
