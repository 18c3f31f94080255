//! Benchmarks for qmag-core live in the `benches` directory.
