//! Criterion benchmarks for the series, continuation and solver stages.
