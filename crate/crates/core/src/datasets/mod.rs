//! Synthetic generators and loaders for public benchmark layouts.

pub mod benchmarks;
pub mod synthetic;

pub use benchmarks::{
    default_root, is_available, known_benchmarks, load_benchmark, reference_stats, Benchmark, ReferenceStats,
    DATA_ROOT_ENV,
};
pub use synthetic::{Generator, SyntheticSpec};
