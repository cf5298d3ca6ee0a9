//! Library side of the command-line tool: configuration merging, the
//! benchmark runner, report emission, and SVG plotting. The binary in
//! `main.rs` is a thin clap dispatcher over [`commands`].

pub mod commands;
pub mod config;
pub mod report;
pub mod runner;
pub mod svg;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] isindy::types::DataError),
    #[error(transparent)]
    DataIo(#[from] isindy::io::IoError),
    #[error(transparent)]
    Benchmark(#[from] isindy::benchmarks::BenchmarkError),
    #[error(transparent)]
    Features(#[from] isindy::features::FeatureError),
    #[error(transparent)]
    Ode(#[from] isindy::odeint::OdeError),
    #[error(transparent)]
    Smoothing(#[from] isindy::smoothing::SmoothingError),
    #[error(transparent)]
    Solver(#[from] isindy::solver::SolverError),
}

/// Exit code contract: 0 success, 1 partial benchmark failure, 2 input or
/// configuration error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    PartialFailure,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::PartialFailure => 1,
        }
    }
}
