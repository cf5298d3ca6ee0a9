//! Shared domain types: the uniform time grid, observation and state
//! matrices, and the identified sparse model.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::features::FeatureLibrary;

/// Relative tolerance for detecting a non-uniform time grid in raw samples.
pub const GRID_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("time grid is not uniform: delta at sample {index} is {delta} (expected {expected})")]
    NonUniformGrid {
        index: usize,
        delta: f64,
        expected: f64,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("too few samples: {n} (need at least 3)")]
    TooShort { n: usize },
    #[error("time step must be positive, got {h}")]
    BadStep { h: f64 },
    #[error("expected {expected} columns, got {got}")]
    ColumnMismatch { expected: usize, got: usize },
}

/// Uniform sampling grid: sample `k` (0-based) lies at `t1 + k*h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t1: f64,
    h: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t1: f64, h: f64, n: usize) -> Result<Self, DataError> {
        if h <= 0.0 || !h.is_finite() {
            return Err(DataError::BadStep { h });
        }
        if n < 3 {
            return Err(DataError::TooShort { n });
        }
        Ok(TimeGrid { t1, h, n })
    }

    pub fn start(&self) -> f64 {
        self.t1
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time of sample `k` (0-based). Pure function of `(t1, h, k)`, so two
    /// calls give bit-identical results.
    pub fn time(&self, k: usize) -> f64 {
        self.t1 + (k as f64) * self.h
    }

    pub fn end(&self) -> f64 {
        self.time(self.n - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.time(k)).collect()
    }

    /// Grid covering `[a, b] ∩ [t1, tn]`, snapped to existing samples.
    pub fn window(&self, a: f64, b: f64) -> Result<(usize, TimeGrid), DataError> {
        let k0 = ((a - self.t1) / self.h - 0.5).ceil().max(0.0) as usize;
        let k1 = (((b - self.t1) / self.h + 0.5).floor() as usize).min(self.n - 1);
        if k1 < k0 + 2 {
            return Err(DataError::TooShort {
                n: k1.saturating_sub(k0) + 1,
            });
        }
        Ok((
            k0,
            TimeGrid {
                t1: self.time(k0),
                h: self.h,
                n: k1 - k0 + 1,
            },
        ))
    }
}

/// Noisy measurements on a uniform grid, one column per state variable.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub grid: TimeGrid,
    /// n×d matrix of measurements.
    pub values: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl ObservationSet {
    pub fn new(
        grid: TimeGrid,
        values: DMatrix<f64>,
        labels: Vec<String>,
    ) -> Result<Self, DataError> {
        if values.nrows() != grid.len() {
            return Err(DataError::ColumnMismatch {
                expected: grid.len(),
                got: values.nrows(),
            });
        }
        if labels.len() != values.ncols() {
            return Err(DataError::ColumnMismatch {
                expected: values.ncols(),
                got: labels.len(),
            });
        }
        let obs = ObservationSet {
            grid,
            values,
            labels,
        };
        validate_observations(&obs)?;
        Ok(obs)
    }

    /// Build from raw sample times, checking grid uniformity against the
    /// spacing implied by the first two samples.
    pub fn from_samples(
        times: &[f64],
        values: DMatrix<f64>,
        labels: Vec<String>,
    ) -> Result<Self, DataError> {
        if times.len() < 3 {
            return Err(DataError::TooShort { n: times.len() });
        }
        let h = times[1] - times[0];
        if h.is_nan() || h <= 0.0 {
            return Err(DataError::BadStep { h });
        }
        let scale = h.abs().max(times[0].abs());
        for k in 1..times.len() {
            let delta = times[k] - times[k - 1];
            if (delta - h).abs() > GRID_TOLERANCE * scale.max(delta.abs()) {
                return Err(DataError::NonUniformGrid {
                    index: k,
                    delta,
                    expected: h,
                });
            }
        }
        let grid = TimeGrid::new(times[0], h, times.len())?;
        ObservationSet::new(grid, values, labels)
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Restrict to the samples inside `[a, b]`.
    pub fn window(&self, a: f64, b: f64) -> Result<ObservationSet, DataError> {
        let (k0, grid) = self.grid.window(a, b)?;
        let values = self.values.rows(k0, grid.len()).into_owned();
        Ok(ObservationSet {
            grid,
            values,
            labels: self.labels.clone(),
        })
    }
}

/// Checks the invariants and hands the set back untouched.
pub fn validate_observations(obs: &ObservationSet) -> Result<&ObservationSet, DataError> {
    if obs.grid.len() < 3 {
        return Err(DataError::TooShort { n: obs.grid.len() });
    }
    for col in 0..obs.values.ncols() {
        for row in 0..obs.values.nrows() {
            if !obs.values[(row, col)].is_finite() {
                return Err(DataError::NonFinite { row, col });
            }
        }
    }
    Ok(obs)
}

/// Smoothed or true states on a grid; same shape rules as `ObservationSet`.
#[derive(Debug, Clone)]
pub struct StateMatrix {
    pub grid: TimeGrid,
    /// n×d matrix of states.
    pub values: DMatrix<f64>,
}

impl StateMatrix {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.nrows());
        StateMatrix { grid, values }
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.values.row(k).iter().copied().collect()
    }
}

/// The identified ODE system: sparse coefficients over a feature library
/// plus the estimated (or assumed) initial condition.
#[derive(Debug, Clone)]
pub struct SparseModel {
    pub library: FeatureLibrary,
    /// m×d coefficient matrix; exact zeros outside the support.
    pub xi: DMatrix<f64>,
    /// Initial condition, one entry per state variable.
    pub eta: DVector<f64>,
    /// Per-column indices of nonzero rows of `xi`.
    pub support: Vec<Vec<usize>>,
    /// True for baseline methods that pin `eta` to the first observation
    /// instead of estimating it.
    pub eta_assumed: bool,
}

impl SparseModel {
    pub fn new(
        library: FeatureLibrary,
        xi: DMatrix<f64>,
        eta: DVector<f64>,
        eta_assumed: bool,
    ) -> Self {
        let support = support_of(&xi);
        SparseModel {
            library,
            xi,
            eta,
            support,
            eta_assumed,
        }
    }

    pub fn dim(&self) -> usize {
        self.xi.ncols()
    }

    /// Support of column `i` as the set of active feature names.
    pub fn active_names(&self, i: usize) -> Vec<String> {
        self.support[i]
            .iter()
            .map(|&j| self.library.descriptors()[j].name())
            .collect()
    }
}

/// Nonzero-row index sets, column by column.
pub fn support_of(xi: &DMatrix<f64>) -> Vec<Vec<usize>> {
    (0..xi.ncols())
        .map(|i| (0..xi.nrows()).filter(|&j| xi[(j, i)] != 0.0).collect())
        .collect()
}
