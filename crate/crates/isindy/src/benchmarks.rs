//! Benchmark systems, the noise-variance-ratio observation model, and the
//! three identification methods: the integral pipeline and the two
//! baselines (derivative matching and known-initial-condition integral
//! matching).

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::exec::Execution;
use crate::features::{self, polynomial_library, trig_library, FeatureError, FeatureLibrary};
use crate::odeint::{rk4_integrate, FnField, OdeError, Trajectory};
use crate::smoothing::{smooth_dataset_with, SmoothingError};
use crate::solver::{
    stls_identify_with, stls_no_intercept, FitDiagnostics, SolverError, StlsConfig,
};
use crate::types::{DataError, ObservationSet, SparseModel, StateMatrix, TimeGrid};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("unknown system '{0}' (expected logistic, lotka_volterra, lorenz, or sine)")]
    UnknownSystem(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// The benchmark dynamical systems with their canonical configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkSystem {
    /// dx/dt = 1.6 x - x^2, x(0) = 0.1
    Logistic,
    /// Predator-prey pair with coefficients (2/3, -4/3; -1, 1), eta = (1.8, 1.8)
    LotkaVolterra,
    /// The chaotic Lorenz system (sigma=10, rho=28, beta=8/3), eta = (-5, 10, 30)
    Lorenz,
    /// dx/dt = -sin(x), x(0) = 0.4
    Sine,
}

impl BenchmarkSystem {
    pub const ALL: [BenchmarkSystem; 4] = [
        BenchmarkSystem::Logistic,
        BenchmarkSystem::LotkaVolterra,
        BenchmarkSystem::Lorenz,
        BenchmarkSystem::Sine,
    ];

    pub fn from_name(name: &str) -> Result<Self, BenchmarkError> {
        match name {
            "logistic" => Ok(BenchmarkSystem::Logistic),
            "lotka_volterra" => Ok(BenchmarkSystem::LotkaVolterra),
            "lorenz" => Ok(BenchmarkSystem::Lorenz),
            "sine" => Ok(BenchmarkSystem::Sine),
            other => Err(BenchmarkError::UnknownSystem(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkSystem::Logistic => "logistic",
            BenchmarkSystem::LotkaVolterra => "lotka_volterra",
            BenchmarkSystem::Lorenz => "lorenz",
            BenchmarkSystem::Sine => "sine",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BenchmarkSystem::Logistic | BenchmarkSystem::Sine => 1,
            BenchmarkSystem::LotkaVolterra => 2,
            BenchmarkSystem::Lorenz => 3,
        }
    }

    pub fn eta(&self) -> Vec<f64> {
        match self {
            BenchmarkSystem::Logistic => vec![0.1],
            BenchmarkSystem::LotkaVolterra => vec![1.8, 1.8],
            BenchmarkSystem::Lorenz => vec![-5.0, 10.0, 30.0],
            BenchmarkSystem::Sine => vec![0.4],
        }
    }

    /// Canonical simulation grid (start, step, samples).
    pub fn grid(&self) -> TimeGrid {
        let (h, n) = match self {
            BenchmarkSystem::Logistic => (0.01, 601),
            BenchmarkSystem::LotkaVolterra => (0.01, 1001),
            BenchmarkSystem::Lorenz => (0.005, 1001),
            BenchmarkSystem::Sine => (2e-4, 25_001),
        };
        TimeGrid::new(0.0, h, n).expect("canonical grids are valid")
    }

    /// Canonical sparsity threshold.
    pub fn lambda(&self) -> f64 {
        match self {
            BenchmarkSystem::Logistic => 0.1,
            BenchmarkSystem::LotkaVolterra => 0.3,
            BenchmarkSystem::Lorenz => 0.8,
            BenchmarkSystem::Sine => 0.05,
        }
    }

    /// Canonical candidate library.
    pub fn library(&self) -> FeatureLibrary {
        match self {
            BenchmarkSystem::Logistic => polynomial_library(1, 3),
            BenchmarkSystem::LotkaVolterra => polynomial_library(2, 3),
            BenchmarkSystem::Lorenz => polynomial_library(3, 3),
            BenchmarkSystem::Sine => trig_library(1, 2),
        }
    }

    /// Canonical spline segment count for the smoothing stage. The sine
    /// trajectory is a gentle decay, so few segments keep the roughness
    /// penalty mild at the bottom of the rho grid.
    pub fn segments(&self) -> usize {
        match self {
            BenchmarkSystem::Sine => 15,
            _ => crate::smoothing::default_segments(self.grid().len()),
        }
    }

    /// Noise levels studied for this system.
    pub fn nvr_levels(&self) -> Vec<f64> {
        match self {
            BenchmarkSystem::Logistic => vec![0.0, 0.1, 0.3, 0.5],
            BenchmarkSystem::LotkaVolterra | BenchmarkSystem::Lorenz => {
                vec![0.0, 0.05, 0.10, 0.15]
            }
            BenchmarkSystem::Sine => vec![0.0],
        }
    }

    pub fn is_chaotic(&self) -> bool {
        matches!(self, BenchmarkSystem::Lorenz)
    }

    pub fn field(&self) -> FnField<impl Fn(&[f64], &mut [f64])> {
        let system = *self;
        FnField {
            dim: self.dim(),
            f: move |x: &[f64], out: &mut [f64]| match system {
                BenchmarkSystem::Logistic => out[0] = 1.6 * x[0] - x[0] * x[0],
                BenchmarkSystem::LotkaVolterra => {
                    out[0] = 2.0 / 3.0 * x[0] - 4.0 / 3.0 * x[0] * x[1];
                    out[1] = -x[1] + x[0] * x[1];
                }
                BenchmarkSystem::Lorenz => {
                    out[0] = -10.0 * x[0] + 10.0 * x[1];
                    out[1] = 28.0 * x[0] - x[0] * x[2] - x[1];
                    out[2] = x[0] * x[1] - 8.0 / 3.0 * x[2];
                }
                BenchmarkSystem::Sine => out[0] = -x[0].sin(),
            },
        }
    }

    /// The true dynamics written in the canonical polynomial/trig library,
    /// used for support comparison in reports.
    pub fn true_model(&self) -> SparseModel {
        let lib = self.library();
        let mut xi = DMatrix::zeros(lib.len(), self.dim());
        let mut put = |name: &str, col: usize, value: f64| {
            let row = lib
                .index_of(name)
                .expect("true term present in canonical library");
            xi[(row, col)] = value;
        };
        match self {
            BenchmarkSystem::Logistic => {
                put("x1", 0, 1.6);
                put("x1^2", 0, -1.0);
            }
            BenchmarkSystem::LotkaVolterra => {
                put("x1", 0, 2.0 / 3.0);
                put("x1x2", 0, -4.0 / 3.0);
                put("x2", 1, -1.0);
                put("x1x2", 1, 1.0);
            }
            BenchmarkSystem::Lorenz => {
                put("x1", 0, -10.0);
                put("x2", 0, 10.0);
                put("x1", 1, 28.0);
                put("x2", 1, -1.0);
                put("x1x3", 1, -1.0);
                put("x1x2", 2, 1.0);
                put("x3", 2, -8.0 / 3.0);
            }
            BenchmarkSystem::Sine => {
                put("sin(x1)", 0, -1.0);
            }
        }
        SparseModel::new(lib, xi, DVector::from_vec(self.eta()), false)
    }

    /// Canonical ground-truth trajectory.
    pub fn simulate(&self) -> Result<Trajectory, BenchmarkError> {
        Ok(rk4_integrate(&self.field(), &self.eta(), &self.grid())?)
    }

    pub fn labels(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("x{i}")).collect()
    }
}

/// Noise specification: per-component standard deviation is
/// `nvr * population-std(x_i)` over the trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub nvr: f64,
    pub seed: u64,
}

/// Add independent Gaussian noise column by column.
///
/// Reproducibility contract: the generator is ChaCha8 seeded from
/// `spec.seed`; uniforms are drawn column-major (all of column 1, then
/// column 2, ...) and mapped to normals by Box-Muller, consuming one
/// `(u1, u2)` pair per two samples; an odd column length discards the
/// second member of its last pair.
pub fn add_noise(truth: &StateMatrix, spec: &NoiseSpec) -> ObservationSet {
    let n = truth.values.nrows();
    let d = truth.values.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = truth.values.clone();
    for col in 0..d {
        let column = truth.values.column(col);
        let mean = column.mean();
        let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sigma = spec.nvr * var.sqrt();
        let mut pending: Option<f64> = None;
        for row in 0..n {
            let z = match pending.take() {
                Some(z1) => z1,
                None => {
                    let (z0, z1) = box_muller(&mut rng);
                    pending = Some(z1);
                    z0
                }
            };
            values[(row, col)] += sigma * z;
        }
    }
    let labels = (1..=d).map(|i| format!("x{i}")).collect();
    ObservationSet::new(truth.grid.clone(), values, labels).expect("noisy copy keeps shape")
}

/// Uniform in (0, 1]: 53-bit mantissa shifted off a raw u64, plus one ulp
/// so the logarithm below stays finite.
fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64
}

fn box_muller(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = uniform_open(rng);
    let u2 = uniform_open(rng);
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = 2.0 * std::f64::consts::PI * u2;
    (radius * angle.cos(), radius * angle.sin())
}

/// Derivative-matching baseline: central finite differences on the raw
/// observations (one-sided at the ends), features on the raw observations,
/// thresholded least squares with no intercept. The initial condition is
/// not estimated; the first observation row is carried with
/// `eta_assumed = true`.
pub fn sindy_identify(
    obs: &ObservationSet,
    lib: &FeatureLibrary,
    lambda: &[f64],
) -> Result<SparseModel, BenchmarkError> {
    let n = obs.grid.len();
    let d = obs.dim();
    let h = obs.grid.step();
    let states = StateMatrix::new(obs.grid.clone(), obs.values.clone());
    let theta = features::evaluate(lib, &states)?;
    let config = StlsConfig::per_column(lambda.to_vec());
    let mut xi = DMatrix::zeros(lib.len(), d);
    for col in 0..d {
        let mut deriv = DVector::zeros(n);
        for k in 1..n - 1 {
            deriv[k] = (obs.values[(k + 1, col)] - obs.values[(k - 1, col)]) / (2.0 * h);
        }
        deriv[0] = (obs.values[(1, col)] - obs.values[(0, col)]) / h;
        deriv[n - 1] = (obs.values[(n - 1, col)] - obs.values[(n - 2, col)]) / h;
        let lambda_col = config_lambda(&config, col, d)?;
        let coeffs = stls_no_intercept(&theta, &deriv, lambda_col, &config, col)?;
        xi.set_column(col, &coeffs);
    }
    let eta = obs.values.row(0).transpose();
    Ok(SparseModel::new(lib.clone(), xi, eta, true))
}

/// Integral baseline with the initial condition assumed known: rectangle
/// (Euler) cumulative quadrature on raw observations, intercept pinned to
/// the first observation row, thresholded least squares on the coefficients
/// only.
///
/// The rectangle sums the right endpoints `theta(y_2) ... theta(y_{k+1})`.
pub fn insindy_identify(
    obs: &ObservationSet,
    lib: &FeatureLibrary,
    lambda: &[f64],
) -> Result<SparseModel, BenchmarkError> {
    let n = obs.grid.len();
    let d = obs.dim();
    let h = obs.grid.step();
    let states = StateMatrix::new(obs.grid.clone(), obs.values.clone());
    let theta = features::evaluate(lib, &states)?;
    let m = lib.len();
    let mut design = DMatrix::zeros(n - 1, m);
    for l in 0..m {
        let mut acc = 0.0;
        for k in 0..n - 1 {
            acc += h * theta[(k + 1, l)];
            design[(k, l)] = acc;
        }
    }
    let config = StlsConfig::per_column(lambda.to_vec());
    let eta = obs.values.row(0).transpose();
    let mut xi = DMatrix::zeros(m, d);
    for col in 0..d {
        let target = obs.values.column(col).rows(1, n - 1).into_owned()
            - DVector::from_element(n - 1, eta[col]);
        let lambda_col = config_lambda(&config, col, d)?;
        let coeffs = stls_no_intercept(&design, &target, lambda_col, &config, col)?;
        xi.set_column(col, &coeffs);
    }
    Ok(SparseModel::new(lib.clone(), xi, eta, true))
}

fn config_lambda(config: &StlsConfig, col: usize, d: usize) -> Result<f64, SolverError> {
    match config.lambda.len() {
        1 => Ok(config.lambda[0]),
        len if len == d => Ok(config.lambda[col]),
        got => Err(SolverError::BadLambda { got, expected: d }),
    }
}

/// The composed integral pipeline: smooth, evaluate features on the
/// smoothed states, assemble the integral regression, and run the
/// thresholded least-squares loop with the intercept estimated.
pub fn isindy_identify(
    obs: &ObservationSet,
    lib: &FeatureLibrary,
    lambda: &[f64],
    num_segments: usize,
) -> Result<(SparseModel, FitDiagnostics), BenchmarkError> {
    isindy_identify_with(obs, lib, lambda, num_segments, Execution::default())
}

pub fn isindy_identify_with(
    obs: &ObservationSet,
    lib: &FeatureLibrary,
    lambda: &[f64],
    num_segments: usize,
    exec: Execution,
) -> Result<(SparseModel, FitDiagnostics), BenchmarkError> {
    let config = StlsConfig::per_column(lambda.to_vec());
    isindy_identify_config(obs, lib, &config, num_segments, exec)
}

/// Full pipeline with an explicit solver configuration (iteration budget,
/// rank tolerance). Highly collinear libraries, e.g. polynomials combined
/// with their own sinusoids on a narrow state range, need a looser rank
/// cutoff than the default to keep the full-model initialization solvable.
pub fn isindy_identify_config(
    obs: &ObservationSet,
    lib: &FeatureLibrary,
    config: &StlsConfig,
    num_segments: usize,
    exec: Execution,
) -> Result<(SparseModel, FitDiagnostics), BenchmarkError> {
    let (smoothed, _models) = smooth_dataset_with(obs, num_segments, exec)?;
    let theta = features::evaluate(lib, &smoothed)?;
    let (model, diagnostics) = stls_identify_with(&theta, &smoothed, lib, config, exec)?;
    Ok((model, diagnostics))
}

/// Smoothing weights chosen per column, surfaced for reports.
pub fn smoothing_rhos(
    obs: &ObservationSet,
    num_segments: usize,
    exec: Execution,
) -> Result<Vec<f64>, BenchmarkError> {
    let (_, models) = smooth_dataset_with(obs, num_segments, exec)?;
    Ok(models.iter().map(|m| m.rho).collect())
}
