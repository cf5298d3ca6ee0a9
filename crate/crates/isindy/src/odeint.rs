//! Fixed-step classical Runge-Kutta integration, used both to generate
//! ground-truth trajectories and to simulate identified models.
//!
//! Fixed-step RK4 is deterministic and reproducible across platforms; at
//! the benchmark step sizes its local error is far below every tolerance
//! in the test suite.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::types::{SparseModel, StateMatrix, TimeGrid};

/// Magnitude beyond which a trajectory is reported as blown up.
pub const BLOWUP_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("state magnitude exceeded {limit:.0e} at step {step}")]
    BlowUp { step: usize, limit: f64 },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("initial condition has {got} entries, field expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Autonomous vector field `x' = g(x)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

impl SparseModel {
    /// The model's vector field `Theta(x) * Xi`, summed over the support only.
    fn field_at(&self, x: &[f64], out: &mut [f64]) {
        let features = self.library.eval_row(x);
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &j in &self.support[i] {
                acc += features[j] * self.xi[(j, i)];
            }
            *slot = acc;
        }
    }
}

impl VectorField for SparseModel {
    fn dim(&self) -> usize {
        self.xi.ncols()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.field_at(x, out);
    }
}

/// A vector field given by a plain function, used for the closed-form
/// benchmark systems.
pub struct FnField<F: Fn(&[f64], &mut [f64])> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// Trajectory on a grid; row 0 equals the initial condition bit-exactly.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: StateMatrix,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.states.grid
    }
}

/// Classical fourth-order Runge-Kutta with the grid's step.
pub fn rk4_integrate(
    field: &dyn VectorField,
    eta: &[f64],
    grid: &TimeGrid,
) -> Result<Trajectory, OdeError> {
    let d = field.dim();
    if eta.len() != d {
        return Err(OdeError::DimensionMismatch {
            expected: d,
            got: eta.len(),
        });
    }
    let n = grid.len();
    let h = grid.step();
    let mut states = DMatrix::zeros(n, d);
    for (i, &v) in eta.iter().enumerate() {
        states[(0, i)] = v;
    }
    let mut x = eta.to_vec();
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut stage = vec![0.0; d];
    for step in 1..n {
        field.eval(&x, &mut k1);
        for i in 0..d {
            stage[i] = x[i] + 0.5 * h * k1[i];
        }
        field.eval(&stage, &mut k2);
        for i in 0..d {
            stage[i] = x[i] + 0.5 * h * k2[i];
        }
        field.eval(&stage, &mut k3);
        for i in 0..d {
            stage[i] = x[i] + h * k3[i];
        }
        field.eval(&stage, &mut k4);
        for i in 0..d {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(OdeError::NonFinite { step });
            }
            if v.abs() > BLOWUP_LIMIT {
                return Err(OdeError::BlowUp {
                    step,
                    limit: BLOWUP_LIMIT,
                });
            }
            states[(step, i)] = v;
        }
    }
    Ok(Trajectory {
        states: StateMatrix::new(grid.clone(), states),
    })
}

/// Integrate an identified model from its own initial condition.
pub fn simulate_model(model: &SparseModel, grid: &TimeGrid) -> Result<Trajectory, OdeError> {
    let eta: Vec<f64> = model.eta.iter().copied().collect();
    rk4_integrate(model, &eta, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::polynomial_library;
    use nalgebra::DVector;

    fn decay() -> FnField<impl Fn(&[f64], &mut [f64])> {
        FnField {
            dim: 1,
            f: |x: &[f64], out: &mut [f64]| out[0] = -x[0],
        }
    }

    #[test]
    fn exponential_decay_endpoint() {
        let grid = TimeGrid::new(0.0, 0.01, 101).unwrap();
        let traj = rk4_integrate(&decay(), &[1.0], &grid).unwrap();
        let endpoint = traj.states.values[(100, 0)];
        assert!((endpoint - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn logistic_matches_closed_form() {
        let field = FnField {
            dim: 1,
            f: |x: &[f64], out: &mut [f64]| out[0] = 1.6 * x[0] - x[0] * x[0],
        };
        let grid = TimeGrid::new(0.0, 0.01, 601).unwrap();
        let traj = rk4_integrate(&field, &[0.1], &grid).unwrap();
        let mut sup = 0.0f64;
        for k in 0..601 {
            let t = grid.time(k);
            let exact = 1.6 / (1.0 + (1.6 / 0.1 - 1.0) * (-1.6 * t).exp());
            sup = sup.max((traj.states.values[(k, 0)] - exact).abs());
        }
        assert!(sup < 1e-6, "sup-norm {sup}");
    }

    #[test]
    fn blowup_reported_at_first_step() {
        let field = FnField {
            dim: 1,
            f: |_: &[f64], out: &mut [f64]| out[0] = 1e13,
        };
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        match rk4_integrate(&field, &[0.0], &grid) {
            Err(OdeError::BlowUp { step: 1, .. }) => {}
            other => panic!("expected BlowUp at step 1, got {other:?}"),
        }
    }

    #[test]
    fn zero_model_stays_constant() {
        let lib = polynomial_library(2, 2);
        let model = SparseModel::new(
            lib,
            DMatrix::zeros(5, 2),
            DVector::from_vec(vec![1.5, -0.5]),
            false,
        );
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let traj = simulate_model(&model, &grid).unwrap();
        for k in 0..20 {
            assert_eq!(traj.states.values[(k, 0)], 1.5);
            assert_eq!(traj.states.values[(k, 1)], -0.5);
        }
    }

    #[test]
    fn sparse_model_field_equals_closed_form() {
        // exact logistic model as a SparseModel vs the closed-form field
        let lib = polynomial_library(1, 3);
        let mut xi = DMatrix::zeros(3, 1);
        xi[(0, 0)] = 1.6;
        xi[(1, 0)] = -1.0;
        let model = SparseModel::new(lib, xi, DVector::from_element(1, 0.1), false);
        let grid = TimeGrid::new(0.0, 0.01, 601).unwrap();
        let via_model = simulate_model(&model, &grid).unwrap();
        let field = FnField {
            dim: 1,
            f: |x: &[f64], out: &mut [f64]| out[0] = 1.6 * x[0] - x[0] * x[0],
        };
        let via_fn = rk4_integrate(&field, &[0.1], &grid).unwrap();
        for k in 0..601 {
            assert_eq!(
                via_model.states.values[(k, 0)].to_bits(),
                via_fn.states.values[(k, 0)].to_bits(),
                "divergence at step {k}"
            );
        }
    }

    #[test]
    fn lorenz_attractor_stays_finite() {
        let field = FnField {
            dim: 3,
            f: |x: &[f64], out: &mut [f64]| {
                out[0] = -10.0 * x[0] + 10.0 * x[1];
                out[1] = 28.0 * x[0] - x[0] * x[2] - x[1];
                out[2] = x[0] * x[1] - 8.0 / 3.0 * x[2];
            },
        };
        let grid = TimeGrid::new(0.0, 0.005, 1001).unwrap();
        let traj = rk4_integrate(&field, &[-5.0, 10.0, 30.0], &grid).unwrap();
        assert!(traj.states.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn fourth_order_error_ratio() {
        let endpoint_error = |h: f64| {
            let n = (1.0 / h).round() as usize + 1;
            let grid = TimeGrid::new(0.0, h, n).unwrap();
            let traj = rk4_integrate(&decay(), &[1.0], &grid).unwrap();
            (traj.states.values[(n - 1, 0)] - (-1.0f64).exp()).abs()
        };
        let ratio = endpoint_error(0.02) / endpoint_error(0.01);
        assert!((ratio - 16.0).abs() <= 3.2, "ratio {ratio}");
    }

    #[test]
    fn deterministic_and_grid_consistent() {
        let grid = TimeGrid::new(0.25, 0.01, 301).unwrap();
        let a = rk4_integrate(&decay(), &[0.7], &grid).unwrap();
        let b = rk4_integrate(&decay(), &[0.7], &grid).unwrap();
        assert_eq!(
            a.states.values.as_slice().len(),
            b.states.values.as_slice().len()
        );
        for (x, y) in a.states.values.iter().zip(b.states.values.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.grid(), &grid);
        assert_eq!(a.states.values[(0, 0)].to_bits(), 0.7f64.to_bits());
    }
}
