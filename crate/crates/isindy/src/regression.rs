//! Integral-form discretization: the row selector S, the cumulative
//! trapezoid operator C (streamed, never materialized), and assembly of the
//! pseudo-linear regression.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::types::StateMatrix;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("shape mismatch: theta has {theta_rows} rows, states have {state_rows}")]
    DimensionMismatch {
        theta_rows: usize,
        state_rows: usize,
    },
    #[error("column index {col} out of range (d = {d})")]
    BadColumn { col: usize, d: usize },
}

/// The selector `S` (rows 2..n) and cumulative trapezoid `C` for a uniform
/// grid, applied as streaming operations.
#[derive(Debug, Clone, Copy)]
pub struct IntegralOperators {
    pub n: usize,
    pub h: f64,
}

impl IntegralOperators {
    pub fn new(n: usize, h: f64) -> Self {
        debug_assert!(n >= 2 && h > 0.0);
        IntegralOperators { n, h }
    }

    /// `S v`: the last n-1 entries.
    pub fn select(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(1, self.n - 1).into_owned()
    }

    /// `C v`: running trapezoid integrals over samples 1..=k+1.
    pub fn cumulative(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(cumulative_trapezoid(v.as_slice(), self.h))
    }
}

/// Running composite-trapezoid integral: entry `k` (0-based, length n-1)
/// approximates the integral from `t_1` to `t_{k+2}`. O(n) prefix sum; the
/// dense lower-triangular form of C exists only in test oracles.
pub fn cumulative_trapezoid(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    debug_assert!(n >= 2);
    let mut out = Vec::with_capacity(n - 1);
    let mut acc = 0.0f64;
    for k in 0..n - 1 {
        acc += 0.5 * h * (v[k] + v[k + 1]);
        out.push(acc);
    }
    out
}

/// Design matrix `C Θ` shared by every state column: column `l` is the
/// running trapezoid integral of feature column `l`.
pub fn integrate_features(theta: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = theta.nrows();
    let m = theta.ncols();
    let mut design = DMatrix::zeros(n - 1, m);
    for l in 0..m {
        let mut acc = 0.0f64;
        for k in 0..n - 1 {
            acc += 0.5 * h * (theta[(k, l)] + theta[(k + 1, l)]);
            design[(k, l)] = acc;
        }
    }
    design
}

/// The regression for state column `i`: design `C Θ` and target `S x_i`.
pub fn assemble_regression(
    theta: &DMatrix<f64>,
    states: &StateMatrix,
    column: usize,
) -> Result<(DMatrix<f64>, DVector<f64>), RegressionError> {
    if theta.nrows() != states.values.nrows() {
        return Err(RegressionError::DimensionMismatch {
            theta_rows: theta.nrows(),
            state_rows: states.values.nrows(),
        });
    }
    if column >= states.dim() {
        return Err(RegressionError::BadColumn {
            col: column,
            d: states.dim(),
        });
    }
    let design = integrate_features(theta, states.grid.step());
    let target = states
        .values
        .column(column)
        .rows(1, theta.nrows() - 1)
        .into_owned();
    Ok((design, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TimeGrid;
    use approx::assert_abs_diff_eq;

    /// Dense C from its definition: (h/2)[L,0] + (h/2)[0,L].
    fn dense_c(n: usize, h: f64) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(n - 1, n);
        for row in 0..n - 1 {
            for col in 0..n {
                let left = if col <= row { 1.0 } else { 0.0 };
                let right = if col >= 1 && col - 1 <= row { 1.0 } else { 0.0 };
                c[(row, col)] = 0.5 * h * (left + right);
            }
        }
        c
    }

    #[test]
    fn constant_integrand() {
        let v = vec![1.0; 5];
        assert_eq!(cumulative_trapezoid(&v, 0.5), vec![0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn linear_integrand_exact() {
        let v: Vec<f64> = (0..5).map(|k| k as f64 * 0.25).collect();
        let out = cumulative_trapezoid(&v, 0.25);
        let expected = [0.03125, 0.125, 0.28125, 0.5];
        for (a, b) in out.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn matches_dense_operator() {
        let n = 100;
        let h = 0.037;
        let mut state = 0.8662_f64;
        let v = DVector::from_fn(n, |_, _| {
            state = (state * 997.0 + 0.123).fract();
            state - 0.5
        });
        let ops = IntegralOperators::new(n, h);
        let streamed = ops.cumulative(&v);
        let dense = dense_c(n, h) * &v;
        assert!((streamed - dense).abs().max() < 1e-12);
    }

    #[test]
    fn quadrature_is_second_order() {
        // integral of e^t on [0,1]; halving h cuts the endpoint error ~4x
        let err = |steps: usize| {
            let h = 1.0 / steps as f64;
            let v: Vec<f64> = (0..=steps).map(|k| (k as f64 * h).exp()).collect();
            let out = cumulative_trapezoid(&v, h);
            (out[steps - 1] - (1f64.exp() - 1.0)).abs()
        };
        let ratio = err(100) / err(200);
        assert!((ratio - 4.0).abs() <= 0.4, "ratio {ratio}");
    }

    #[test]
    fn minimal_two_samples() {
        assert_eq!(cumulative_trapezoid(&[2.0, 4.0], 0.1).len(), 1);
    }

    #[test]
    fn constant_feature_column_gives_elapsed_time() {
        let n = 6;
        let h = 0.2;
        let theta = DMatrix::from_element(n, 1, 1.0);
        let grid = TimeGrid::new(0.0, h, n).unwrap();
        let states = StateMatrix::new(grid, DMatrix::zeros(n, 1));
        let (design, _) = assemble_regression(&theta, &states, 0).unwrap();
        for k in 0..n - 1 {
            assert_abs_diff_eq!(design[(k, 0)], (k + 1) as f64 * h, epsilon = 1e-12);
        }
    }

    #[test]
    fn discrete_forward_model_is_exactly_consistent() {
        // states built by the trapezoid forward model itself: nonlinear
        // field, implicit step solved by fixed-point iteration
        let n = 200;
        let h = 0.01;
        let (xi, eta) = (vec![1.6, -1.0], 0.1);
        let field = |x: f64| xi[0] * x + xi[1] * x * x;
        let mut xs = vec![eta];
        for _ in 1..n {
            let prev = *xs.last().unwrap();
            let mut next = prev;
            for _ in 0..200 {
                next = prev + 0.5 * h * (field(prev) + field(next));
            }
            xs.push(next);
        }
        let grid = TimeGrid::new(0.0, h, n).unwrap();
        let values = DMatrix::from_fn(n, 1, |r, _| xs[r]);
        let states = StateMatrix::new(grid, values);
        // theta = [x, x^2] evaluated on the generated states
        let theta = DMatrix::from_fn(n, 2, |r, c| if c == 0 { xs[r] } else { xs[r] * xs[r] });
        let (design, target) = assemble_regression(&theta, &states, 0).unwrap();
        let xi_v = DVector::from_vec(xi.clone());
        let residual = &target - &design * &xi_v - DVector::from_element(n - 1, eta);
        assert!(
            residual.abs().max() < 1e-10,
            "max residual {}",
            residual.abs().max()
        );
    }

    #[test]
    fn assembly_is_linear_in_inputs() {
        let n = 50;
        let h = 0.1;
        let grid = TimeGrid::new(0.0, h, n).unwrap();
        let a = DMatrix::from_fn(n, 2, |r, c| ((r + c) as f64 * 0.7).sin());
        let b = DMatrix::from_fn(n, 2, |r, c| ((r * 2 + c) as f64 * 0.3).cos());
        let states = StateMatrix::new(grid, DMatrix::zeros(n, 1));
        let (da, _) = assemble_regression(&a, &states, 0).unwrap();
        let (db, _) = assemble_regression(&b, &states, 0).unwrap();
        let (dsum, _) = assemble_regression(&(2.0 * &a + &b), &states, 0).unwrap();
        assert!((2.0 * da + db - dsum).abs().max() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let theta = DMatrix::zeros(10, 2);
        let grid = TimeGrid::new(0.0, 0.1, 5).unwrap();
        let states = StateMatrix::new(grid, DMatrix::zeros(5, 1));
        assert!(matches!(
            assemble_regression(&theta, &states, 0),
            Err(RegressionError::DimensionMismatch { .. })
        ));
    }
}
