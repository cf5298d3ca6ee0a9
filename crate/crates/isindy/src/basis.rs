//! Clamped cubic B-spline basis: knot construction, Cox–de Boor evaluation,
//! analytic second derivatives, the design matrix R, and the roughness
//! penalty matrix Q (Gram matrix of second derivatives).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::types::TimeGrid;

/// Spline degree is fixed at 3 (cubic) throughout.
pub const DEGREE: usize = 3;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("invalid knot range: end {tn} must exceed start {t1}")]
    BadRange { t1: f64, tn: f64 },
    #[error("need at least 2 segments, got {0}")]
    TooFewSegments(usize),
    #[error("t = {t} outside the knot domain [{t1}, {tn}]")]
    OutOfDomain { t: f64, t1: f64, tn: f64 },
}

/// Clamped cubic knot vector over equal-width spans.
///
/// The endpoint knots carry multiplicity 4, so the spline interpolates its
/// first and last coefficients at the boundary. With `num_segments` spans
/// the basis dimension is `J = num_segments + 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    /// Distinct breakpoints, `num_segments + 1` of them, covering [t1, tn].
    breakpoints: Vec<f64>,
    /// Full knot array with clamped ends; length `num_segments + 7`.
    knots: Vec<f64>,
}

/// Equal-width clamped cubic knots on `[t1, tn]`.
pub fn make_knots(t1: f64, tn: f64, num_segments: usize) -> Result<KnotVector, BasisError> {
    if t1.is_nan() || tn.is_nan() || tn <= t1 {
        return Err(BasisError::BadRange { t1, tn });
    }
    if num_segments < 2 {
        return Err(BasisError::TooFewSegments(num_segments));
    }
    let width = (tn - t1) / num_segments as f64;
    let mut breakpoints = Vec::with_capacity(num_segments + 1);
    for i in 0..=num_segments {
        breakpoints.push(if i == num_segments {
            tn
        } else {
            t1 + i as f64 * width
        });
    }
    let mut knots = Vec::with_capacity(num_segments + 7);
    knots.extend_from_slice(&[t1; DEGREE]);
    knots.extend_from_slice(&breakpoints);
    knots.extend_from_slice(&[tn; DEGREE]);
    Ok(KnotVector { breakpoints, knots })
}

impl KnotVector {
    /// Basis dimension `J = num_segments + 3`.
    pub fn dim(&self) -> usize {
        self.num_segments() + DEGREE
    }

    pub fn num_segments(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    fn check_domain(&self, t: f64) -> Result<(), BasisError> {
        if t < self.start() || t > self.end() || !t.is_finite() {
            return Err(BasisError::OutOfDomain {
                t,
                t1: self.start(),
                tn: self.end(),
            });
        }
        Ok(())
    }

    /// Index `s` of the knot span containing `t`: `knots[s] <= t < knots[s+1]`,
    /// except at `t = tn` where the last real span is used (closed right end).
    fn span_of(&self, t: f64) -> usize {
        let segs = self.num_segments();
        if t >= self.end() {
            return DEGREE + segs - 1;
        }
        // binary search over the distinct breakpoints
        let mut lo = 0usize;
        let mut hi = segs; // span index among breakpoints
        while lo < hi {
            let mid = (lo + hi) / 2;
            if t < self.breakpoints[mid + 1] {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        DEGREE + lo
    }

    /// The four cubic basis values that are nonzero at `t`, along with the
    /// index of the first one. De Boor's triangle on the containing span.
    fn nonzero_at(&self, t: f64) -> (usize, [f64; 4]) {
        let s = self.span_of(t);
        let tau = &self.knots;
        let mut values = [0.0f64; 4];
        values[0] = 1.0;
        let mut left = [0.0f64; 4];
        let mut right = [0.0f64; 4];
        for p in 1..=DEGREE {
            left[p] = t - tau[s + 1 - p];
            right[p] = tau[s + p] - t;
            let mut saved = 0.0;
            for r in 0..p {
                let denom = right[r + 1] + left[p - r];
                let temp = values[r] / denom;
                values[r] = saved + right[r + 1] * temp;
                saved = left[p - r] * temp;
            }
            values[p] = saved;
        }
        (s - DEGREE, values)
    }

    /// The four second-derivative values that are nonzero at `t`, with the
    /// index of the first one. Exact analytic derivatives of each cubic
    /// piece via the two-step derivative recursion on degree-1 values.
    fn nonzero_d2_at(&self, t: f64) -> (usize, [f64; 4]) {
        let s = self.span_of(t);
        let tau = &self.knots;
        let div0 = |a: f64, b: f64| if b != 0.0 { a / b } else { 0.0 };
        // degree-1 values at t: only indices s-1 and s are nonzero
        let w = tau[s + 1] - tau[s];
        let n1 = |i: isize| -> f64 {
            if i == s as isize - 1 {
                (tau[s + 1] - t) / w
            } else if i == s as isize {
                (t - tau[s]) / w
            } else {
                0.0
            }
        };
        // first derivative of the degree-2 functions
        let d1 = |i: isize| -> f64 {
            if i < 0 {
                return 0.0;
            }
            let i = i as usize;
            2.0 * (div0(n1(i as isize), tau[i + 2] - tau[i])
                - div0(n1(i as isize + 1), tau[i + 3] - tau[i + 1]))
        };
        let mut out = [0.0f64; 4];
        for (slot, i) in (s - DEGREE..=s).enumerate() {
            let a = div0(d1(i as isize), tau[i + 3] - tau[i]);
            let b = div0(d1(i as isize + 1), tau[i + 4] - tau[i + 1]);
            out[slot] = 3.0 * (a - b);
        }
        (s - DEGREE, out)
    }
}

/// All `J` cubic basis values at `t`.
pub fn eval_basis(knots: &KnotVector, t: f64) -> Result<DVector<f64>, BasisError> {
    knots.check_domain(t)?;
    let mut out = DVector::zeros(knots.dim());
    let (first, values) = knots.nonzero_at(t);
    for (offset, v) in values.iter().enumerate() {
        out[first + offset] = *v;
    }
    Ok(out)
}

/// All `J` second-derivative values at `t`.
pub fn eval_basis_d2(knots: &KnotVector, t: f64) -> Result<DVector<f64>, BasisError> {
    knots.check_domain(t)?;
    let mut out = DVector::zeros(knots.dim());
    let (first, values) = knots.nonzero_d2_at(t);
    for (offset, v) in values.iter().enumerate() {
        out[first + offset] = *v;
    }
    Ok(out)
}

/// Design matrix `R`: row `k` holds the basis values at grid time `t_k`.
pub fn design_matrix(knots: &KnotVector, grid: &TimeGrid) -> Result<DMatrix<f64>, BasisError> {
    let n = grid.len();
    let mut r = DMatrix::zeros(n, knots.dim());
    for k in 0..n {
        let t = grid.time(k);
        knots.check_domain(t)?;
        let (first, values) = knots.nonzero_at(t);
        for (offset, v) in values.iter().enumerate() {
            r[(k, first + offset)] = *v;
        }
    }
    Ok(r)
}

/// Symmetric positive semi-definite roughness penalty.
#[derive(Debug, Clone)]
pub struct PenaltyMatrix {
    pub q: DMatrix<f64>,
}

/// Number of Simpson subintervals per knot span. Second derivatives of
/// cubics are piecewise linear, so their products are quadratic per span and
/// Simpson is already exact; 8 subintervals is headroom.
const SIMPSON_SUBINTERVALS: usize = 8;

/// Gram matrix `Q[i][j] = ∫ φ_i'' φ_j'' dt` by composite Simpson per span.
pub fn penalty_matrix(knots: &KnotVector) -> PenaltyMatrix {
    let j = knots.dim();
    let mut q = DMatrix::zeros(j, j);
    let nodes = SIMPSON_SUBINTERVALS + 1;
    for span in 0..knots.num_segments() {
        let a = knots.breakpoints()[span];
        let b = knots.breakpoints()[span + 1];
        let step = (b - a) / SIMPSON_SUBINTERVALS as f64;
        for node in 0..nodes {
            let t = if node == nodes - 1 {
                b
            } else {
                a + node as f64 * step
            };
            let coeff = if node == 0 || node == nodes - 1 {
                1.0
            } else if node % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let weight = coeff * step / 3.0;
            let (first, d2) = knots.nonzero_d2_at(t);
            for p in 0..4 {
                for r in p..4 {
                    let contribution = weight * d2[p] * d2[r];
                    q[(first + p, first + r)] += contribution;
                    if r != p {
                        q[(first + r, first + p)] += contribution;
                    }
                }
            }
        }
    }
    PenaltyMatrix { q }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Textbook Cox–de Boor recursion over the full knot table, used as an
    /// independent oracle for the local de Boor evaluation.
    fn naive_basis(knots: &KnotVector, t: f64, degree: usize, i: usize) -> f64 {
        let tau = &knots.knots;
        if degree == 0 {
            let closed_right = t >= knots.end() && tau[i] < tau[i + 1] && tau[i + 1] >= knots.end();
            return if (t >= tau[i] && t < tau[i + 1]) || closed_right {
                1.0
            } else {
                0.0
            };
        }
        let mut acc = 0.0;
        let da = tau[i + degree] - tau[i];
        if da > 0.0 {
            acc += (t - tau[i]) / da * naive_basis(knots, t, degree - 1, i);
        }
        let db = tau[i + degree + 1] - tau[i + 1];
        if db > 0.0 {
            acc += (tau[i + degree + 1] - t) / db * naive_basis(knots, t, degree - 1, i + 1);
        }
        acc
    }

    fn greville(knots: &KnotVector, i: usize) -> f64 {
        let tau = &knots.knots;
        (tau[i + 1] + tau[i + 2] + tau[i + 3]) / 3.0
    }

    #[test]
    fn knot_examples() {
        let k = make_knots(0.0, 1.0, 10).unwrap();
        assert_eq!(k.dim(), 13);
        assert_eq!(k.breakpoints().len(), 11);
        assert_abs_diff_eq!(k.breakpoints()[1], 0.1, epsilon = 1e-15);

        let k = make_knots(0.0, 6.0, 2).unwrap();
        assert_eq!(k.dim(), 5);
        assert_eq!(k.breakpoints(), &[0.0, 3.0, 6.0]);

        assert!(matches!(
            make_knots(1.0, 0.0, 10),
            Err(BasisError::BadRange { .. })
        ));
        assert!(matches!(
            make_knots(0.0, 1.0, 1),
            Err(BasisError::TooFewSegments(1))
        ));
    }

    #[test]
    fn partition_of_unity_random_points() {
        let k = make_knots(0.0, 1.0, 10).unwrap();
        // deterministic quasi-random points in the domain
        let mut t = 0.123456789f64;
        for _ in 0..1000 {
            t = (t * 9301.0 + 49297.0) % 1.0;
            let v = eval_basis(&k, t).unwrap();
            assert_abs_diff_eq!(v.sum(), 1.0, epsilon = 1e-12);
        }
        let v = eval_basis(&k, 1.0).unwrap();
        assert_abs_diff_eq!(v.sum(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[k.dim() - 1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn clamped_left_endpoint() {
        let k = make_knots(0.0, 1.0, 10).unwrap();
        let v = eval_basis(&k, 0.0).unwrap();
        assert_eq!(v[0], 1.0);
        for j in 1..k.dim() {
            assert_eq!(v[j], 0.0);
        }
    }

    #[test]
    fn matches_naive_recursion_oracle() {
        let k = make_knots(0.0, 1.0, 10).unwrap();
        for &t in &[0.05, 0.1, 0.34, 0.5, 0.77, 0.999, 1.0] {
            let v = eval_basis(&k, t).unwrap();
            for i in 0..k.dim() {
                let expected = naive_basis(&k, t, DEGREE, i);
                assert_abs_diff_eq!(v[i], expected, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn local_support() {
        let k = make_knots(0.0, 1.0, 10).unwrap();
        for &t in &[0.05, 0.45, 0.95] {
            let v = eval_basis(&k, t).unwrap();
            let nz: Vec<usize> = (0..k.dim()).filter(|&j| v[j] != 0.0).collect();
            assert!(nz.len() <= 4);
            if nz.len() > 1 {
                assert_eq!(
                    nz.last().unwrap() - nz[0] + 1,
                    nz.len(),
                    "nonzeros not consecutive"
                );
            }
        }
    }

    #[test]
    fn d2_annihilates_linear_functions() {
        let k = make_knots(0.0, 2.0, 7).unwrap();
        // linear f(t) = 0.5 + 1.75 t has spline coefficients at the Greville sites
        let coeffs: Vec<f64> = (0..k.dim()).map(|i| 0.5 + 1.75 * greville(&k, i)).collect();
        for &t in &[0.0, 0.3, 0.777, 1.5, 2.0] {
            let d2 = eval_basis_d2(&k, t).unwrap();
            let curv: f64 = (0..k.dim()).map(|i| coeffs[i] * d2[i]).sum();
            assert_abs_diff_eq!(curv, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn d2_matches_central_differences() {
        let k = make_knots(0.0, 1.0, 10).unwrap();
        let delta = 1e-4;
        // interior points away from knots
        for &t in &[0.052, 0.237, 0.451, 0.862] {
            let d2 = eval_basis_d2(&k, t).unwrap();
            let up = eval_basis(&k, t + delta).unwrap();
            let mid = eval_basis(&k, t).unwrap();
            let dn = eval_basis(&k, t - delta).unwrap();
            for j in 0..k.dim() {
                let fd = (up[j] - 2.0 * mid[j] + dn[j]) / (delta * delta);
                let scale = d2[j].abs().max(1.0);
                assert!(
                    (fd - d2[j]).abs() <= 1e-4 * scale,
                    "basis {j} at t={t}: fd={fd}, analytic={}",
                    d2[j]
                );
            }
        }
    }

    #[test]
    fn out_of_domain_rejected() {
        let k = make_knots(0.0, 1.0, 10).unwrap();
        assert!(matches!(
            eval_basis(&k, -0.1),
            Err(BasisError::OutOfDomain { .. })
        ));
        assert!(matches!(
            eval_basis_d2(&k, 1.1),
            Err(BasisError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn design_matrix_examples() {
        let k = make_knots(0.0, 1.0, 10).unwrap();
        let grid = TimeGrid::new(0.0, 0.1, 11).unwrap();
        let r = design_matrix(&k, &grid).unwrap();
        assert_eq!((r.nrows(), r.ncols()), (11, 13));
        for row in 0..11 {
            let sum: f64 = r.row(row).iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            let nz: Vec<usize> = (0..13).filter(|&j| r[(row, j)] != 0.0).collect();
            assert!(nz.len() <= 4);
            if nz.len() > 1 {
                assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len());
            }
        }
        assert_eq!(r[(0, 0)], 1.0);
    }

    #[test]
    fn penalty_symmetric_and_annihilates_linears() {
        let k = make_knots(0.0, 1.0, 10).unwrap();
        let q = penalty_matrix(&k).q;
        for i in 0..k.dim() {
            for j in 0..k.dim() {
                assert!((q[(i, j)] - q[(j, i)]).abs() <= 1e-12);
            }
        }
        let coeffs = DVector::from_fn(k.dim(), |i, _| -2.0 + 3.0 * greville(&k, i));
        let energy = (coeffs.transpose() * &q * &coeffs)[(0, 0)];
        let scale = q.norm();
        assert!(energy.abs() <= 1e-10 * scale.max(1.0), "bQb = {energy}");
    }

    #[test]
    fn penalty_positive_semidefinite() {
        let k = make_knots(0.0, 1.0, 10).unwrap();
        let q = penalty_matrix(&k).q;
        let norm = q.norm();
        let eig = nalgebra::SymmetricEigen::new(q);
        for ev in eig.eigenvalues.iter() {
            assert!(*ev >= -1e-10 * norm, "eigenvalue {ev} too negative");
        }
    }

    #[test]
    fn penalty_matches_fine_trapezoid_oracle() {
        let k = make_knots(0.0, 1.0, 6).unwrap();
        let q = penalty_matrix(&k).q;
        // fine trapezoid oracle, knot-aligned so each span is integrated as
        // a smooth quadratic (d2 products have kinks at the knots)
        let per_span = 32_768usize;
        let mut oracle = DMatrix::zeros(k.dim(), k.dim());
        for span in 0..k.num_segments() {
            let a = k.breakpoints()[span];
            let b = k.breakpoints()[span + 1];
            let h = (b - a) / per_span as f64;
            for node in 0..=per_span {
                let t = if node == per_span {
                    b
                } else {
                    a + node as f64 * h
                };
                let w = if node == 0 || node == per_span {
                    0.5 * h
                } else {
                    h
                };
                let d2 = eval_basis_d2(&k, t).unwrap();
                oracle += w * &d2 * d2.transpose();
            }
        }
        let qmax = q.abs().max();
        let max_diff = (&q - &oracle).abs().max();
        assert!(
            max_diff < 1e-8 * qmax,
            "max diff {max_diff} vs scale {qmax}"
        );
    }

    #[test]
    fn simpson_per_span_is_exact_for_piecewise_quadratic() {
        // J = 5 case: per-span integrand is quadratic, so a single Simpson
        // pair per span already integrates it exactly; the 8-subinterval
        // composite rule must agree with that analytic value.
        let k = make_knots(0.0, 6.0, 2).unwrap();
        let q = penalty_matrix(&k).q;
        let mut exact = DMatrix::zeros(5, 5);
        for span in 0..2 {
            let a = k.breakpoints()[span];
            let b = k.breakpoints()[span + 1];
            let mid = 0.5 * (a + b);
            let w = (b - a) / 6.0;
            let da = eval_basis_d2(&k, a).unwrap();
            let dm = eval_basis_d2(&k, mid).unwrap();
            let db_v = eval_basis_d2(&k, b - 1e-12 * (b - a)).unwrap();
            // Simpson with one pair: (b-a)/6 * (f(a) + 4 f(mid) + f(b^-))
            exact +=
                w * (&da * da.transpose() + 4.0 * &dm * dm.transpose() + &db_v * db_v.transpose());
        }
        // d2 is continuous across interior knots, so evaluating at b or b^-
        // is the same function value; tolerance covers the 1e-12 offset.
        let max_diff = (&q - &exact).abs().max();
        assert!(max_diff < 1e-9 * q.norm(), "max diff {max_diff}");
    }
}
