//! Symmetric and symmetric-definite generalized eigensolvers.
//!
//! The generalized problem `S_y a = l (S_x + eps I) a` is reduced to a
//! standard symmetric problem by Cholesky whitening of the regularized
//! right-hand side, solved with cyclic Jacobi rotations and mapped back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;
const ESCALATIONS: usize = 3;
const AUTO_EPS_FACTOR: f64 = 1e-6;

/// Eigenpairs sorted by descending eigenvalue. Column `i` of
/// `eigenvectors` pairs with `eigenvalues[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
    /// Ridge actually added to the right-hand matrix (0 for `sym_eig`).
    pub eps: f64,
}

impl EigenResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }
}

/// How the ridge added to `S_x` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularizer {
    /// `1e-6 * trace(S_x) / dim`, falling back to the scale of `S_y` when
    /// `S_x` is numerically zero.
    Auto,
    Fixed(f64),
    /// `factor * trace(S_x) / dim`, with the same fallback as `Auto`.
    Relative(f64),
}

impl Default for Regularizer {
    fn default() -> Self {
        Regularizer::Auto
    }
}

impl Regularizer {
    pub fn resolve(&self, sy: &Matrix, sx: &Matrix) -> f64 {
        match *self {
            Regularizer::Fixed(eps) => eps,
            Regularizer::Auto => Regularizer::Relative(AUTO_EPS_FACTOR).resolve(sy, sx),
            Regularizer::Relative(factor) => {
                let n = sx.rows().max(1) as f64;
                let sx_scale = sx.trace() / n;
                let sy_scale = sy.trace() / n;
                let base = if sx_scale > 0.0 && sx_scale > 1e-12 * sy_scale {
                    sx_scale
                } else if sy_scale > 0.0 {
                    sy_scale
                } else {
                    1.0
                };
                factor * base
            }
        }
    }
}

/// Solver knobs shared by every discriminant fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    pub regularizer: Regularizer,
    /// Multiplier applied to `S_y` before solving; 1 disables discounting.
    pub discount: f64,
    /// Scale each returned direction by the square root of its eigenvalue.
    pub sqrt_weighting: bool,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            regularizer: Regularizer::Auto,
            discount: 1.0,
            sqrt_weighting: false,
        }
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi.
pub fn sym_eig(s: &Matrix) -> Result<EigenResult> {
    if !s.is_square() {
        return Err(Error::NotSquare {
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    let n = s.rows();
    let mut a = s.symmetrized();
    let mut v = Matrix::identity(n);
    let threshold = JACOBI_REL_TOL * a.frobenius_norm();

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > threshold {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let values: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    Ok(sorted_result(&values, &v, n, 0.0))
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// One Jacobi rotation annihilating `a[p][q]`; accumulates into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Sorts eigenpairs descending (stable on ties) and keeps the first `k`.
fn sorted_result(values: &[f64], vectors: &Matrix, k: usize, eps: f64) -> EigenResult {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let columns: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| {
            let mut col = vectors.column(i);
            canonical_sign(&mut col);
            col
        })
        .collect();
    let eigenvectors = if columns.is_empty() {
        Matrix::zeros(vectors.rows(), 0)
    } else {
        Matrix::from_columns(&columns).expect("equal column lengths")
    };
    EigenResult {
        eigenvalues: order[..k].iter().map(|&i| values[i]).collect(),
        eigenvectors,
        eps,
    }
}

/// Flips `v` so that its entry of largest magnitude is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(b: &Matrix, eps: f64) -> Result<Matrix> {
    let n = b.rows();
    let max_diag = (0..n).map(|i| b[(i, i)]).fold(0.0_f64, f64::max);
    let floor = n as f64 * f64::EPSILON * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = b[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                eps,
                index: j,
                pivot: d,
            });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = b[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L x = rhs` in place for lower-triangular `L`.
fn forward_substitute(l: &Matrix, x: &mut [f64]) {
    let n = l.rows();
    for i in 0..n {
        let mut s = x[i];
        let row = l.row(i);
        for k in 0..i {
            s -= row[k] * x[k];
        }
        x[i] = s / row[i];
    }
}

/// Solves `L^T x = rhs` in place for lower-triangular `L`.
fn backward_substitute(l: &Matrix, x: &mut [f64]) {
    let n = l.rows();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
}

/// Top-`k` pairs of `S_y a = l (S_x + eps I) a`, eigenvalues descending.
///
/// When the Cholesky factorization fails with `eps > 0`, the ridge is
/// multiplied by 10 up to three times before giving up. Returned vectors
/// have unit Euclidean norm and a positive largest entry.
pub fn solve_generalized(sy: &Matrix, sx: &Matrix, k: usize, eps: f64) -> Result<EigenResult> {
    for m in [sy, sx] {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
    }
    if sy.rows() != sx.rows() {
        return Err(Error::DimensionMismatch(format!(
            "S_y is {}x{}, S_x is {}x{}",
            sy.rows(),
            sy.cols(),
            sx.rows(),
            sx.cols()
        )));
    }
    let n = sy.rows();
    if k > n {
        return Err(Error::TooManyEigenpairs {
            requested: k,
            dim: n,
        });
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative regularizer {eps}")));
    }
    let sy = sy.symmetrized();
    let sx = sx.symmetrized();

    let mut eps = eps;
    let mut attempt = 0;
    let l = loop {
        match cholesky(&sx.add_identity(eps), eps) {
            Ok(l) => break l,
            Err(err) => {
                if eps > 0.0 && attempt < ESCALATIONS {
                    eps *= 10.0;
                    attempt += 1;
                } else {
                    return Err(err);
                }
            }
        }
    };

    // C = L^-1 S_y L^-T
    let mut half = Matrix::zeros(n, n);
    for j in 0..n {
        let mut col = sy.column(j);
        forward_substitute(&l, &mut col);
        for i in 0..n {
            half[(j, i)] = col[i];
        }
    }
    let mut c = Matrix::zeros(n, n);
    for j in 0..n {
        let mut col = half.column(j);
        forward_substitute(&l, &mut col);
        for i in 0..n {
            c[(i, j)] = col[i];
        }
    }
    let standard = sym_eig(&c.symmetrized())?;

    let b = sx.add_identity(eps);
    let columns: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut a = standard.vector(i);
            backward_substitute(&l, &mut a);
            normalize(&mut a);
            let mut a = refine(&sy, &b, standard.eigenvalues[i], a);
            canonical_sign(&mut a);
            a
        })
        .collect();
    let eigenvectors = if k == 0 {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&columns)?
    };
    Ok(EigenResult {
        eigenvalues: standard.eigenvalues[..k].to_vec(),
        eigenvectors,
        eps,
    })
}

fn normalize(a: &mut [f64]) {
    let len = norm(a);
    if len > 0.0 {
        a.iter_mut().for_each(|x| *x /= len);
    }
}

fn residual(sy: &Matrix, b: &Matrix, lambda: f64, a: &[f64]) -> f64 {
    let (ya, ba) = (sy.matvec(a).expect("square"), b.matvec(a).expect("square"));
    ya.iter()
        .zip(&ba)
        .map(|(y, x)| (y - lambda * x).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// One step of shifted inverse iteration. Whitening by an ill-conditioned
/// Cholesky factor loses accuracy in the vectors of small eigenvalues; the
/// refined vector is kept only if it lowers the residual and stays close to
/// the original in the `B` inner product.
fn refine(sy: &Matrix, b: &Matrix, lambda: f64, a: Vec<f64>) -> Vec<f64> {
    let mut m = sy.sub(&b.scale(lambda)).expect("same shape");
    let mut x = b.matvec(&a).expect("square");
    if !lu_solve_in_place(&mut m, &mut x) || x.iter().any(|v| !v.is_finite()) {
        return a;
    }
    normalize(&mut x);
    let bx = b.matvec(&x).expect("square");
    let ba = b.matvec(&a).expect("square");
    let cross: f64 = a.iter().zip(&bx).map(|(p, q)| p * q).sum();
    let aa: f64 = a.iter().zip(&ba).map(|(p, q)| p * q).sum();
    let xx: f64 = x.iter().zip(&bx).map(|(p, q)| p * q).sum();
    let cos = cross.abs() / (aa * xx).sqrt();
    if cos > 0.99 && residual(sy, b, lambda, &x) < residual(sy, b, lambda, &a) {
        x
    } else {
        a
    }
}

/// Gaussian elimination with partial pivoting; `false` on a zero pivot.
fn lu_solve_in_place(m: &mut Matrix, x: &mut [f64]) -> bool {
    let n = x.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| m[(p, col)].abs().total_cmp(&m[(q, col)].abs()))
            .expect("nonempty range");
        if m[(pivot, col)] == 0.0 {
            return false;
        }
        if pivot != col {
            for j in 0..n {
                let t = m[(col, j)];
                m[(col, j)] = m[(pivot, j)];
                m[(pivot, j)] = t;
            }
            x.swap(col, pivot);
        }
        for r in col + 1..n {
            let f = m[(r, col)] / m[(col, col)];
            if f != 0.0 {
                for j in col..n {
                    m[(r, j)] -= f * m[(col, j)];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (x[i] - s) / m[(i, i)];
    }
    true
}

/// Applies discounting and the regularization policy, then solves.
pub fn solve_with_config(
    sy: &Matrix,
    sx: &Matrix,
    k: usize,
    config: &EigenConfig,
) -> Result<EigenResult> {
    if !(config.discount > 0.0 && config.discount <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "discount {} outside (0, 1]",
            config.discount
        )));
    }
    let eps = config.regularizer.resolve(sy, sx);
    if config.discount == 1.0 {
        solve_generalized(sy, sx, k, eps)
    } else {
        solve_generalized(&sy.scale(config.discount), sx, k, eps)
    }
}

/// Scales column `i` by `sqrt(eigenvalues[i])`. Negative eigenvalues are
/// clamped to zero; the flag reports whether that happened.
pub fn weight_by_sqrt_eigenvalues(result: &EigenResult) -> (Matrix, bool) {
    let mut out = result.eigenvectors.clone();
    let mut clamped = false;
    for (j, &lambda) in result.eigenvalues.iter().enumerate() {
        let w = if lambda < 0.0 {
            clamped = true;
            0.0
        } else {
            lambda.sqrt()
        };
        for i in 0..out.rows() {
            out[(i, j)] *= w;
        }
    }
    (out, clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn diagonal_spectrum() {
        let r = sym_eig(&Matrix::diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(r.eigenvalues, vec![3.0, 2.0, 1.0]);
        assert_eq!(r.vector(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(r.vector(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(r.vector(2), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two_analytic() {
        let s = Matrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let r = sym_eig(&s).unwrap();
        assert_abs_diff_eq!(r.eigenvalues[0], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.eigenvalues[1], 2.0, epsilon = 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = r.vector(0);
        assert_abs_diff_eq!(v0[0], h, epsilon = 1e-14);
        assert_abs_diff_eq!(v0[1], h, epsilon = 1e-14);
        let v1 = r.vector(1);
        assert_abs_diff_eq!(v1[0].abs(), h, epsilon = 1e-14);
        assert_abs_diff_eq!(v1[0], -v1[1], epsilon = 1e-14);
    }

    #[test]
    fn generalized_trivial() {
        let r = solve_generalized(&Matrix::diagonal(&[2.0, 1.0]), &Matrix::identity(2), 2, 0.0)
            .unwrap();
        assert_eq!(r.eigenvalues, vec![2.0, 1.0]);
        assert_eq!(r.vector(0), vec![1.0, 0.0]);
        assert_eq!(r.vector(1), vec![0.0, 1.0]);
    }

    #[test]
    fn generalized_scaled_rhs() {
        let sy = Matrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let r = solve_generalized(&sy, &Matrix::identity(2).scale(2.0), 2, 0.0).unwrap();
        assert_abs_diff_eq!(r.eigenvalues[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.eigenvalues[1], 1.0, epsilon = 1e-14);
        let v = r.vector(0);
        assert_abs_diff_eq!(v[0], v[1], epsilon = 1e-14);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            sym_eig(&Matrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        let i2 = Matrix::identity(2);
        assert!(matches!(
            solve_generalized(&i2, &i2, 3, 0.0),
            Err(Error::TooManyEigenpairs { .. })
        ));
        assert!(matches!(
            solve_generalized(&i2, &Matrix::zeros(2, 2), 1, 0.0),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(solve_generalized(&i2, &Matrix::identity(3), 1, 0.0).is_err());
    }

    #[test]
    fn escalation_recovers_from_indefinite_rhs() {
        // Slightly indefinite S_x: the first ridge is too small, escalation fixes it.
        let sx = Matrix::diagonal(&[1.0, -5e-6]);
        let r = solve_generalized(&Matrix::identity(2), &sx, 2, 1e-6).unwrap();
        assert!(r.eps > 1e-6);
        assert!(solve_generalized(&Matrix::identity(2), &Matrix::diagonal(&[1.0, -1.0]), 1, 1e-6)
            .is_err());
    }

    #[test]
    fn auto_regularizer_falls_back_to_negative_scale() {
        let sy = Matrix::identity(2).scale(4.0);
        assert_eq!(Regularizer::Auto.resolve(&sy, &Matrix::identity(2)), 1e-6);
        assert_eq!(Regularizer::Auto.resolve(&sy, &Matrix::zeros(2, 2)), 4e-6);
        assert_eq!(Regularizer::Fixed(0.5).resolve(&sy, &sy), 0.5);
    }

    #[test]
    fn sqrt_weighting() {
        let r = EigenResult {
            eigenvalues: vec![4.0, 1.0],
            eigenvectors: Matrix::identity(2),
            eps: 0.0,
        };
        let (w, clamped) = weight_by_sqrt_eigenvalues(&r);
        assert!(!clamped);
        assert_eq!(norm(&w.column(0)), 2.0);
        assert_eq!(norm(&w.column(1)), 1.0);

        let ones = EigenResult {
            eigenvalues: vec![1.0, 1.0],
            ..r.clone()
        };
        assert_eq!(weight_by_sqrt_eigenvalues(&ones).0, Matrix::identity(2));

        let negative = EigenResult {
            eigenvalues: vec![1.0, -1e-9],
            ..r
        };
        let (w, clamped) = weight_by_sqrt_eigenvalues(&negative);
        assert!(clamped);
        assert_eq!(w.column(1), vec![0.0, 0.0]);
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.9, 0.3];
        canonical_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }
}
