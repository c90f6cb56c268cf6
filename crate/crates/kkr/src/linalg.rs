//! Small linear-algebra utilities shared by the estimators.

use ndarray::{Array1, Array2};
use ndarray_linalg::{CholeskyFactorized, Eigh, FactorizeC, SolveC, UPLO};
use num_complex::Complex64;
use std::sync::Once;

use crate::{Error, Result};

extern "C" {
    fn openblas_set_num_threads(n: i32);
    // LAPACK divide-and-conquer symmetric eigensolver; considerably faster
    // than the QR-based dsyev for the large snapshot Grams.
    fn dsyevd_(
        jobz: *const i8,
        uplo: *const i8,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        w: *mut f64,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );
}

/// Full eigendecomposition of a real symmetric matrix via `dsyevd`.
///
/// Returns eigenvalues in ascending order and the matrix whose column `k`
/// is the eigenvector of eigenvalue `k`.
pub fn eigh_sym(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "matrix must be square");
    if n == 0 {
        return Err(Error::SingularGram("empty matrix".into()));
    }
    // column-major buffer; for a symmetric matrix the transpose is a no-op
    let mut buf: Vec<f64> = a.iter().cloned().collect();
    let mut w = vec![0.0f64; n];
    let jobz = b'V' as i8;
    let uplo = b'L' as i8;
    let n_i = n as i32;
    let mut info: i32 = 0;

    // workspace query
    let mut work_query = [0.0f64];
    let mut iwork_query = [0i32];
    let neg_one = -1i32;
    unsafe {
        dsyevd_(
            &jobz,
            &uplo,
            &n_i,
            buf.as_mut_ptr(),
            &n_i,
            w.as_mut_ptr(),
            work_query.as_mut_ptr(),
            &neg_one,
            iwork_query.as_mut_ptr(),
            &neg_one,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::SingularGram(format!(
            "dsyevd workspace query failed (info = {info})"
        )));
    }
    let lwork = work_query[0] as i32;
    let liwork = iwork_query[0];
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        dsyevd_(
            &jobz,
            &uplo,
            &n_i,
            buf.as_mut_ptr(),
            &n_i,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::SingularGram(format!(
            "dsyevd failed (info = {info})"
        )));
    }
    // buf is column-major: eigenvector k occupies buf[k*n .. (k+1)*n]
    let mut vectors = Array2::zeros((n, n));
    for k in 0..n {
        for r in 0..n {
            vectors[[r, k]] = buf[k * n + r];
        }
    }
    Ok((Array1::from_vec(w), vectors))
}

static PIN: Once = Once::new();

/// Forces the linked OpenBLAS to a single thread.
///
/// Outer-level parallelism (rayon over repetitions and Gram blocks) is more
/// effective for this workload, and single-threaded LAPACK keeps results
/// bit-identical regardless of the machine's core count.
pub fn pin_blas_threads() {
    PIN.call_once(|| unsafe { openblas_set_num_threads(1) });
}

/// Factorization of a Hermitian positive (semi-)definite matrix: Cholesky
/// when possible, otherwise an eigendecomposition solve with clipped
/// spectrum.
pub enum HermitianSolver {
    Cholesky(CholeskyFactorized<ndarray::OwnedRepr<Complex64>>),
    Eigen {
        vectors: Array2<Complex64>,
        inv_values: Array1<f64>,
    },
}

impl HermitianSolver {
    pub fn factor(matrix: &Array2<Complex64>) -> Result<Self> {
        match matrix.factorizec(UPLO::Lower) {
            Ok(f) => Ok(HermitianSolver::Cholesky(f)),
            Err(chol_err) => {
                log::warn!("cholesky failed ({chol_err}); falling back to eigensolve");
                Self::factor_eigen(matrix)
            }
        }
    }

    /// Eigendecomposition-based solver with the spectrum clipped at
    /// `1e-14 * max |eigenvalue|`; reports condition diagnostics.
    pub fn factor_eigen(matrix: &Array2<Complex64>) -> Result<Self> {
        let (values, vectors) = matrix
            .eigh(UPLO::Lower)
            .map_err(|e| Error::SingularGram(format!("eigendecomposition failed: {e}")))?;
        let max = values.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        if max == 0.0 {
            return Err(Error::SingularGram("matrix is identically zero".into()));
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        log::warn!(
            "eigensolve path: eigenvalue range [{min:.3e}, {max:.3e}], condition ~{:.3e}",
            max / min.abs().max(f64::MIN_POSITIVE)
        );
        let floor = 1e-14 * max;
        let inv_values = values.mapv(|v| if v.abs() < floor { 0.0 } else { 1.0 / v });
        Ok(HermitianSolver::Eigen {
            vectors,
            inv_values,
        })
    }

    pub fn solve(&self, rhs: &Array1<Complex64>) -> Result<Array1<Complex64>> {
        match self {
            HermitianSolver::Cholesky(f) => f
                .solvec(rhs)
                .map_err(|e| Error::SingularGram(e.to_string())),
            HermitianSolver::Eigen {
                vectors,
                inv_values,
            } => {
                // x = Q diag(1/lambda) Q^H b
                let mut coeffs = vectors.t().mapv(|z| z.conj()).dot(rhs);
                for (c, inv) in coeffs.iter_mut().zip(inv_values.iter()) {
                    *c *= *inv;
                }
                Ok(vectors.dot(&coeffs))
            }
        }
    }
}

/// Solves `A x = b` with iterative refinement on an existing
/// factorization: residual re-solves until `tol` (relative) is reached,
/// improvement stalls, or `max_rounds` passes. Returns the solution and
/// its final relative residual. Refinement recovers full accuracy on
/// ill-conditioned ridge systems where a single triangular solve leaves a
/// residual near `cond * epsilon`.
pub fn solve_refined(
    solver: &HermitianSolver,
    a: &Array2<Complex64>,
    b: &Array1<Complex64>,
    tol: f64,
    max_rounds: usize,
) -> Result<(Array1<Complex64>, f64)> {
    let mut x = solver.solve(b)?;
    let mut best = relative_residual(a, &x, b);
    for _ in 0..max_rounds {
        if best <= tol {
            break;
        }
        let r = b - &a.dot(&x);
        let dx = solver.solve(&r)?;
        let candidate = &x + &dx;
        let res = relative_residual(a, &candidate, b);
        if res < best {
            x = candidate;
            best = res;
        } else {
            break;
        }
    }
    Ok((x, best))
}

/// Promotes a real matrix to complex.
pub fn complexify(a: &Array2<f64>) -> Array2<Complex64> {
    a.mapv(|v| Complex64::new(v, 0.0))
}

/// Relative residual `||A x - b|| / ||b||`.
pub fn relative_residual(
    a: &Array2<Complex64>,
    x: &Array1<Complex64>,
    b: &Array1<Complex64>,
) -> f64 {
    let r = a.dot(x) - b;
    let num: f64 = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Unweighted least-squares slope of `ln(y)` against `ln(x)`.
///
/// Returns `(slope, rms_residual, defined)`; `defined` is false when fewer
/// than two usable points remain (the slope is then NaN).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> (f64, f64, bool) {
    let points: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys.iter())
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if points.len() < 2 {
        return (f64::NAN, f64::NAN, false);
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rms = (points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, rms, true)
}
