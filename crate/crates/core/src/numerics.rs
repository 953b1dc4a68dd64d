//! Dense real matrix kernels shared by every other module: matrix
//! exponentials, cross-Gramian integrals, discrete Lyapunov solves, left
//! pseudo-inverses, induced norms and eigenvalue extremes.
//!
//! Conventions: `|v|_inf` is the max-norm on vectors, `op_norm_inf` the
//! induced max-row-sum norm, `op_norm_2` the spectral norm. All functions are
//! pure and safe to call concurrently.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Dense real matrix, the working type for all plant/gain/certificate data.
pub type Mat = DMatrix<f64>;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("scalar argument must be finite, got {0}")]
    NonFiniteScalar(f64),
    #[error("integration length must be non-negative, got {0}")]
    NegativeLength(f64),
    #[error("integration bounds must satisfy 0 <= a <= b, got a={a}, b={b}")]
    BadInterval { a: f64, b: f64 },
    #[error("matrix is not Schur-stable (spectral radius {0} >= 1)")]
    NotSchurStable(f64),
    #[error("matrix must be symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix must be positive definite (lambda_min = {0:.6e})")]
    NotPositiveDefinite(f64),
    #[error("no left inverse: rank-deficient (sigma_min/sigma_max = {0:.3e})")]
    RankDeficient(f64),
    #[error("left inverse requires rows >= cols, got {rows}x{cols}")]
    NotTall { rows: usize, cols: usize },
}

fn check_square(m: &Mat) -> Result<usize, NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// `e^{A t}` by scaling-and-squaring with Padé approximation.
///
/// `t` may be zero or negative.
pub fn mat_exp(a: &Mat, t: f64) -> Result<Mat, NumericsError> {
    check_square(a)?;
    if !t.is_finite() {
        return Err(NumericsError::NonFiniteScalar(t));
    }
    Ok((a * t).exp())
}

/// Cross Gramian `integral_0^s e^{F(s-t)} H e^{G t} dt`, computed exactly (to
/// matrix-exponential accuracy) as the upper-right block of the augmented
/// exponential `exp([[F, H], [0, G]] s)`.
pub fn cross_gramian(f: &Mat, h: &Mat, g: &Mat, s: f64) -> Result<Mat, NumericsError> {
    let n = check_square(f)?;
    let m = check_square(g)?;
    if h.nrows() != n || h.ncols() != m {
        return Err(NumericsError::DimensionMismatch(format!(
            "H must be {n}x{m} to conform with F and G, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if !s.is_finite() {
        return Err(NumericsError::NonFiniteScalar(s));
    }
    if s < 0.0 {
        return Err(NumericsError::NegativeLength(s));
    }
    let mut aug = Mat::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(f);
    aug.view_mut((0, n), (n, m)).copy_from(h);
    aug.view_mut((n, n), (m, m)).copy_from(g);
    let exp = (aug * s).exp();
    Ok(exp.view((0, n), (n, m)).into_owned())
}

/// Shifted cross Gramian `integral_a^b e^{F(b-t)} H e^{G t} dt`, reduced to
/// `cross_gramian(F, H, G, b - a) * e^{G a}`.
pub fn shifted_cross_gramian(
    f: &Mat,
    h: &Mat,
    g: &Mat,
    a: f64,
    b: f64,
) -> Result<Mat, NumericsError> {
    if !(a.is_finite() && b.is_finite()) || a < 0.0 || a > b {
        return Err(NumericsError::BadInterval { a, b });
    }
    let base = cross_gramian(f, h, g, b - a)?;
    Ok(base * mat_exp(g, a)?)
}

/// Solves the discrete Lyapunov equation `Abar^T P Abar - P = -Q` for
/// symmetric positive definite `P` by Kronecker vectorization.
///
/// Requires `Abar` Schur-stable and `Q` symmetric positive definite.
pub fn dlyap(abar: &Mat, q: &Mat) -> Result<Mat, NumericsError> {
    let n = check_square(abar)?;
    if q.nrows() != n || q.ncols() != n {
        return Err(NumericsError::DimensionMismatch(format!(
            "Q must be {n}x{n}, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    let rho = spectral_radius(abar)?;
    if rho >= 1.0 {
        return Err(NumericsError::NotSchurStable(rho));
    }
    let (qmin, _) = eig_extremes_sym(q)?;
    if qmin <= 0.0 {
        return Err(NumericsError::NotPositiveDefinite(qmin));
    }
    // vec(Abar^T P Abar) = (Abar^T (x) Abar^T) vec(P) for column-stacked vec.
    let at = abar.transpose();
    let kron = at.kronecker(&at);
    let system = Mat::identity(n * n, n * n) - kron;
    let rhs = DVector::from_column_slice(q.as_slice());
    let lu = system.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or(NumericsError::NotSchurStable(rho))?;
    let p = Mat::from_column_slice(n, n, sol.as_slice());
    // Symmetrize away the last-ulp asymmetry of the linear solve.
    Ok((&p + p.transpose()) * 0.5)
}

/// Moore-Penrose left inverse of a full-column-rank tall matrix.
///
/// Rank is checked via singular values with relative tolerance
/// `sigma_min > 1e-9 * sigma_max`.
pub fn pinv_left(w: &Mat) -> Result<Mat, NumericsError> {
    if w.nrows() < w.ncols() {
        return Err(NumericsError::NotTall {
            rows: w.nrows(),
            cols: w.ncols(),
        });
    }
    let svd = w.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin <= 1e-9 * smax {
        return Err(NumericsError::RankDeficient(if smax > 0.0 {
            smin / smax
        } else {
            0.0
        }));
    }
    svd.pseudo_inverse(0.0)
        .map_err(|_| NumericsError::RankDeficient(smin / smax))
}

/// Induced infinity norm: maximum absolute row sum.
pub fn op_norm_inf(m: &Mat) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral norm: largest singular value.
pub fn op_norm_2(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Max-norm of a vector.
pub fn vec_norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// `(lambda_min, lambda_max)` of a symmetric matrix.
pub fn eig_extremes_sym(p: &Mat) -> Result<(f64, f64), NumericsError> {
    check_square(p)?;
    let asym = op_norm_inf(&(p - p.transpose()));
    let scale = op_norm_inf(p).max(1.0);
    if asym > 1e-9 * scale {
        return Err(NumericsError::NotSymmetric(asym));
    }
    let eig = p.clone().symmetric_eigen();
    Ok((eig.eigenvalues.min(), eig.eigenvalues.max()))
}

/// True iff every eigenvalue of `a` has strictly negative real part.
pub fn is_hurwitz(a: &Mat) -> Result<bool, NumericsError> {
    check_square(a)?;
    Ok(a.complex_eigenvalues().iter().all(|l| l.re < 0.0))
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(a: &Mat) -> Result<f64, NumericsError> {
    check_square(a)?;
    Ok(a.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max))
}

/// Serde adapter storing a [`Mat`] as row-major nested arrays.
pub mod mat_rows {
    use super::Mat;
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat, String> {
        if rows.is_empty() {
            return Err("matrix must have at least one row".into());
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err("matrix must have at least one column".into());
        }
        if rows.iter().any(|r| r.len() != cols) {
            return Err("ragged rows: all rows must have the same length".into());
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        if flat.iter().any(|x| !x.is_finite()) {
            return Err("matrix entries must be finite".into());
        }
        Ok(Mat::from_row_slice(rows.len(), cols, &flat))
    }

    pub fn serialize<S: Serializer>(m: &Mat, ser: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&to_rows(m), ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}
