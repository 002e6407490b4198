//! Thin wrappers over faer's dense decompositions.

use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};

pub(crate) struct ThinSvd<T> {
    pub u: Mat<T>,
    pub s: Vec<f64>,
    pub v: Mat<T>,
}

pub(crate) fn thin_svd(a: MatRef<'_, f64>) -> Result<ThinSvd<f64>> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))?;
    Ok(ThinSvd {
        u: svd.U().to_owned(),
        s: svd.S().column_vector().iter().copied().collect(),
        v: svd.V().to_owned(),
    })
}

pub(crate) fn thin_svd_complex(a: MatRef<'_, c64>) -> Result<ThinSvd<c64>> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))?;
    Ok(ThinSvd {
        u: svd.U().to_owned(),
        s: svd.S().column_vector().iter().map(|z| z.re).collect(),
        v: svd.V().to_owned(),
    })
}

/// Number of singular values kept by a relative cutoff.
pub(crate) fn numerical_rank(s: &[f64], rel_tol: f64) -> usize {
    match s.first() {
        Some(&s0) if s0 > 0.0 => s.iter().take_while(|&&x| x > rel_tol * s0).count(),
        _ => 0,
    }
}

/// Minimum-norm least-squares solution of `a x = b`, discarding singular
/// values below `rel_tol * s_max`. Returns the solution and the singular values.
pub(crate) fn lstsq_truncated(
    a: MatRef<'_, f64>,
    b: MatRef<'_, f64>,
    rel_tol: f64,
) -> Result<(Mat<f64>, Vec<f64>)> {
    let svd = thin_svd(a)?;
    let k = numerical_rank(&svd.s, rel_tol);
    let mut coeff = svd.u.subcols(0, k).transpose() * b;
    for i in 0..k {
        let inv = 1.0 / svd.s[i];
        for j in 0..coeff.ncols() {
            coeff[(i, j)] *= inv;
        }
    }
    let x = svd.v.subcols(0, k) * &coeff;
    Ok((x, svd.s))
}

/// Complex counterpart of [`lstsq_truncated`] for a single right-hand side.
pub(crate) fn lstsq_truncated_complex(a: MatRef<'_, c64>, b: &[c64], rel_tol: f64) -> Result<Vec<c64>> {
    let svd = thin_svd_complex(a)?;
    let k = numerical_rank(&svd.s, rel_tol);
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let mut coeff = svd.u.subcols(0, k).adjoint() * &rhs;
    for i in 0..k {
        coeff[(i, 0)] /= svd.s[i];
    }
    let x = svd.v.subcols(0, k) * &coeff;
    Ok(x.col(0).iter().copied().collect())
}

pub(crate) fn to_complex(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

/// Column `j` of `a` rescaled to unit length (unchanged if zero).
pub(crate) fn normalize_columns(a: &mut Mat<f64>) {
    for j in 0..a.ncols() {
        let norm = a.col(j).norm_l2();
        if norm > 0.0 {
            for i in 0..a.nrows() {
                a[(i, j)] /= norm;
            }
        }
    }
}
