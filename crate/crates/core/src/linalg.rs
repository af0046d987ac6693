//! Small dense linear-algebra helpers on top of nalgebra.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite(what))
}

pub fn log_det_chol(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse and log-determinant of a symmetric positive definite matrix.
pub fn spd_inverse_logdet(m: &DMatrix<f64>, what: &'static str) -> Result<(DMatrix<f64>, f64)> {
    let c = cholesky(m, what)?;
    let ld = log_det_chol(&c);
    let mut inv = c.inverse();
    symmetrize(&mut inv);
    Ok((inv, ld))
}

pub fn log_det_spd(m: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    Ok(log_det_chol(&cholesky(m, what)?))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

pub fn check_square(m: &DMatrix<f64>, k: usize) -> Result<()> {
    if m.nrows() != k || m.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

pub fn check_len(v: &DVector<f64>, k: usize) -> Result<()> {
    if v.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: v.len(),
        });
    }
    Ok(())
}

/// `A <- A - c (A d)(A d)^T` together with the matching log-det change for a
/// rank-one update `P <- P + delta d d^T` of `P = A^{-1}`.
///
/// Returns `None` when the update would leave `P` indefinite.
pub fn rank_one_inverse_update(a: &mut DMatrix<f64>, d: &DVector<f64>, delta: f64) -> Option<f64> {
    let ad = &*a * d;
    let s = d.dot(&ad);
    let den = 1.0 + delta * s;
    if !(den > 0.0) {
        return None;
    }
    a.ger(-delta / den, &ad, &ad, 1.0);
    Some(den.ln())
}

/// Same as [`rank_one_inverse_update`] with `d = e_i`.
pub fn rank_one_inverse_update_axis(a: &mut DMatrix<f64>, i: usize, delta: f64) -> Option<f64> {
    let den = 1.0 + delta * a[(i, i)];
    if !(den > 0.0) {
        return None;
    }
    let col = a.column(i).clone_owned();
    a.ger(-delta / den, &col, &col, 1.0);
    Some(den.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rank_one_matches_direct() {
        let p = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let (mut a, ld) = spd_inverse_logdet(&p, "p").unwrap();
        let d = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let dl = rank_one_inverse_update(&mut a, &d, 0.7).unwrap();
        let p2 = &p + 0.7 * &d * d.transpose();
        let (a2, ld2) = spd_inverse_logdet(&p2, "p2").unwrap();
        assert_relative_eq!(a, a2, max_relative = 1e-12);
        assert_relative_eq!(ld + dl, ld2, max_relative = 1e-12);

        let (mut b, _) = spd_inverse_logdet(&p, "p").unwrap();
        rank_one_inverse_update_axis(&mut b, 1, -0.5).unwrap();
        let mut p3 = p.clone();
        p3[(1, 1)] -= 0.5;
        let (b3, _) = spd_inverse_logdet(&p3, "p3").unwrap();
        assert_relative_eq!(b, b3, max_relative = 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = DMatrix::<f64>::identity(2, 2);
        assert!(rank_one_inverse_update_axis(&mut a, 0, -1.5).is_none());
    }
}
