//! Squared-exponential covariance kernel.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, RowDVector};

/// `k(x, x') = s² exp(-|x - x'|² / (2ℓ²))`, with `jitter · s²` added on the
/// diagonal of Gram matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeKernel {
    pub lengthscale: f64,
    pub amplitude: f64,
    pub jitter: f64,
}

/// Hyperparameters a gradient can be taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelParam {
    Lengthscale,
    Amplitude,
}

impl SeKernel {
    pub fn new(lengthscale: f64, amplitude: f64, jitter: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "amplitude must be positive, got {amplitude}"
            )));
        }
        if !(jitter >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "jitter must be non-negative, got {jitter}"
            )));
        }
        Ok(Self {
            lengthscale,
            amplitude,
            jitter,
        })
    }

    fn sq_dist(a: &RowDVector<f64>, b: &RowDVector<f64>) -> f64 {
        (a - b).norm_squared()
    }

    pub fn eval(&self, a: &RowDVector<f64>, b: &RowDVector<f64>) -> f64 {
        self.amplitude * (-0.5 * Self::sq_dist(a, b) / (self.lengthscale * self.lengthscale)).exp()
    }

    pub fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let rows: Vec<_> = (0..n).map(|i| x.row(i).clone_owned()).collect();
        let mut g = DMatrix::from_fn(n, n, |i, j| self.eval(&rows[i], &rows[j]));
        for i in 0..n {
            g[(i, i)] += self.jitter * self.amplitude;
        }
        g
    }

    /// Kernel vector between the training inputs and one test point.
    pub fn cross(&self, x: &DMatrix<f64>, x_star: &RowDVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.nrows(),
            (0..x.nrows()).map(|i| self.eval(&x.row(i).clone_owned(), x_star)),
        )
    }

    /// Elementwise derivative of [`SeKernel::gram`].
    pub fn gram_derivative(&self, x: &DMatrix<f64>, p: KernelParam) -> DMatrix<f64> {
        let n = x.nrows();
        match p {
            KernelParam::Amplitude => self.gram(x) / self.amplitude,
            KernelParam::Lengthscale => {
                let l = self.lengthscale;
                DMatrix::from_fn(n, n, |i, j| {
                    let d2 = Self::sq_dist(&x.row(i).clone_owned(), &x.row(j).clone_owned());
                    self.amplitude * (-0.5 * d2 / (l * l)).exp() * d2 / (l * l * l)
                })
            }
        }
    }

    pub fn with_param(&self, p: KernelParam, value: f64) -> Result<Self> {
        match p {
            KernelParam::Lengthscale => Self::new(value, self.amplitude, self.jitter),
            KernelParam::Amplitude => Self::new(self.lengthscale, value, self.jitter),
        }
    }

    pub fn param(&self, p: KernelParam) -> f64 {
        match p {
            KernelParam::Lengthscale => self.lengthscale,
            KernelParam::Amplitude => self.amplitude,
        }
    }
}

impl Default for SeKernel {
    fn default() -> Self {
        Self {
            lengthscale: 1.0,
            amplitude: 1.0,
            jitter: 1e-6,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn known_values() {
        let k = SeKernel::new(2.0, 3.0, 0.0).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let g = k.gram(&x);
        assert_relative_eq!(g[(0, 0)], 3.0);
        assert_relative_eq!(g[(0, 1)], 3.0 * (-2.0f64 / 8.0).exp(), max_relative = 1e-15);
    }

    #[test]
    fn derivative_matches_fd() {
        let k = SeKernel::new(0.8, 1.5, 1e-6).unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.1, 1.0, -0.4, 0.3, 0.9]);
        for p in [KernelParam::Lengthscale, KernelParam::Amplitude] {
            let h = 1e-6;
            let v = k.param(p);
            let fd = (k.with_param(p, v + h).unwrap().gram(&x) - k.with_param(p, v - h).unwrap().gram(&x)) / (2.0 * h);
            assert_relative_eq!(k.gram_derivative(&x, p), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn duplicate_inputs_need_jitter() {
        let x = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let k0 = SeKernel::new(1.0, 1.0, 0.0).unwrap();
        assert!(crate::linalg::cholesky(&k0.gram(&x), "gram").is_err());
        assert!(crate::linalg::cholesky(&SeKernel::default().gram(&x), "gram").is_ok());
    }
}
