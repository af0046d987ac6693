//! Classical Gaussian-process EP with the step likelihood.
//!
//! Written directly in covariance form (sites `τ̃_i, ν̃_i` on the diagonal,
//! posterior `Σ = (K^{-1} + T)^{-1}` kept up to date by rank-one steps) and
//! sharing no moment-matching code with the Student-t models, so it can act
//! as an independent reference for them.

use crate::ep_core::{EpOptions, EpReport, EpStatus, SweepOrder};
use crate::error::{Error, Result};
use crate::kernel::SeKernel;
use crate::linalg::symmetrize;
use crate::special::{normal_cdf, normal_log_cdf, normal_pdf};
use nalgebra::{DMatrix, DVector, RowDVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct GpFit {
    pub posterior: GaussianPosterior,
    pub tau: DVector<f64>,
    pub nu: DVector<f64>,
    pub gram: DMatrix<f64>,
    pub report: EpReport,
    /// `ln Z_EP`, or `NaN` when some cavity is invalid at the final state.
    pub log_z: f64,
}

struct Tilted {
    log_z: f64,
    mean: f64,
    var: f64,
}

/// Moments of `N(f; m, s) (ε + (1 - 2ε) Θ(y f))`.
fn tilted(y: f64, m: f64, s: f64, eps: f64) -> Tilted {
    let sd = s.sqrt();
    let z = y * m / sd;
    let (log_z, ratio) = if eps == 0.0 {
        let lc = normal_log_cdf(z);
        (lc, (normal_pdf(z).ln() - lc).exp())
    } else {
        let zz = eps + (1.0 - 2.0 * eps) * normal_cdf(z);
        (zz.ln(), (1.0 - 2.0 * eps) * normal_pdf(z) / zz)
    };
    let alpha = ratio / sd;
    let mean = m + s * alpha * y;
    let var = s * (1.0 - alpha * y * mean);
    Tilted { log_z, mean, var }
}

/// `ν²/(2τ) - ½ ln τ + ½ ln 2π`, the log partition of a 1-D Gaussian in
/// natural form.
fn g1(tau: f64, nu: f64) -> f64 {
    0.5 * nu * nu / tau - 0.5 * tau.ln() + 0.5 * (2.0 * PI).ln()
}

fn check(gram: &DMatrix<f64>, y: &[f64], eps: f64) -> Result<()> {
    if gram.nrows() != y.len() || gram.ncols() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: gram.nrows(),
        });
    }
    if !(0.0..0.5).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "label noise must lie in [0, 0.5), got {eps}"
        )));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter("labels must be +1 or -1".into()));
    }
    Ok(())
}

/// `Σ = (I + K T)^{-1} K` and `ln|I + T K|`; valid for singular `K`.
fn posterior_cov(gram: &DMatrix<f64>, tau: &DVector<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = gram.nrows();
    let mut m = DMatrix::identity(n, n);
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] += gram[(i, j)] * tau[j];
        }
    }
    let lu = m.lu();
    let det = lu.determinant();
    if !(det > 0.0) {
        return Err(Error::NotPositiveDefinite("Gaussian posterior"));
    }
    let mut s = lu.solve(gram).ok_or(Error::NotPositiveDefinite("Gaussian posterior"))?;
    symmetrize(&mut s);
    Ok((s, det.ln()))
}

/// EP on a precomputed prior covariance.
pub fn gp_ep_fit_gram(gram: &DMatrix<f64>, y: &[f64], eps: f64, opts: &EpOptions) -> Result<GpFit> {
    check(gram, y, eps)?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    let n = y.len();
    let mut tau = DVector::<f64>::zeros(n);
    let mut nu = DVector::<f64>::zeros(n);
    let mut sigma = gram.clone();
    let mut mu = DVector::<f64>::zeros(n);
    let mut rng = match opts.order {
        SweepOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut order: Vec<usize> = match &opts.order {
        SweepOrder::Fixed(o) => o.clone(),
        _ => (0..n).collect(),
    };
    let mut report = EpReport {
        status: EpStatus::MaxSweeps,
        sweeps: 0,
        max_change: f64::INFINITY,
        skipped: 0,
    };
    for sweep in 1..=opts.max_sweeps {
        if let Some(r) = rng.as_mut() {
            order.shuffle(r);
        }
        let mut max_change: f64 = 0.0;
        for &i in &order {
            let tc = 1.0 / sigma[(i, i)] - tau[i];
            if !(tc > 0.0) {
                if opts.skip_invalid_cavity {
                    report.skipped += 1;
                    continue;
                }
                return Err(Error::InvalidCavity { index: i });
            }
            let nc = mu[i] / sigma[(i, i)] - nu[i];
            let th = tilted(y[i], nc / tc, 1.0 / tc, eps);
            if !(th.var > 0.0) || !th.mean.is_finite() {
                report.skipped += 1;
                continue;
            }
            let new_tau: f64 = tau[i] + opts.damping * (1.0 / th.var - tc - tau[i]);
            let new_nu: f64 = nu[i] + opts.damping * (th.mean / th.var - nc - nu[i]);
            let dt = new_tau - tau[i];
            let den = 1.0 + dt * sigma[(i, i)];
            if !(den > 0.0) {
                report.skipped += 1;
                continue;
            }
            let si = sigma.column(i).clone_owned();
            sigma.ger(-dt / den, &si, &si, 1.0);
            max_change = max_change.max(dt.abs()).max((new_nu - nu[i]).abs());
            tau[i] = new_tau;
            nu[i] = new_nu;
            mu = &sigma * &nu;
        }
        let (s, _) = posterior_cov(gram, &tau)?;
        sigma = s;
        mu = &sigma * &nu;
        report.sweeps = sweep;
        report.max_change = max_change;
        if max_change < opts.tol {
            report.status = EpStatus::Converged;
            break;
        }
    }
    let log_z = log_evidence(gram, y, eps, &tau, &nu).unwrap_or(f64::NAN);
    Ok(GpFit {
        posterior: GaussianPosterior { mu, sigma },
        tau,
        nu,
        gram: gram.clone(),
        report,
        log_z,
    })
}

/// `ln Z_EP = Σ_i [ln Ẑ_i + g(cavity_i) - g(cavity_i + site_i)] - ½ ln|I + TK| + ½ μ^T ν̃`.
pub fn log_evidence(gram: &DMatrix<f64>, y: &[f64], eps: f64, tau: &DVector<f64>, nu: &DVector<f64>) -> Result<f64> {
    let (sigma, log_det) = posterior_cov(gram, tau)?;
    let mu = &sigma * nu;
    let mut total = -0.5 * log_det + 0.5 * mu.dot(nu);
    for i in 0..y.len() {
        let tc = 1.0 / sigma[(i, i)] - tau[i];
        if !(tc > 0.0) {
            return Err(Error::InvalidCavity { index: i });
        }
        let nc = mu[i] / sigma[(i, i)] - nu[i];
        let th = tilted(y[i], nc / tc, 1.0 / tc, eps);
        total += th.log_z + g1(tc, nc) - g1(tc + tau[i], nc + nu[i]);
    }
    Ok(total)
}

pub fn gp_ep_fit(x: &DMatrix<f64>, y: &[f64], kernel: &SeKernel, eps: f64, opts: &EpOptions) -> Result<GpFit> {
    gp_ep_fit_gram(&kernel.gram(x), y, eps, opts)
}

impl GpFit {
    /// `K^{-1} μ = (I + T K)^{-1} ν̃`, the weights of the predictive mean.
    pub fn predictive_weights(&self) -> Result<DVector<f64>> {
        let n = self.tau.len();
        let mut m = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += self.tau[i] * self.gram[(i, j)];
            }
        }
        m.lu()
            .solve(&self.nu)
            .ok_or(Error::NotPositiveDefinite("Gaussian posterior"))
    }

    /// Weight-space posterior mean for a linear kernel `K = X X^T` with prior
    /// `w ~ N(0, I)`: `(I + X^T T X)^{-1} X^T ν̃`.
    pub fn linear_weight_mean(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let d = x.ncols();
        let mut a = DMatrix::identity(d, d);
        for i in 0..x.nrows() {
            let r = x.row(i).transpose();
            a.ger(self.tau[i], &r, &r, 1.0);
        }
        a.lu()
            .solve(&(x.transpose() * &self.nu))
            .ok_or(Error::NotPositiveDefinite("weight posterior"))
    }
}

/// `sign(k^T K^{-1} μ)` with ties resolved to `+1`.
pub fn gp_predict_sign(weights: &DVector<f64>, k_star: &DVector<f64>) -> f64 {
    if k_star.dot(weights) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Latent predictive mean at a test input.
pub fn gp_decision(fit_weights: &DVector<f64>, x: &DMatrix<f64>, kernel: &SeKernel, x_star: &RowDVector<f64>) -> f64 {
    kernel.cross(x, x_star).dot(fit_weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_with_breaks, QuadOptions};
    use approx::assert_relative_eq;

    #[test]
    fn uninformative_keeps_prior() {
        // ε close to 1/2 leaves the prior essentially untouched.
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let f = gp_ep_fit_gram(&g, &[1.0, -1.0], 0.4999999, &EpOptions::default()).unwrap();
        assert_relative_eq!(f.posterior.sigma, g, epsilon = 1e-6);
        assert!(f.posterior.mu.norm() < 1e-6);
    }

    #[test]
    fn single_datum_matches_quadrature() {
        let (s, eps) = (1.7, 0.1);
        let g = DMatrix::from_element(1, 1, s);
        let f = gp_ep_fit_gram(&g, &[1.0], eps, &EpOptions::default()).unwrap();
        let w = |x: f64| (-0.5 * x * x / s).exp() / (2.0 * PI * s).sqrt() * if x > 0.0 { 1.0 - eps } else { eps };
        let o = QuadOptions::default();
        let z = integrate_with_breaks(w, &[0.0], &o).unwrap();
        let m = integrate_with_breaks(|x| x * w(x), &[0.0], &o).unwrap() / z;
        let v = integrate_with_breaks(|x| x * x * w(x), &[0.0], &o).unwrap() / z - m * m;
        assert_relative_eq!(f.posterior.mu[0], m, max_relative = 1e-8);
        assert_relative_eq!(f.posterior.sigma[(0, 0)], v, max_relative = 1e-8);
        assert_relative_eq!(f.log_z, z.ln(), max_relative = 1e-8);
    }

    #[test]
    fn predictive_weights_match_direct() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.2, -0.8, -1.1, 0.9, -0.2, -1.3, 0.4]);
        let k = SeKernel::new(1.0, 1.0, 1e-6).unwrap();
        let f = gp_ep_fit(&x, &[1.0, -1.0, 1.0, -1.0], &k, 0.1, &EpOptions::default()).unwrap();
        let direct = k.gram(&x).lu().solve(&f.posterior.mu).unwrap();
        assert_relative_eq!(f.predictive_weights().unwrap(), direct, max_relative = 1e-6);
        assert_eq!(
            gp_predict_sign(&f.predictive_weights().unwrap(), &DVector::zeros(4)),
            1.0
        );
    }
}
