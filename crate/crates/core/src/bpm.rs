//! Bayes point machine with a Student-t posterior approximation.
//!
//! The model is `p(y | w, x) = ε + (1 - 2ε) Θ(y <w, x>)` with a Student-t
//! prior on the weights. [`adf_fit`] folds single moment-matching steps over
//! the data once; [`ep_fit`] refines one rank-one site per datum until the
//! sites stop changing.

use crate::ep_core::{run_ep, Direction, EpOptions, EpReport, EpState, Proposal, SiteModel};
use crate::error::{Error, Result};
use crate::likelihood::{StepLikelihood, StepMoments};
use crate::linalg::symmetrize;
use crate::student_t::StudentT;
use nalgebra::{DMatrix, DVector};

/// One moment-matching step of `posterior * p(y | w, x)`.
pub fn adf_step(
    posterior: &StudentT,
    x: &DVector<f64>,
    y: f64,
    lik: &StepLikelihood,
) -> Result<(StudentT, StepMoments)> {
    if x.len() != posterior.dim() {
        return Err(Error::DimensionMismatch {
            expected: posterior.dim(),
            got: x.len(),
        });
    }
    let sx = posterior.sigma() * x;
    let s = x.dot(&sx);
    let m = x.dot(posterior.mu());
    let t = posterior.deform_index().value();
    let mo = lik.moments(y, m, s, posterior.dof(), t)?;
    let mu = posterior.mu() + &sx * (mo.alpha * y);
    let c = mo.alpha * y * x.dot(&mu) / s;
    let mut sigma = posterior.sigma() * mo.r;
    sigma.ger(-c, &sx, &sx, 1.0);
    symmetrize(&mut sigma);
    let next = StudentT::new(mu, sigma, posterior.dof())
        .map_err(|_| Error::DegenerateMoments("updated scale matrix is not positive definite"))?;
    Ok((next, mo))
}

/// Sequential ADF over the rows of `x` in the given order.
pub fn adf_fit(
    prior: &StudentT,
    x: &DMatrix<f64>,
    y: &[f64],
    lik: &StepLikelihood,
    order: &[usize],
) -> Result<StudentT> {
    check_data(prior, x, y)?;
    let mut post = prior.clone();
    for &i in order {
        let xi = x.row(i).transpose();
        post = adf_step(&post, &xi, y[i], lik)?.0;
    }
    Ok(post)
}

fn check_data(prior: &StudentT, x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.ncols() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            got: x.ncols(),
        });
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter("labels must be +1 or -1".into()));
    }
    Ok(())
}

/// EP site model for the BPM.
///
/// The moment-matched update `ΨK' - ΨK_c` is not exactly rank-one (the whole
/// scale is multiplied by `r`), so the site change is projected onto
/// `x x^T` in the metric of the cavity scale: with `u = Σ_c x` and
/// `s = x^T Σ_c x`, `τ = u^T ΔP u / s^2` and `ν = u^T Δh / s`.
pub struct BpmModel<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a [f64],
    pub lik: StepLikelihood,
}

impl BpmModel<'_> {
    fn row(&self, j: usize) -> DVector<f64> {
        self.x.row(j).transpose()
    }
}

impl SiteModel for BpmModel<'_> {
    fn propose(&self, state: &EpState, j: usize) -> Result<Proposal> {
        let cav = state.cavity_distribution(j)?;
        let cav_nat = state.cavity(j);
        let xj = self.row(j);
        let new = match adf_step(&cav, &xj, self.y[j], &self.lik) {
            Ok((d, _)) => d,
            Err(Error::DegenerateMoments(_)) => return Ok(Proposal::Skip),
            Err(e) => return Err(e),
        };
        let diff = &new.to_natural() - &cav_nat;
        let u = cav.sigma() * &xj;
        let s = xj.dot(&u);
        let tau = (&diff.psi_k * &u).dot(&u) / (s * s);
        let nu = u.dot(&diff.psi_k_mu) / s;
        Ok(Proposal::Update { tau, nu })
    }

    fn site_z1(&self, state: &EpState, j: usize) -> Result<f64> {
        let cav = state.cavity_distribution(j)?;
        let xj = self.row(j);
        let sx = cav.sigma() * &xj;
        let t = state.deform_index().value();
        Ok(self
            .lik
            .moments(self.y[j], xj.dot(cav.mu()), xj.dot(&sx), cav.dof(), t)?
            .z1)
    }
}

/// Converged (or stopped) EP fit.
#[derive(Debug, Clone)]
pub struct BpmFit {
    pub state: EpState,
    pub posterior: StudentT,
    pub report: EpReport,
}

impl BpmFit {
    pub fn marginal_likelihood(&self) -> Result<f64> {
        self.state.marginal_likelihood()
    }
}

pub fn ep_fit(prior: &StudentT, x: &DMatrix<f64>, y: &[f64], lik: &StepLikelihood, opts: &EpOptions) -> Result<BpmFit> {
    check_data(prior, x, y)?;
    let dirs = (0..x.nrows())
        .map(|i| Direction::Vector(x.row(i).transpose()))
        .collect();
    let mut state = EpState::new(prior.clone(), dirs)?;
    let model = BpmModel { x, y, lik: *lik };
    let report = run_ep(&mut state, &model, opts)?;
    let posterior = state.posterior()?;
    Ok(BpmFit {
        state,
        posterior,
        report,
    })
}

/// `sign(<w, x>)` with ties resolved to `+1`.
pub fn predict(w: &DVector<f64>, x: &DVector<f64>) -> f64 {
    if w.dot(x) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Angle of a 2-D boundary normal, in radians.
pub fn normal_angle(w: &DVector<f64>) -> f64 {
    w[1].atan2(w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_2d, QuadOptions};
    use approx::assert_relative_eq;

    fn prior2() -> StudentT {
        StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2), 10.0).unwrap()
    }

    #[test]
    fn uninformative_likelihood_keeps_posterior() {
        let lik = StepLikelihood { eps: 0.5 };
        let (p, mo) = adf_step(&prior2(), &DVector::from_vec(vec![1.0, 0.3]), 1.0, &lik).unwrap();
        assert!(mo.alpha.abs() < 1e-15);
        assert_relative_eq!(mo.r, 1.0);
        assert_relative_eq!(p.sigma(), prior2().sigma());
    }

    #[test]
    fn symmetric_z1() {
        let lik = StepLikelihood::new(0.1).unwrap();
        let (_, mo) = adf_step(&prior2(), &DVector::from_vec(vec![1.0, 0.0]), 1.0, &lik).unwrap();
        let t = prior2().deform_index().value();
        assert_relative_eq!(
            mo.z1,
            0.1f64.powf(t) + (0.9f64.powf(t) - 0.1f64.powf(t)) / 2.0,
            max_relative = 1e-14
        );
    }

    /// Escort moments of `prior * lik` by rotating so the step edge is an axis.
    #[test]
    fn adf_step_matches_escort_quadrature() {
        let lik = StepLikelihood::new(0.1).unwrap();
        let p = prior2();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let (post, _) = adf_step(&p, &x, 1.0, &lik).unwrap();
        let t = p.deform_index().value();
        let w = |a: f64, b: f64| {
            let v = DVector::from_vec(vec![a, b]);
            (p.density(&v) * lik.prob(1.0, a)).powf(t)
        };
        let o = QuadOptions {
            abs_tol: 1e-11,
            rel_tol: 1e-9,
            max_intervals: 4000,
        };
        let inf = f64::INFINITY;
        let mut m = [0.0; 6];
        for (lo, hi) in [(-inf, 0.0), (0.0, inf)] {
            m[0] += integrate_2d(w, (lo, hi), (-inf, inf), &o).unwrap();
            m[1] += integrate_2d(|a, b| a * w(a, b), (lo, hi), (-inf, inf), &o).unwrap();
            m[2] += integrate_2d(|a, b| a * a * w(a, b), (lo, hi), (-inf, inf), &o).unwrap();
            m[3] += integrate_2d(|a, b| b * b * w(a, b), (lo, hi), (-inf, inf), &o).unwrap();
        }
        let mean = m[1] / m[0];
        assert_relative_eq!(post.mu()[0], mean, max_relative = 1e-6);
        assert!(post.mu()[1].abs() < 1e-12);
        assert_relative_eq!(post.sigma()[(0, 0)], m[2] / m[0] - mean * mean, max_relative = 1e-6);
        assert_relative_eq!(post.sigma()[(1, 1)], m[3] / m[0], max_relative = 1e-6);
    }

    #[test]
    fn single_datum_ep_is_adf_in_one_dimension() {
        let prior = StudentT::new(DVector::zeros(1), DMatrix::from_element(1, 1, 1.3), 5.0).unwrap();
        let x = DMatrix::from_element(1, 1, 0.8);
        let lik = StepLikelihood::new(0.1).unwrap();
        let adf = adf_fit(&prior, &x, &[1.0], &lik, &[0]).unwrap();
        let ep = ep_fit(&prior, &x, &[1.0], &lik, &EpOptions::default()).unwrap();
        assert!(ep.report.converged());
        assert_relative_eq!(ep.posterior.mu(), adf.mu(), max_relative = 1e-10);
        assert_relative_eq!(ep.posterior.sigma(), adf.sigma(), max_relative = 1e-10);
    }

    #[test]
    fn predict_ties_positive() {
        let w = DVector::from_vec(vec![1.0, -1.0]);
        assert_eq!(predict(&w, &DVector::from_vec(vec![1.0, 1.0])), 1.0);
        assert_eq!(predict(&w, &w), 1.0);
        assert_eq!(predict(&w, &DVector::from_vec(vec![-1.0, 0.0])), -1.0);
    }

    #[test]
    fn rejects_bad_labels() {
        let x = DMatrix::from_element(1, 2, 1.0);
        let lik = StepLikelihood::new(0.1).unwrap();
        assert!(adf_fit(&prior2(), &x, &[0.0], &lik, &[0]).is_err());
    }
}
