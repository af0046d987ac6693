//! Step likelihood `p(y | f) = ε + (1 - 2ε) Θ(y f)` and the escort moments of
//! its product with a Student-t projection.
//!
//! For a Student-t `St(m, s, v)` along a direction (so `m = <x, μ>` and
//! `s = x^T Σ x`), with `Δ = (1-ε)^t - ε^t` and `z = y m / √s`:
//!
//! * `Z1 = ε^t + Δ F_v(z)`
//! * `Z2 = ε^t + Δ F_{v+2}(z √((v+2)/v))`
//! * `α = Δ f_v(z) / (Z2 √s)`, `r = Z1 / Z2`
//!
//! where `F_v`, `f_v` are the standard Student-t CDF and density.

use crate::error::{Error, Result};
use crate::special::{t_cdf, t_log_cdf, t_log_pdf, t_pdf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLikelihood {
    pub eps: f64,
}

/// Quantities needed for the moment-matching update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMoments {
    pub z: f64,
    pub z1: f64,
    pub z2: f64,
    pub r: f64,
    pub alpha: f64,
}

impl StepLikelihood {
    pub fn new(eps: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&eps) {
            return Err(Error::InvalidParameter(format!(
                "label noise must lie in [0, 0.5), got {eps}"
            )));
        }
        Ok(Self { eps })
    }

    pub fn prob(&self, y: f64, f: f64) -> f64 {
        if y * f > 0.0 {
            1.0 - self.eps
        } else {
            self.eps
        }
    }

    pub fn moments(&self, y: f64, m: f64, s: f64, v: f64, t: f64) -> Result<StepMoments> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::DegenerateMoments("projected variance is not positive"));
        }
        let sd = s.sqrt();
        let z = y * m / sd;
        let z_up = z * ((v + 2.0) / v).sqrt();
        if self.eps == 0.0 {
            let lz1 = t_log_cdf(z, v);
            let lz2 = t_log_cdf(z_up, v + 2.0);
            let r = (lz1 - lz2).exp();
            let alpha = (t_log_pdf(z, v) - lz2).exp() / sd;
            if !(r.is_finite() && alpha.is_finite()) {
                return Err(Error::DegenerateMoments("step moments overflowed"));
            }
            return Ok(StepMoments {
                z,
                z1: lz1.exp(),
                z2: lz2.exp(),
                r,
                alpha,
            });
        }
        let et = self.eps.powf(t);
        let delta = (1.0 - self.eps).powf(t) - et;
        let z1 = et + delta * t_cdf(z, v);
        let z2 = et + delta * t_cdf(z_up, v + 2.0);
        let alpha = delta * t_pdf(z, v) / (z2 * sd);
        Ok(StepMoments {
            z,
            z1,
            z2,
            r: z1 / z2,
            alpha,
        })
    }

    /// Escort-matched mean and variance along one direction.
    pub fn update_1d(&self, y: f64, m: f64, s: f64, v: f64, t: f64) -> Result<(f64, f64, StepMoments)> {
        let mo = self.moments(y, m, s, v, t)?;
        let m_new = m + s * mo.alpha * y;
        let s_new = s * (mo.r - mo.alpha * y * m_new);
        Ok((m_new, s_new, mo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_with_breaks, QuadOptions};
    use crate::special::t_log_norm_const;
    use approx::assert_relative_eq;

    /// Escort of `St(m, s, v) * p(y|f)` by direct quadrature: returns
    /// (mass, mean, second moment) of `p^t`, with `p^t` of a Student-t being
    /// proportional to the escort density.
    fn escort_oracle(lik: &StepLikelihood, y: f64, m: f64, s: f64, v: f64) -> (f64, f64) {
        let t = 1.0 + 2.0 / (v + 1.0);
        let lc = t_log_norm_const(v, 1) - 0.5 * s.ln();
        let dens = |f: f64| (lc - 0.5 * (v + 1.0) * ((f - m) * (f - m) / (s * v)).ln_1p()).exp();
        let w = |f: f64| (dens(f) * lik.prob(y, f)).powf(t);
        let o = QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 20000,
        };
        let z0 = integrate_with_breaks(w, &[0.0], &o).unwrap();
        let z1 = integrate_with_breaks(|f| f * w(f), &[0.0], &o).unwrap();
        let z2 = integrate_with_breaks(|f| f * f * w(f), &[0.0], &o).unwrap();
        let mean = z1 / z0;
        (mean, z2 / z0 - mean * mean)
    }

    #[test]
    fn matches_escort_quadrature() {
        for &(eps, y, m, s, v) in &[
            (0.1, 1.0, 0.3, 0.8, 4.0),
            (0.05, -1.0, 0.7, 2.0, 10.0),
            (0.0, 1.0, -1.2, 0.5, 3.0),
        ] {
            let lik = StepLikelihood::new(eps).unwrap();
            let t = 1.0 + 2.0 / (v + 1.0);
            let (mn, sn, _) = lik.update_1d(y, m, s, v, t).unwrap();
            let (qm, qvar) = escort_oracle(&lik, y, m, s, v);
            // Escort-matched Student-t with dof v has escort variance s_new v/(v+2) * (v+2)/v = s_new.
            assert_relative_eq!(mn, qm, max_relative = 1e-7);
            assert_relative_eq!(sn, qvar, max_relative = 1e-6);
        }
    }

    #[test]
    fn far_tail_is_finite_without_noise() {
        let lik = StepLikelihood::new(0.0).unwrap();
        let (mn, sn, _) = lik.update_1d(1.0, -40.0, 1.0, 1e4, 1.0 + 2.0 / 10001.0).unwrap();
        assert!(mn.is_finite() && sn.is_finite() && sn > 0.0);
        assert!(mn > 0.0);
    }

    #[test]
    fn rejects_bad_noise() {
        assert!(StepLikelihood::new(0.5).is_err());
        assert!(StepLikelihood::new(-0.1).is_err());
    }
}
