//! Multivariate Student-t as a member of the t-exponential family.
//!
//! With `t = 1 + 2/(v + k)` the density is `exp_t(<Φ(x), θ> - g_t(θ))` for the
//! sufficient statistics `Φ(x) = (x, x x^T)`. Natural parameters are stored in
//! the form `(ΨK, ΨKμ)` with `K = (vΣ)^{-1}` and
//! `Ψ = (c / |Σ|^{1/2})^{1-t}`, because sums and differences of these two
//! quantities are what EP manipulates.

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_square, cholesky, log_det_chol, spd_inverse_logdet, symmetrize};
use crate::qalgebra::{exp_t, ln_t, DeformIndex};
use crate::special::{t_cdf, t_log_norm_const};
use nalgebra::{DMatrix, DVector};
use std::ops::{Add, Sub};

/// Natural parameters `(ΨK, ΨKμ)`; the t-exponential parameters are
/// `θ1 = -2ΨKμ/(1-t)` and `θ2 = ΨK/(1-t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    pub psi_k: DMatrix<f64>,
    pub psi_k_mu: DVector<f64>,
}

impl NaturalParams {
    pub fn new(psi_k: DMatrix<f64>, psi_k_mu: DVector<f64>) -> Result<Self> {
        check_square(&psi_k, psi_k_mu.len())?;
        Ok(Self { psi_k, psi_k_mu })
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            psi_k: DMatrix::zeros(k, k),
            psi_k_mu: DVector::zeros(k),
        }
    }

    pub fn dim(&self) -> usize {
        self.psi_k_mu.len()
    }

    pub fn theta1(&self, t: DeformIndex) -> DVector<f64> {
        &self.psi_k_mu * (-2.0 / t.one_minus())
    }

    pub fn theta2(&self, t: DeformIndex) -> DMatrix<f64> {
        &self.psi_k / t.one_minus()
    }

    /// `<Φ(x), θ>` for a point `x`.
    pub fn inner_stat(&self, x: &DVector<f64>, t: DeformIndex) -> f64 {
        let quad = (&self.psi_k * x).dot(x);
        (quad - 2.0 * self.psi_k_mu.dot(x)) / t.one_minus()
    }

    /// `<η, θ>` for expected statistics `η = (m, S)` with `S = E[x x^T]`.
    pub fn inner_expect(&self, m: &DVector<f64>, s: &DMatrix<f64>, t: DeformIndex) -> f64 {
        let tr = self.psi_k.component_mul(s).sum();
        (tr - 2.0 * self.psi_k_mu.dot(m)) / t.one_minus()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            psi_k: &self.psi_k * a,
            psi_k_mu: &self.psi_k_mu * a,
        }
    }
}

impl Add for &NaturalParams {
    type Output = NaturalParams;
    fn add(self, o: &NaturalParams) -> NaturalParams {
        NaturalParams {
            psi_k: &self.psi_k + &o.psi_k,
            psi_k_mu: &self.psi_k_mu + &o.psi_k_mu,
        }
    }
}

impl Sub for &NaturalParams {
    type Output = NaturalParams;
    fn sub(self, o: &NaturalParams) -> NaturalParams {
        NaturalParams {
            psi_k: &self.psi_k - &o.psi_k,
            psi_k_mu: &self.psi_k_mu - &o.psi_k_mu,
        }
    }
}

/// Scale matrix and normalizer recovered from `ΨK`.
#[derive(Debug, Clone)]
pub struct RecoveredScale {
    pub sigma: DMatrix<f64>,
    pub psi: f64,
    pub ln_psi: f64,
    pub log_det_sigma: f64,
}

/// `ln Ψ` of the `k`-variate Student-t whose `ΨK` has log-determinant
/// `log_det_psi_k`.
///
/// From `|ΨK| = Ψ^k v^{-k} |Σ|^{-1}` and `Ψ = (c |Σ|^{-1/2})^{1-t}` one gets
/// `ln|Σ| (1 + k(1-t)/2) = k(1-t) ln c - k ln v - ln|ΨK|`.
pub fn ln_psi_from_log_det(log_det_psi_k: f64, k: usize, v: f64) -> Result<f64> {
    let (ln_psi, _) = ln_psi_and_log_det_sigma(log_det_psi_k, k, v)?;
    Ok(ln_psi)
}

fn ln_psi_and_log_det_sigma(log_det_psi_k: f64, k: usize, v: f64) -> Result<(f64, f64)> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidDof(v));
    }
    let kf = k as f64;
    let a = DeformIndex::from_dof(v, k)?.one_minus();
    let denom = 1.0 + kf * a / 2.0;
    if denom.abs() < 1e-12 {
        return Err(Error::ScaleRecoverySingular { k });
    }
    let log_c = t_log_norm_const(v, k);
    let log_det_sigma = (kf * a * log_c - kf * v.ln() - log_det_psi_k) / denom;
    Ok((a * (log_c - 0.5 * log_det_sigma), log_det_sigma))
}

/// Recover `(Σ, Ψ)` from `ΨK` for dof `v`, given the log normalizing constant
/// `log_c = ln Γ((v+k)/2) - ln Γ(v/2) - (k/2) ln(πv)`.
pub fn recover_scale(psi_k: &DMatrix<f64>, v: f64, log_c: f64) -> Result<RecoveredScale> {
    let k = psi_k.nrows();
    check_square(psi_k, k)?;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidDof(v));
    }
    let (inv, ld) = spd_inverse_logdet(psi_k, "ΨK")?;
    let kf = k as f64;
    let a = DeformIndex::from_dof(v, k)?.one_minus();
    let denom = 1.0 + kf * a / 2.0;
    if denom.abs() < 1e-12 {
        return Err(Error::ScaleRecoverySingular { k });
    }
    let log_det_sigma = (kf * a * log_c - kf * v.ln() - ld) / denom;
    let ln_psi = a * (log_c - 0.5 * log_det_sigma);
    let psi = ln_psi.exp();
    let mut sigma = inv * (psi / v);
    symmetrize(&mut sigma);
    Ok(RecoveredScale {
        sigma,
        psi,
        ln_psi,
        log_det_sigma,
    })
}

/// `g_t = (1 - Ψ - μ^T ΨKμ)/(1 - t)` from `ln Ψ` and the quadratic term.
pub fn log_partition_from_parts(ln_psi: f64, quad: f64, t: DeformIndex) -> f64 {
    (-ln_psi.exp_m1() - quad) / t.one_minus()
}

/// Exponent `1 - k(t - 1)/2 = v/(v + k)` of the closed-form integral.
pub fn integral_exponent(t: DeformIndex, k: usize) -> f64 {
    1.0 + k as f64 * t.one_minus() / 2.0
}

/// `k`-variate Student-t `St(μ, Σ, v)`.
#[derive(Debug, Clone)]
pub struct StudentT {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    v: f64,
    sigma_inv: DMatrix<f64>,
    log_det_sigma: f64,
}

impl StudentT {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, v: f64) -> Result<Self> {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidDof(v));
        }
        check_square(&sigma, mu.len())?;
        let (sigma_inv, log_det_sigma) = spd_inverse_logdet(&sigma, "Σ")?;
        Ok(Self {
            mu,
            sigma,
            v,
            sigma_inv,
            log_det_sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn dof(&self) -> f64 {
        self.v
    }
    pub fn log_det_sigma(&self) -> f64 {
        self.log_det_sigma
    }
    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    pub fn deform_index(&self) -> DeformIndex {
        DeformIndex::from_dof(self.v, self.dim()).expect("dof validated at construction")
    }

    pub fn log_norm_const(&self) -> f64 {
        t_log_norm_const(self.v, self.dim())
    }

    pub fn ln_psi(&self) -> f64 {
        self.deform_index().one_minus() * (self.log_norm_const() - 0.5 * self.log_det_sigma)
    }

    pub fn psi(&self) -> f64 {
        self.ln_psi().exp()
    }

    /// `K = (vΣ)^{-1}`.
    pub fn k_matrix(&self) -> DMatrix<f64> {
        &self.sigma_inv / self.v
    }

    fn mahalanobis(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mu;
        (&self.sigma_inv * &d).dot(&d)
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let k = self.dim() as f64;
        self.log_norm_const() - 0.5 * self.log_det_sigma - 0.5 * (self.v + k) * (self.mahalanobis(x) / self.v).ln_1p()
    }

    pub fn density(&self, x: &DVector<f64>) -> f64 {
        self.log_density(x).exp()
    }

    pub fn to_natural(&self) -> NaturalParams {
        let mut psi_k = self.k_matrix() * self.psi();
        symmetrize(&mut psi_k);
        let psi_k_mu = &psi_k * &self.mu;
        NaturalParams { psi_k, psi_k_mu }
    }

    pub fn from_natural(n: &NaturalParams, v: f64) -> Result<Self> {
        let k = n.dim();
        let rec = recover_scale(&n.psi_k, v, t_log_norm_const(v, k))?;
        let mu = cholesky(&n.psi_k, "ΨK")?.solve(&n.psi_k_mu);
        Self::new(mu, rec.sigma, v)
    }

    /// `g_t(θ)`.
    pub fn log_partition(&self) -> f64 {
        let n = self.to_natural();
        log_partition_from_parts(self.ln_psi(), self.mu.dot(&n.psi_k_mu), self.deform_index())
    }

    /// Escort distribution `St(μ, vΣ/(v+2), v+2)`.
    pub fn escort(&self) -> StudentT {
        let s = &self.sigma * (self.v / (self.v + 2.0));
        StudentT::new(self.mu.clone(), s, self.v + 2.0).expect("escort of a valid Student-t is valid")
    }

    /// Escort expectation of the sufficient statistics: `(μ, Σ + μμ^T)`.
    pub fn expected_stats(&self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mu.clone(), &self.sigma + &self.mu * self.mu.transpose())
    }

    /// Ordinary covariance `vΣ/(v-2)`, defined for `v > 2`.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        (self.v > 2.0).then(|| &self.sigma * (self.v / (self.v - 2.0)))
    }

    /// Marginal over the listed coordinates.
    pub fn marginal(&self, idx: &[usize]) -> Result<StudentT> {
        let mu = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mu[i]));
        let sigma = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.sigma[(idx[r], idx[c])]);
        StudentT::new(mu, sigma, self.v)
    }

    /// Conditional of the remaining coordinates given `x[idx] = x_obs`.
    pub fn conditional(&self, idx: &[usize], x_obs: &DVector<f64>) -> Result<StudentT> {
        check_len(x_obs, idx.len())?;
        let k = self.dim();
        let rest: Vec<usize> = (0..k).filter(|i| !idx.contains(i)).collect();
        let s22 = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.sigma[(idx[r], idx[c])]);
        let s12 = DMatrix::from_fn(rest.len(), idx.len(), |r, c| self.sigma[(rest[r], idx[c])]);
        let s11 = DMatrix::from_fn(rest.len(), rest.len(), |r, c| self.sigma[(rest[r], rest[c])]);
        let d2 = x_obs - DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mu[i]));
        let ch = cholesky(&s22, "Σ22")?;
        let w = ch.solve(&d2);
        let maha = d2.dot(&w);
        let mu1 = DVector::from_iterator(rest.len(), rest.iter().map(|&i| self.mu[i])) + &s12 * w;
        let schur = &s11 - &s12 * ch.solve(&s12.transpose());
        let k2 = idx.len() as f64;
        let mut sigma = schur * ((self.v + maha) / (self.v + k2));
        symmetrize(&mut sigma);
        StudentT::new(mu1, sigma, self.v + k2)
    }
}

/// `exp_t(<Φ(x), θ> - g)` for natural parameters of a `k`-variate Student-t
/// with dof `v`.
pub fn density_exp_form(n: &NaturalParams, v: f64, g: f64, x: &DVector<f64>) -> Result<f64> {
    let t = DeformIndex::from_dof(v, n.dim())?;
    exp_t(n.inner_stat(x, t) - g, t.value())
}

/// `∫ exp_t(<Φ(x), θ> - g) dx = exp_t((g_t(θ) - g)/Ψ)^{1 - k(t-1)/2}`.
pub fn t_integral(n: &NaturalParams, v: f64, g: f64) -> Result<f64> {
    let d = StudentT::from_natural(n, v)?;
    let t = d.deform_index();
    let e = integral_exponent(t, d.dim());
    let base = exp_t((d.log_partition() - g) / d.psi(), t.value())?;
    Ok(base.powf(e))
}

/// t-divergence `∫ q (ln_t p - ln_t p̃)` with `q` the escort of `p`.
///
/// Both arguments must share dimension and dof, so the integrand is affine in
/// the sufficient statistics and the integral is a Bregman divergence of `g_t`.
pub fn t_divergence(p: &StudentT, p_tilde: &StudentT) -> Result<f64> {
    if p.dim() != p_tilde.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: p_tilde.dim(),
        });
    }
    let t = p.deform_index();
    let t2 = p_tilde.deform_index();
    if (t.value() - t2.value()).abs() > 1e-14 {
        return Err(Error::DeformMismatch(t.value(), t2.value()));
    }
    let (m, s) = p.expected_stats();
    let diff = &p.to_natural() - &p_tilde.to_natural();
    Ok(diff.inner_expect(&m, &s, t) - p.log_partition() + p_tilde.log_partition())
}

/// `ln_t` of a Student-t density at `x`, using the distribution's own `t`.
pub fn ln_t_density(p: &StudentT, x: &DVector<f64>) -> Result<f64> {
    ln_t(p.density(x), p.deform_index().value())
}

/// CDF of the standard univariate Student-t with `v` dof.
pub fn cdf_1d(z: f64, v: f64) -> f64 {
    t_cdf(z, v)
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn log_det(m: &DMatrix<f64>) -> Result<f64> {
    Ok(log_det_chol(&cholesky(m, "matrix")?))
}
