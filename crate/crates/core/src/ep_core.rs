//! EP bookkeeping for t-factorized approximations with rank-one sites.
//!
//! The approximation keeps the prior in scale form `St(μ0, Σ0, v)` and every
//! site as a pair `(τ_j, ν_j)` acting along a fixed direction `d_j`:
//!
//! * `ΨK = Ψ0 K0 + Σ_j τ_j d_j d_j^T`
//! * `ΨKμ = Ψ0 K0 μ0 + Σ_j ν_j d_j`
//!
//! The inverse `A = (ΨK)^{-1}` and `ln|ΨK|` are cached and updated with
//! Sherman-Morrison steps; [`EpState::refresh`] recomputes them through
//! `A = L (cI + L^T B L)^{-1} L^T` with `Σ0 = L L^T`, `c = Ψ0/v` and
//! `B = Σ_j τ_j d_j d_j^T`, which avoids inverting `Σ0` directly.

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det_chol, rank_one_inverse_update, rank_one_inverse_update_axis, symmetrize};
use crate::qalgebra::{exp_t, ln_t, DeformIndex};
use crate::student_t::{integral_exponent, ln_psi_from_log_det, log_partition_from_parts, NaturalParams, StudentT};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Direction a rank-one site acts along.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    Vector(DVector<f64>),
    Axis(usize),
}

impl Direction {
    fn dot(&self, x: &DVector<f64>) -> f64 {
        match self {
            Direction::Vector(d) => d.dot(x),
            Direction::Axis(i) => x[*i],
        }
    }

    fn quad(&self, a: &DMatrix<f64>) -> f64 {
        match self {
            Direction::Vector(d) => (a * d).dot(d),
            Direction::Axis(i) => a[(*i, *i)],
        }
    }

    fn apply(&self, a: &DMatrix<f64>) -> DVector<f64> {
        match self {
            Direction::Vector(d) => a * d,
            Direction::Axis(i) => a.column(*i).clone_owned(),
        }
    }

    fn add_scaled_to(&self, x: &mut DVector<f64>, s: f64) {
        match self {
            Direction::Vector(d) => x.axpy(s, d, 1.0),
            Direction::Axis(i) => x[*i] += s,
        }
    }

    fn add_outer_to(&self, m: &mut DMatrix<f64>, s: f64) {
        match self {
            Direction::Vector(d) => m.ger(s, d, d, 1.0),
            Direction::Axis(i) => m[(*i, *i)] += s,
        }
    }

    pub fn to_vector(&self, k: usize) -> DVector<f64> {
        match self {
            Direction::Vector(d) => d.clone(),
            Direction::Axis(i) => {
                let mut e = DVector::zeros(k);
                e[*i] = 1.0;
                e
            }
        }
    }
}

/// Site parameters in `(ΨK, ΨKμ)` units along the site direction, plus the
/// deformed log normalizer `ln_t C̃` once computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub tau: f64,
    pub nu: f64,
    pub log_t_c: f64,
}

impl Site {
    pub fn new(tau: f64, nu: f64) -> Self {
        Self { tau, nu, log_t_c: 0.0 }
    }
}

impl Default for Site {
    fn default() -> Self {
        Self::new(0.0, 0.0)
    }
}

/// Cavity summary along a site direction, in `ΨK` units: `tau` is
/// `1 / (d^T A_c d)` and `nu / tau` is the cavity mean along `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityProjection {
    pub tau: f64,
    pub nu: f64,
}

impl CavityProjection {
    pub fn mean(&self) -> f64 {
        self.nu / self.tau
    }
}

#[derive(Debug, Clone)]
pub struct EpState {
    v: f64,
    t: DeformIndex,
    prior: StudentT,
    prior_natural: NaturalParams,
    prior_chol: DMatrix<f64>,
    prior_c: f64,
    directions: Vec<Direction>,
    sites: Vec<Site>,
    h: DVector<f64>,
    inv: DMatrix<f64>,
    log_det: f64,
}

impl EpState {
    pub fn new(prior: StudentT, directions: Vec<Direction>) -> Result<Self> {
        let k = prior.dim();
        for d in &directions {
            match d {
                Direction::Vector(x) if x.len() != k => {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        got: x.len(),
                    })
                }
                Direction::Axis(i) if *i >= k => {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        got: *i + 1,
                    })
                }
                _ => {}
            }
        }
        let v = prior.dof();
        let t = prior.deform_index();
        let prior_natural = prior.to_natural();
        let prior_chol = cholesky(prior.sigma(), "prior scale")?.l();
        let prior_c = prior.psi() / v;
        let n = directions.len();
        let mut s = Self {
            v,
            t,
            prior,
            h: prior_natural.psi_k_mu.clone(),
            prior_natural,
            prior_chol,
            prior_c,
            directions,
            sites: vec![Site::default(); n],
            inv: DMatrix::zeros(k, k),
            log_det: 0.0,
        };
        s.refresh()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }
    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }
    pub fn dof(&self) -> f64 {
        self.v
    }
    pub fn deform_index(&self) -> DeformIndex {
        self.t
    }
    pub fn prior(&self) -> &StudentT {
        &self.prior
    }
    pub fn prior_natural(&self) -> &NaturalParams {
        &self.prior_natural
    }
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }
    pub fn site(&self, j: usize) -> Site {
        self.sites[j]
    }
    pub fn direction(&self, j: usize) -> &Direction {
        &self.directions[j]
    }
    /// Cached `(ΨK)^{-1}`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }
    /// Cached `ln|ΨK|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }
    pub fn psi_k_mu(&self) -> &DVector<f64> {
        &self.h
    }

    /// Dense `(ΨK, ΨKμ)` of the current approximation.
    pub fn natural(&self) -> NaturalParams {
        let mut p = self.prior_natural.psi_k.clone();
        for (d, s) in self.directions.iter().zip(&self.sites) {
            d.add_outer_to(&mut p, s.tau);
        }
        NaturalParams {
            psi_k: p,
            psi_k_mu: self.h.clone(),
        }
    }

    /// Natural parameters contributed by site `j` alone.
    pub fn site_natural(&self, j: usize) -> NaturalParams {
        let k = self.dim();
        let mut n = NaturalParams::zeros(k);
        self.directions[j].add_outer_to(&mut n.psi_k, self.sites[j].tau);
        self.directions[j].add_scaled_to(&mut n.psi_k_mu, self.sites[j].nu);
        n
    }

    /// Recompute `A` and `ln|ΨK|` from the prior and sites.
    pub fn refresh(&mut self) -> Result<()> {
        let k = self.dim();
        let l = &self.prior_chol;
        let mut b = DMatrix::zeros(k, k);
        for (d, s) in self.directions.iter().zip(&self.sites) {
            d.add_outer_to(&mut b, s.tau);
        }
        let mut m = l.transpose() * &b * l;
        for i in 0..k {
            m[(i, i)] += self.prior_c;
        }
        symmetrize(&mut m);
        let mc = cholesky(&m, "approximation ΨK")?;
        let log_det_l: f64 = l.diagonal().iter().map(|x| x.ln()).sum();
        self.log_det = log_det_chol(&mc) - 2.0 * log_det_l;
        let w = mc.solve(&l.transpose());
        let mut inv = l * w;
        symmetrize(&mut inv);
        self.inv = inv;
        let mut h = self.prior_natural.psi_k_mu.clone();
        for (d, s) in self.directions.iter().zip(&self.sites) {
            d.add_scaled_to(&mut h, s.nu);
        }
        self.h = h;
        Ok(())
    }

    pub fn ln_psi(&self) -> f64 {
        ln_psi_from_log_det(self.log_det, self.dim(), self.v).expect("dof validated at construction")
    }

    pub fn psi(&self) -> f64 {
        self.ln_psi().exp()
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.inv * &self.h
    }

    /// Current approximation `St(μ, Σ, v)` with `Σ = (Ψ/v) A`.
    pub fn posterior(&self) -> Result<StudentT> {
        let mut sigma = &self.inv * (self.psi() / self.v);
        symmetrize(&mut sigma);
        StudentT::new(self.mean(), sigma, self.v)
    }

    /// `g_t` of the current approximation.
    pub fn log_partition(&self) -> f64 {
        let quad = self.mean().dot(&self.h);
        log_partition_from_parts(self.ln_psi(), quad, self.t)
    }

    pub fn prior_log_partition(&self) -> f64 {
        self.prior.log_partition()
    }

    /// Dense cavity natural parameters (global minus site `j`).
    pub fn cavity(&self, j: usize) -> NaturalParams {
        &self.natural() - &self.site_natural(j)
    }

    fn removal_factor(&self, j: usize) -> Result<(f64, f64)> {
        let s_a = self.directions[j].quad(&self.inv);
        let den = 1.0 - self.sites[j].tau * s_a;
        if !(den > 0.0) || !(s_a > 0.0) {
            return Err(Error::InvalidCavity { index: j });
        }
        Ok((s_a, den))
    }

    /// Cavity projected on the direction of site `j`.
    pub fn cavity_projection(&self, j: usize) -> Result<CavityProjection> {
        let (s_a, _) = self.removal_factor(j)?;
        let m = self.directions[j].dot(&self.mean());
        let site = self.sites[j];
        let tau = 1.0 / s_a - site.tau;
        if !(tau > 0.0) {
            return Err(Error::InvalidCavity { index: j });
        }
        Ok(CavityProjection {
            tau,
            nu: m / s_a - site.nu,
        })
    }

    /// Cavity inverse `A_c` and `ln|ΨK_c|` via Sherman-Morrison.
    pub fn cavity_inverse(&self, j: usize) -> Result<(DMatrix<f64>, f64)> {
        let (_, den) = self.removal_factor(j)?;
        let a = self.directions[j].apply(&self.inv);
        let mut ac = self.inv.clone();
        ac.ger(self.sites[j].tau / den, &a, &a, 1.0);
        Ok((ac, self.log_det + den.ln()))
    }

    /// Cavity as a Student-t.
    pub fn cavity_distribution(&self, j: usize) -> Result<StudentT> {
        let (ac, ld) = self.cavity_inverse(j)?;
        let ln_psi = ln_psi_from_log_det(ld, self.dim(), self.v)?;
        let mut h = self.h.clone();
        self.directions[j].add_scaled_to(&mut h, -self.sites[j].nu);
        let mu = &ac * h;
        let mut sigma = ac * (ln_psi.exp() / self.v);
        symmetrize(&mut sigma);
        StudentT::new(mu, sigma, self.v)
    }

    /// `g_t` of the cavity, from scalars of the cached inverse.
    pub fn cavity_log_partition(&self, j: usize) -> Result<f64> {
        let (s_a, den) = self.removal_factor(j)?;
        let site = self.sites[j];
        let mu = self.mean();
        let m = self.directions[j].dot(&mu);
        let q = mu.dot(&self.h);
        let r = m - site.nu * s_a;
        let quad = q - 2.0 * site.nu * m + site.nu * site.nu * s_a + site.tau * r * r / den;
        let ln_psi = ln_psi_from_log_det(self.log_det + den.ln(), self.dim(), self.v)?;
        Ok(log_partition_from_parts(ln_psi, quad, self.t))
    }

    /// Replace site `j`. Returns `false`, leaving the state untouched, when the
    /// result would not be positive definite.
    pub fn set_site(&mut self, j: usize, tau: f64, nu: f64) -> bool {
        let old = self.sites[j];
        let dt = tau - old.tau;
        let dn = nu - old.nu;
        let step = match &self.directions[j] {
            Direction::Vector(d) => rank_one_inverse_update(&mut self.inv, d, dt),
            Direction::Axis(i) => rank_one_inverse_update_axis(&mut self.inv, *i, dt),
        };
        match step {
            Some(dl) => {
                self.log_det += dl;
                self.directions[j].add_scaled_to(&mut self.h, dn);
                self.sites[j] = Site::new(tau, nu);
                true
            }
            None => false,
        }
    }

    /// `ln_t C̃_j` of site `j` at the current approximation; see [`site_normalizer`].
    pub fn site_normalizer(&self, j: usize, z1: f64) -> Result<f64> {
        let e = integral_exponent(self.t, self.dim());
        site_normalizer(
            z1,
            self.log_partition(),
            self.cavity_log_partition(j)?,
            self.psi(),
            self.t,
            e,
        )
    }

    /// `Σ0^{-1} μ`, computed as `L^{-T} M^{-1} L^T ΨKμ` with `M = cI + L^T B L`.
    pub fn prior_scale_solve_mean(&self) -> Result<DVector<f64>> {
        let k = self.dim();
        let l = &self.prior_chol;
        let mut b = DMatrix::zeros(k, k);
        for (d, s) in self.directions.iter().zip(&self.sites) {
            d.add_outer_to(&mut b, s.tau);
        }
        let mut m = l.transpose() * &b * l;
        for i in 0..k {
            m[(i, i)] += self.prior_c;
        }
        symmetrize(&mut m);
        let z = cholesky(&m, "approximation ΨK")?.solve(&(l.transpose() * &self.h));
        l.transpose()
            .solve_upper_triangular(&z)
            .ok_or(Error::NotPositiveDefinite("prior scale"))
    }

    /// `Z_EP = exp_t((Σ_j ln_t C̃_j + g_t(θ) - g_t(θ0)) / Ψ)^e`.
    pub fn marginal_likelihood(&self) -> Result<f64> {
        let e = integral_exponent(self.t, self.dim());
        exp_t(self.log_t_evidence()?, self.t.value()).map(|z| z.powf(e))
    }

    /// `ln_t Z_EP^{1/e} = (Σ_j ln_t C̃_j + g_t(θ) - g_t(θ0)) / Ψ`.
    pub fn log_t_evidence(&self) -> Result<f64> {
        let mut s = 0.0;
        for (j, site) in self.sites.iter().enumerate() {
            if !site.log_t_c.is_finite() {
                return Err(Error::InvalidCavity { index: j });
            }
            s += site.log_t_c;
        }
        Ok((s + self.log_partition() - self.prior_log_partition()) / self.psi())
    }

    pub fn set_site_normalizer(&mut self, j: usize, log_t_c: f64) {
        self.sites[j].log_t_c = log_t_c;
    }
}

/// Solve `ln_t C̃ = Ψ ln_t(Z1^{1/e}) - g_new + g_cavity` for the deformed log
/// normalizer of a site, where `e = 1 - k(t-1)/2` is the exponent of the
/// closed-form integral in the approximation's dimension.
pub fn site_normalizer(z1: f64, g_new: f64, g_cavity: f64, psi: f64, t: DeformIndex, e: f64) -> Result<f64> {
    if !(z1 > 0.0) {
        return Err(Error::DegenerateMoments("site normalizer needs Z1 > 0"));
    }
    let lt = ln_t(z1.powf(1.0 / e), t.value())?;
    Ok(psi * lt - g_new + g_cavity)
}

/// Site contribution `θ_new - θ_cavity`.
pub fn exclude(new_global: &NaturalParams, cavity: &NaturalParams) -> NaturalParams {
    new_global - cavity
}

/// Outcome of the moment-matching step for one site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proposal {
    Update { tau: f64, nu: f64 },
    Skip,
}

/// A likelihood whose sites can be refined by EP.
pub trait SiteModel {
    /// New site parameters for site `j` given the current state.
    fn propose(&self, state: &EpState, j: usize) -> Result<Proposal>;

    /// `Z1` of site `j` at the current cavity.
    fn site_z1(&self, state: &EpState, j: usize) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepOrder {
    Sequential,
    Fixed(Vec<usize>),
    /// A fresh permutation every sweep, from a seeded ChaCha8 stream.
    Shuffled(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpOptions {
    pub max_sweeps: usize,
    pub tol: f64,
    pub damping: f64,
    pub order: SweepOrder,
    /// Treat a non-positive-definite cavity as a skipped site instead of an error.
    pub skip_invalid_cavity: bool,
}

impl Default for EpOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 200,
            tol: 1e-8,
            damping: 1.0,
            order: SweepOrder::Sequential,
            skip_invalid_cavity: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpStatus {
    Converged,
    MaxSweeps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpReport {
    pub status: EpStatus,
    pub sweeps: usize,
    pub max_change: f64,
    pub skipped: usize,
}

impl EpReport {
    pub fn converged(&self) -> bool {
        self.status == EpStatus::Converged
    }
}

/// Run EP sweeps until the largest absolute site change falls below `tol`,
/// then compute every site normalizer at the final state.
pub fn run_ep<M: SiteModel>(state: &mut EpState, model: &M, opts: &EpOptions) -> Result<EpReport> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    let n = state.num_sites();
    let mut rng = match opts.order {
        SweepOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut order: Vec<usize> = match &opts.order {
        SweepOrder::Fixed(o) => {
            if o.iter().any(|&j| j >= n) {
                return Err(Error::InvalidParameter("sweep order refers to a missing site".into()));
            }
            o.clone()
        }
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
        for &j in &order {
            let proposal = match model.propose(state, j) {
                Ok(p) => p,
                Err(Error::InvalidCavity { .. }) if opts.skip_invalid_cavity => Proposal::Skip,
                Err(e) => return Err(e),
            };
            match proposal {
                Proposal::Update { tau, nu } => {
                    let old = state.site(j);
                    let tau = old.tau + opts.damping * (tau - old.tau);
                    let nu = old.nu + opts.damping * (nu - old.nu);
                    if state.set_site(j, tau, nu) {
                        max_change = max_change.max((tau - old.tau).abs()).max((nu - old.nu).abs());
                    } else {
                        report.skipped += 1;
                    }
                }
                Proposal::Skip => report.skipped += 1,
            }
        }
        state.refresh()?;
        report.sweeps = sweep;
        report.max_change = max_change;
        if max_change < opts.tol {
            report.status = EpStatus::Converged;
            break;
        }
    }
    compute_site_normalizers(state, model);
    Ok(report)
}

/// Fill in `ln_t C̃_j` for every site at the current state. A site whose
/// cavity is invalid gets `NaN`, which makes the evidence unavailable;
/// returns the number of such sites.
pub fn compute_site_normalizers<M: SiteModel>(state: &mut EpState, model: &M) -> usize {
    let mut failed = 0;
    for j in 0..state.num_sites() {
        let c = model
            .site_z1(state, j)
            .and_then(|z1| state.site_normalizer(j, z1))
            .unwrap_or(f64::NAN);
        failed += c.is_nan() as usize;
        state.set_site_normalizer(j, c);
    }
    failed
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state() -> EpState {
        let prior = StudentT::new(
            DVector::from_vec(vec![0.2, -0.1, 0.0]),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 2.0, 0.1, 0.0, 0.1, 0.5]),
            6.0,
        )
        .unwrap();
        let dirs = vec![
            Direction::Vector(DVector::from_vec(vec![1.0, 0.5, -0.2])),
            Direction::Axis(2),
            Direction::Vector(DVector::from_vec(vec![-0.3, 1.0, 0.4])),
        ];
        let mut s = EpState::new(prior, dirs).unwrap();
        assert!(s.set_site(0, 0.4, 0.1));
        assert!(s.set_site(1, -0.05, 0.3));
        assert!(s.set_site(2, 0.2, -0.2));
        s
    }

    #[test]
    fn cached_inverse_matches_refresh() {
        let mut s = state();
        let a = s.inverse().clone();
        let ld = s.log_det();
        s.refresh().unwrap();
        assert_relative_eq!(a, s.inverse().clone(), max_relative = 1e-10);
        assert_relative_eq!(ld, s.log_det(), max_relative = 1e-10);
        let dense = s.natural();
        let (inv, ld2) = crate::linalg::spd_inverse_logdet(&dense.psi_k, "p").unwrap();
        assert_relative_eq!(inv, s.inverse().clone(), max_relative = 1e-10);
        assert_relative_eq!(ld2, s.log_det(), max_relative = 1e-10);
    }

    #[test]
    fn global_is_prior_plus_sites() {
        let s = state();
        let mut sum = s.prior_natural().clone();
        for j in 0..3 {
            sum = &sum + &s.site_natural(j);
        }
        assert_relative_eq!(sum.psi_k, s.natural().psi_k, max_relative = 1e-12);
        assert_relative_eq!(sum.psi_k_mu, s.natural().psi_k_mu, max_relative = 1e-12);
        let cav = s.cavity(1);
        let back = &cav + &s.site_natural(1);
        assert_relative_eq!(back.psi_k, s.natural().psi_k, max_relative = 1e-12);
    }

    #[test]
    fn cavity_scalars_match_dense() {
        let s = state();
        for j in 0..3 {
            let dense = StudentT::from_natural(&s.cavity(j), s.dof()).unwrap();
            let cd = s.cavity_distribution(j).unwrap();
            assert_relative_eq!(dense.mu(), cd.mu(), max_relative = 1e-10);
            assert_relative_eq!(dense.sigma(), cd.sigma(), max_relative = 1e-10);
            assert_relative_eq!(
                s.cavity_log_partition(j).unwrap(),
                dense.log_partition(),
                max_relative = 1e-10
            );
            let proj = s.cavity_projection(j).unwrap();
            let d = s.direction(j).to_vector(3);
            let ac = dense.sigma() * (s.dof() / dense.psi());
            assert_relative_eq!(1.0 / proj.tau, (&ac * &d).dot(&d), max_relative = 1e-10);
            assert_relative_eq!(proj.mean(), dense.mu().dot(&d), max_relative = 1e-10);
        }
    }

    #[test]
    fn q_division_by_site_gives_cavity() {
        let s = state();
        let t = s.deform_index();
        let g = s.log_partition();
        let glob = s.natural();
        for j in 0..3 {
            let cav = s.cavity(j);
            let site = s.site_natural(j);
            for w in [[0.1, 0.2, -0.3], [1.0, -0.5, 0.4], [-0.7, 0.9, 0.0]] {
                let w = DVector::from_row_slice(&w);
                let p = exp_t(glob.inner_stat(&w, t) - g, t.value()).unwrap();
                let l = exp_t(site.inner_stat(&w, t), t.value()).unwrap();
                let direct = exp_t(cav.inner_stat(&w, t) - g, t.value()).unwrap();
                assert_relative_eq!(
                    crate::qalgebra::q_division(p, l, t.value()),
                    direct,
                    max_relative = 1e-8
                );
            }
        }
    }

    #[test]
    fn exclude_inverts_addition() {
        let s = state();
        let a = s.cavity(0);
        let b = s.site_natural(0);
        let back = exclude(&(&a + &b), &a);
        assert_relative_eq!(back.psi_k, b.psi_k, epsilon = 1e-14);
        assert_relative_eq!(back.psi_k_mu, b.psi_k_mu, epsilon = 1e-14);
    }

    #[test]
    fn site_normalizer_round_trip() {
        let t = DeformIndex::new(1.2).unwrap();
        let e = 0.9;
        let (z1, gn, gc, psi) = (0.37, 0.4, -0.1, 0.8);
        let c = site_normalizer(z1, gn, gc, psi, t, e).unwrap();
        let back = exp_t((c + gn - gc) / psi, t.value()).unwrap().powf(e);
        assert_relative_eq!(back, z1, max_relative = 1e-12);
        assert!(site_normalizer(1.0, 0.3, 0.3, 1.0, t, e).unwrap().abs() < 1e-15);
        let t1 = DeformIndex::new(1.0).unwrap();
        let c1 = site_normalizer(z1, gn, gc, 1.0, t1, 1.0).unwrap();
        assert_relative_eq!(c1.exp(), z1 * (gc - gn).exp(), max_relative = 1e-12);
    }

    #[test]
    fn prior_scale_solve() {
        let s = state();
        let direct = s.prior().sigma_inv() * s.mean();
        assert_relative_eq!(s.prior_scale_solve_mean().unwrap(), direct, max_relative = 1e-10);
    }

    #[test]
    fn posterior_partition_matches_student_t() {
        let s = state();
        assert_relative_eq!(
            s.log_partition(),
            s.posterior().unwrap().log_partition(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn indefinite_update_rejected() {
        let mut s = state();
        let before = s.inverse().clone();
        assert!(!s.set_site(1, -1e6, 0.0));
        assert_eq!(&before, s.inverse());
    }

    #[test]
    fn invalid_cavity_reports_index() {
        let prior = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2), 4.0).unwrap();
        let mut s = EpState::new(prior, vec![Direction::Axis(0), Direction::Axis(1)]).unwrap();
        // A site that removes more precision than the prior supplies.
        assert!(s.set_site(1, -0.5 * s.prior_natural().psi_k[(1, 1)], 0.0));
        s.sites[1].tau = 5.0 * s.prior_natural().psi_k[(1, 1)];
        assert_eq!(s.cavity_projection(1), Err(Error::InvalidCavity { index: 1 }));
    }

    /// Sites whose proposal is fixed: EP converges after one sweep and the
    /// evidence reduces to the prior when every site is empty.
    struct Fixed;
    impl SiteModel for Fixed {
        fn propose(&self, _s: &EpState, _j: usize) -> Result<Proposal> {
            Ok(Proposal::Update { tau: 0.0, nu: 0.0 })
        }
        fn site_z1(&self, _s: &EpState, _j: usize) -> Result<f64> {
            Ok(1.0)
        }
    }

    #[test]
    fn empty_sites_have_unit_evidence() {
        let prior = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2), 4.0).unwrap();
        let mut s = EpState::new(prior, vec![Direction::Axis(0)]).unwrap();
        let r = run_ep(&mut s, &Fixed, &EpOptions::default()).unwrap();
        assert!(r.converged());
        assert!(s.site(0).log_t_c.abs() < 1e-14);
        assert_relative_eq!(s.marginal_likelihood().unwrap(), 1.0, max_relative = 1e-12);
    }
}
