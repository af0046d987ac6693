//! Student-t process binary classification by EP.
//!
//! The latent vector `f` over the `n` training inputs has prior
//! `St(0, K(X, X), v)`, so the approximation lives in `n` dimensions with
//! `t = 1 + 2/(v + n)`. Each datum owns a scalar site `(τ̃_i, ν̃_i)` on the
//! diagonal of `ΨK`. One-dimensional quantities use the site dof
//! `ṽ = v + n - 1`, which satisfies `1/(t - 1) = (ṽ + 1)/2`.
//!
//! A latent marginal `St(μ_i, σ_i², v)` is first narrowed to
//! `σ_i'² = σ_i² v/ṽ` and written in `ΨK` units as `Ψ_i/(ṽ σ_i'²)`.
//! [`SiteScale`] selects which `Ψ_i` is used for that conversion.

use crate::dual::Dual;
use crate::ep_core::{run_ep, CavityProjection, Direction, EpOptions, EpReport, EpState, Proposal, SiteModel};
use crate::error::{Error, Result};
use crate::kernel::{KernelParam, SeKernel};
use crate::likelihood::{StepLikelihood, StepMoments};
use crate::linalg::{cholesky, log_det_chol, symmetrize};
use crate::qalgebra::DeformIndex;
use crate::special::t_log_norm_const;
use crate::student_t::{integral_exponent, StudentT};
use nalgebra::{DMatrix, DVector, RowDVector};

/// Normalizer power used to move between latent variances and `ΨK` units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SiteScale {
    /// The `n`-dimensional `Ψ` of the current approximation, shared by all sites.
    #[default]
    Global,
    /// The one-dimensional `Ψ_i` of each corrected marginal and cavity.
    Marginal,
}

/// Site dof `ṽ = v + n - 1`.
pub fn site_dof(v: f64, n: usize) -> f64 {
    v + n as f64 - 1.0
}

/// Student-t process prior `St(0, K(X, X), v)`.
pub fn prior(x: &DMatrix<f64>, kernel: &SeKernel, v: f64) -> Result<StudentT> {
    if x.nrows() == 0 {
        return Err(Error::InvalidParameter("need at least one input".into()));
    }
    StudentT::new(DVector::zeros(x.nrows()), kernel.gram(x), v)
}

/// `ln Ψ` of a one-dimensional Student-t with scale `s2` and dof `vt`.
fn ln_psi_1d(s2: f64, vt: f64) -> f64 {
    let a = -2.0 / (vt + 1.0);
    a * (t_log_norm_const(vt, 1) - 0.5 * s2.ln())
}

/// Scale of a one-dimensional Student-t with dof `vt` whose `ΨK` is `tau`.
fn recover_1d(tau: f64, vt: f64) -> f64 {
    let a = -2.0 / (vt + 1.0);
    let lc = t_log_norm_const(vt, 1);
    ((a * lc - vt.ln() - tau.ln()) / (1.0 + 0.5 * a)).exp()
}

/// Cavity of site `i` as `(τ_{-i}, ν_{-i})` in `ΨK` units together with its
/// latent mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cavity {
    pub tau: f64,
    pub nu: f64,
    pub mean: f64,
    pub var: f64,
}

pub fn cavity_i(state: &EpState, i: usize, scale: SiteScale) -> Result<Cavity> {
    let n = state.dim();
    let vt = site_dof(state.dof(), n);
    match scale {
        SiteScale::Global => {
            let CavityProjection { tau, nu } = state.cavity_projection(i)?;
            Ok(Cavity {
                tau,
                nu,
                mean: nu / tau,
                var: state.psi() / (vt * tau),
            })
        }
        SiteScale::Marginal => {
            let a_ii = state.inverse()[(i, i)];
            let mu_i = state.mean()[i];
            let s2 = state.psi() / state.dof() * a_ii;
            let s2c = s2 * state.dof() / vt;
            let tau_m = ln_psi_1d(s2c, vt).exp() / (vt * s2c);
            let site = state.site(i);
            let tau = tau_m - site.tau;
            let nu = tau_m * mu_i - site.nu;
            if !(tau > 0.0) {
                return Err(Error::InvalidCavity { index: i });
            }
            Ok(Cavity {
                tau,
                nu,
                mean: nu / tau,
                var: recover_1d(tau, vt),
            })
        }
    }
}

/// Result of including the likelihood of one datum into its cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    pub mean: f64,
    pub var: f64,
    pub moments: StepMoments,
}

pub fn include_i(cav: &Cavity, y: f64, lik: &StepLikelihood, t: DeformIndex, vt: f64) -> Result<Inclusion> {
    let (mean, var, moments) = lik.update_1d(y, cav.mean, cav.var, vt, t.value())?;
    Ok(Inclusion { mean, var, moments })
}

/// New site parameters `(τ̃_i, ν̃_i)` from the included moments.
pub fn exclude_i(state: &EpState, cav: &Cavity, inc: &Inclusion, scale: SiteScale) -> Result<(f64, f64)> {
    if !(inc.var > 0.0) {
        return Err(Error::DegenerateMoments("included variance is not positive"));
    }
    let vt = site_dof(state.dof(), state.dim());
    let psi = match scale {
        SiteScale::Global => state.psi(),
        SiteScale::Marginal => ln_psi_1d(inc.var, vt).exp(),
    };
    let tau_hat = psi / (vt * inc.var);
    Ok((tau_hat - cav.tau, tau_hat * inc.mean - cav.nu))
}

/// `ΨK <- ΨK + Δτ e_i e_i^T` on the cached inverse. Returns `false` and
/// leaves the state untouched when the denominator `1 + Δτ A_ii` is not positive.
pub fn rank_one_update(state: &mut EpState, i: usize, tau: f64, nu: f64) -> bool {
    state.set_site(i, tau, nu)
}

pub struct StpModel<'a> {
    pub y: &'a [f64],
    pub lik: StepLikelihood,
    pub scale: SiteScale,
}

impl SiteModel for StpModel<'_> {
    fn propose(&self, state: &EpState, i: usize) -> Result<Proposal> {
        let cav = cavity_i(state, i, self.scale)?;
        let vt = site_dof(state.dof(), state.dim());
        let inc = match include_i(&cav, self.y[i], &self.lik, state.deform_index(), vt) {
            Ok(inc) => inc,
            Err(Error::DegenerateMoments(_)) => return Ok(Proposal::Skip),
            Err(e) => return Err(e),
        };
        match exclude_i(state, &cav, &inc, self.scale) {
            Ok((tau, nu)) => Ok(Proposal::Update { tau, nu }),
            Err(Error::DegenerateMoments(_)) => Ok(Proposal::Skip),
            Err(e) => Err(e),
        }
    }

    fn site_z1(&self, state: &EpState, i: usize) -> Result<f64> {
        let cav = cavity_i(state, i, self.scale)?;
        let vt = site_dof(state.dof(), state.dim());
        Ok(include_i(&cav, self.y[i], &self.lik, state.deform_index(), vt)?
            .moments
            .z1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StpConfig {
    pub v: f64,
    pub eps: f64,
    pub kernel: SeKernel,
    pub scale: SiteScale,
}

#[derive(Debug, Clone)]
pub struct StpFit {
    pub state: EpState,
    pub report: EpReport,
    pub config: StpConfig,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
}

pub fn fit(x: &DMatrix<f64>, y: &[f64], cfg: &StpConfig, opts: &EpOptions) -> Result<StpFit> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter("labels must be +1 or -1".into()));
    }
    let lik = StepLikelihood::new(cfg.eps)?;
    let p = prior(x, &cfg.kernel, cfg.v)?;
    let mut state = EpState::new(p, (0..y.len()).map(Direction::Axis).collect())?;
    let model = StpModel {
        y,
        lik,
        scale: cfg.scale,
    };
    let report = run_ep(&mut state, &model, opts)?;
    Ok(StpFit {
        state,
        report,
        config: *cfg,
        x: x.clone(),
        y: y.to_vec(),
    })
}

impl StpFit {
    pub fn mean(&self) -> DVector<f64> {
        self.state.mean()
    }

    pub fn posterior(&self) -> Result<StudentT> {
        self.state.posterior()
    }

    pub fn marginal_likelihood(&self) -> Result<f64> {
        self.state.marginal_likelihood()
    }

    /// `ln_t Z_EP^{1/e}` with `e = v/(v + n)`.
    pub fn log_t_evidence(&self) -> Result<f64> {
        self.state.log_t_evidence()
    }

    /// `Σ0^{-1} μ` with `Σ0` the prior Gram matrix.
    pub fn predictive_weights(&self) -> Result<DVector<f64>> {
        self.state.prior_scale_solve_mean()
    }

    /// `k^T Σ0^{-1} μ` at a test input.
    pub fn decision(&self, weights: &DVector<f64>, x_star: &RowDVector<f64>) -> f64 {
        self.config.kernel.cross(&self.x, x_star).dot(weights)
    }
}

/// `sign(k^T Σ0^{-1} μ)` with ties resolved to `+1`.
pub fn predict_sign(weights: &DVector<f64>, k_star: &DVector<f64>) -> f64 {
    if k_star.dot(weights) >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `ln Ψ` from `ln|ΨK|` for `k` dimensions, differentiable.
fn ln_psi_dual(ld: Dual, k: usize, v: f64, a: f64) -> Dual {
    let kf = k as f64;
    let lc = t_log_norm_const(v, k);
    let d = (kf * a * lc - kf * v.ln() - ld) / (1.0 + kf * a / 2.0);
    (lc - 0.5 * d) * a
}

fn partition_dual(ln_psi: Dual, quad: Dual, a: f64) -> Dual {
    (-ln_psi.exp_m1() - quad) / a
}

/// Derivative of `ln_t Z_EP^{1/e}` with respect to one kernel hyperparameter,
/// holding the sites fixed and recomputing every normalizer `C̃_i` at the new
/// prior. Returns `(value, derivative)`.
pub fn hyperparam_gradient(fit: &StpFit, param: KernelParam) -> Result<(f64, f64)> {
    let cfg = &fit.config;
    let x = &fit.x;
    let n = x.nrows();
    let v = cfg.v;
    let t = DeformIndex::from_dof(v, n)?;
    let a = t.one_minus();
    let vt = site_dof(v, n);
    let sites = fit.state.sites();
    let tau = DVector::from_iterator(n, sites.iter().map(|s| s.tau));
    let nu = DVector::from_iterator(n, sites.iter().map(|s| s.nu));

    let g = cfg.kernel.gram(x);
    let dg = cfg.kernel.gram_derivative(x, param);
    let l = cholesky(&g, "prior Gram")?.l();
    let ld_g = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    // B = L^{-1} dG L^{-T}
    let li_dg = l
        .solve_lower_triangular(&dg)
        .ok_or(Error::NotPositiveDefinite("prior Gram"))?;
    let mut b = l
        .solve_lower_triangular(&li_dg.transpose())
        .ok_or(Error::NotPositiveDefinite("prior Gram"))?;
    symmetrize(&mut b);
    let ld_g_dual = Dual::new(ld_g, b.trace());

    let lc_n = t_log_norm_const(v, n);
    let ln_psi0 = (Dual::constant(lc_n) - ld_g_dual * 0.5) * a;
    let g0 = partition_dual(ln_psi0, Dual::constant(0.0), a);
    let c = ln_psi0.exp() / v;

    // N = cI + L^T T L, A = L N^{-1} L^T, ln|ΨK| = ln|N| - ln|G|
    let mut nmat = l.transpose() * DMatrix::from_diagonal(&tau) * &l;
    for i in 0..n {
        nmat[(i, i)] += c.v;
    }
    symmetrize(&mut nmat);
    let nch = cholesky(&nmat, "approximation ΨK")?;
    let ninv = nch.inverse();
    let mut am = &l * &ninv * l.transpose();
    symmetrize(&mut am);
    // dΨK = L^{-T}(dc I - c B) L^{-1}
    let mut inner = &b * (-c.v);
    for i in 0..n {
        inner[(i, i)] += c.d;
    }
    let ld = Dual::new(log_det_chol(&nch) - ld_g, (&ninv * &inner).trace());
    let lt = &l * &ninv;
    let mut dmat = &lt * &inner * lt.transpose();
    symmetrize(&mut dmat);

    let mu = &am * &nu;
    let dmu = -(&dmat * &nu);
    let q = Dual::new(mu.dot(&nu), dmu.dot(&nu));
    let ln_psi = ln_psi_dual(ld, n, v, a);
    let psi = ln_psi.exp();
    let g_glob = partition_dual(ln_psi, q, a);
    let e = integral_exponent(t, n);
    let et = cfg.eps.powf(t.value());
    let delta = (1.0 - cfg.eps).powf(t.value()) - et;

    let mut s = Dual::constant(0.0);
    for i in 0..n {
        let s_a = Dual::new(am[(i, i)], -dmat[(i, i)]);
        let m = Dual::new(mu[i], dmu[i]);
        let (ti, ni) = (tau[i], nu[i]);
        let den = 1.0 - s_a * ti;
        if !(den.v > 0.0) {
            return Err(Error::InvalidCavity { index: i });
        }
        let r = m - s_a * ni;
        let q_c = q - m * (2.0 * ni) + s_a * (ni * ni) + r * r * ti / den;
        let ln_psi_c = ln_psi_dual(ld + den.ln(), n, v, a);
        let g_c = partition_dual(ln_psi_c, q_c, a);
        let (tau_c, nu_c, var_c) = match cfg.scale {
            SiteScale::Global => {
                let tau_c = s_a.recip() - ti;
                (tau_c, m / s_a - ni, psi / (tau_c * vt))
            }
            SiteScale::Marginal => {
                let lc1 = t_log_norm_const(vt, 1);
                let s2c = psi * s_a / vt;
                let tau_m = ((Dual::constant(lc1) - s2c.ln() * 0.5) * a).exp() / (s2c * vt);
                let tau_c = tau_m - ti;
                let var_c = ((Dual::constant(a * lc1 - vt.ln()) - tau_c.ln()) / (1.0 + 0.5 * a)).exp();
                (tau_c, tau_m * m - ni, var_c)
            }
        };
        if !(tau_c.v > 0.0) {
            return Err(Error::InvalidCavity { index: i });
        }
        let z = nu_c / tau_c / var_c.sqrt() * fit.y[i];
        let z1 = if cfg.eps == 0.0 {
            z.t_cdf(vt)
        } else {
            z.t_cdf(vt) * delta + et
        };
        let lt_z1 = (z1.ln() * (a / e)).exp_m1() / a;
        s = s + psi * lt_z1 - g_glob + g_c;
    }
    let val = (s + g_glob - g0) / psi;
    Ok((val.v, val.d))
}

/// Gradient ascent on `ln_t Z_EP^{1/e}` over the log lengthscale and log
/// amplitude, halving the step until the objective improves.
pub fn optimize_hyperparameters(
    x: &DMatrix<f64>,
    y: &[f64],
    cfg: &StpConfig,
    opts: &EpOptions,
    iterations: usize,
) -> Result<StpConfig> {
    let mut cur = *cfg;
    let mut f = fit(x, y, &cur, opts)?;
    let mut obj = f.log_t_evidence()?;
    let mut step = 0.1;
    for _ in 0..iterations {
        let (_, gl) = hyperparam_gradient(&f, KernelParam::Lengthscale)?;
        let (_, ga) = hyperparam_gradient(&f, KernelParam::Amplitude)?;
        // Chain rule to log parameters.
        let gl = gl * cur.kernel.lengthscale;
        let ga = ga * cur.kernel.amplitude;
        let norm = (gl * gl + ga * ga).sqrt();
        if norm < 1e-8 {
            break;
        }
        let mut improved = false;
        while step > 1e-6 {
            let k = SeKernel::new(
                cur.kernel.lengthscale * (step * gl / norm).exp(),
                cur.kernel.amplitude * (step * ga / norm).exp(),
                cur.kernel.jitter,
            )?;
            let cand = StpConfig { kernel: k, ..cur };
            if let Ok(cf) = fit(x, y, &cand, opts) {
                if let Ok(co) = cf.log_t_evidence() {
                    if co > obj {
                        cur = cand;
                        f = cf;
                        obj = co;
                        improved = true;
                        step *= 1.5;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(cur)
}
