//! The three experiments. Each writes its CSV exports and a JSON report into
//! the configured output directory and counts fits that did not converge.

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::output::{write_grid, write_table};
use nalgebra::{DMatrix, DVector, RowDVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use tep_core::boundary::{line_rotation, Grid};
use tep_core::bpm::{adf_fit, ep_fit};
use tep_core::datasets::{gen_bpm_mixture, gen_stp_clusters, LabeledSet, OutlierPlacement};
use tep_core::ep_core::{EpOptions, EpReport, SweepOrder};
use tep_core::gp::{gp_ep_fit, gp_ep_fit_gram, GpFit};
use tep_core::kernel::SeKernel;
use tep_core::likelihood::StepLikelihood;
use tep_core::stp::{self, SiteScale, StpConfig, StpFit};
use tep_core::student_t::StudentT;

/// Result of one experiment run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    /// Fits that stopped at the sweep limit or failed outright.
    pub non_converged: usize,
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut out = match cfg.experiment {
        Experiment::BpmPermutation => bpm_permutation(cfg)?,
        Experiment::StpRobustness => stp_robustness(cfg)?,
        Experiment::LimitsCheck => limits_check(cfg)?,
    };
    let obj = out.report.as_object_mut().expect("reports are JSON objects");
    obj.insert("experiment".into(), json!(cfg.experiment.name()));
    obj.insert("config".into(), serde_json::to_value(cfg)?);
    obj.insert("non_converged_fits".into(), json!(out.non_converged));
    let path = cfg.output_dir.join(format!("{}.json", cfg.experiment.name()));
    std::fs::write(path, serde_json::to_string_pretty(&out.report)?)?;
    Ok(out)
}

fn grid_of(cfg: &ExperimentConfig) -> Grid {
    Grid {
        n: cfg.grid.n,
        lo: cfg.grid.lo,
        hi: cfg.grid.hi,
    }
}

fn placement(cfg: &ExperimentConfig) -> OutlierPlacement {
    OutlierPlacement {
        label: cfg.outliers.label,
        offset: cfg.outliers.offset,
        noise: cfg.outliers.noise,
    }
}

fn ep_summary(r: &EpReport) -> Value {
    json!({ "converged": r.converged(), "sweeps": r.sweeps, "skipped": r.skipped, "max_change": r.max_change })
}

fn failed(e: &tep_core::Error) -> Value {
    json!({ "converged": false, "error": e.to_string() })
}

fn spread(angles: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for &a in angles {
        for &b in angles {
            m = m.max(line_rotation(a, b));
        }
    }
    m
}

fn opt_angle(a: Option<f64>) -> Value {
    a.map_or(Value::Null, |v| json!(v))
}

/// Decision values of a kernel expansion `k(x, ·)^T w` over the grid.
fn kernel_surface(grid: &Grid, kernel: &SeKernel, x: &DMatrix<f64>, w: &DVector<f64>) -> Vec<Vec<f64>> {
    grid.evaluate(|a, b| kernel.cross(x, &RowDVector::from_row_slice(&[a, b])).dot(w))
}

fn linear_surface(grid: &Grid, w: &DVector<f64>) -> Vec<Vec<f64>> {
    grid.evaluate(|a, b| w[0] * a + w[1] * b)
}

fn nan_surface(grid: &Grid) -> Vec<Vec<f64>> {
    vec![vec![f64::NAN; grid.n]; grid.n]
}

fn boundary(grid: &Grid, surface: &[Vec<f64>]) -> Option<f64> {
    tep_core::boundary::line_angle(&grid.zero_crossings(surface))
}

fn bpm_permutation(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let grid = grid_of(cfg);
    let data = gen_bpm_mixture(cfg.n_points, cfg.seed);
    data.write_csv(cfg.output_dir.join("bpm_data.csv"))?;
    let lik = StepLikelihood::new(cfg.epsilon)?;
    let prior = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2), cfg.v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let orders: Vec<Vec<usize>> = (0..cfg.n_permutations)
        .map(|_| {
            let mut o: Vec<usize> = (0..data.len()).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    let runs: Vec<_> = orders
        .into_par_iter()
        .map(|order| {
            let adf = adf_fit(&prior, &data.x, &data.y, &lik, &order);
            let opts = EpOptions {
                order: SweepOrder::Fixed(order),
                ..cfg.ep_options()
            };
            let ep = ep_fit(&prior, &data.x, &data.y, &lik, &opts);
            (adf, ep)
        })
        .collect();

    let mut non_converged = 0;
    let mut surfaces = Vec::new();
    let mut rows = Vec::new();
    let mut run_reports = Vec::new();
    let (mut adf_angles, mut ep_angles) = (Vec::new(), Vec::new());
    for (i, (adf, ep)) in runs.iter().enumerate() {
        let adf_w = adf.as_ref().ok().map(|p| p.mu().clone());
        let ep_w = ep.as_ref().ok().map(|f| f.posterior.mu().clone());
        let mut entry = serde_json::Map::new();
        for (name, w, status) in [
            (
                "adf",
                &adf_w,
                adf.as_ref()
                    .err()
                    .map(failed)
                    .unwrap_or_else(|| json!({ "converged": true })),
            ),
            (
                "ep",
                &ep_w,
                match ep {
                    Ok(f) => ep_summary(&f.report),
                    Err(e) => failed(e),
                },
            ),
        ] {
            non_converged += !status["converged"].as_bool().unwrap_or(false) as usize;
            let surface = w
                .as_ref()
                .map_or_else(|| nan_surface(&grid), |w| linear_surface(&grid, w));
            let angle = w.as_ref().and_then(|_| boundary(&grid, &surface));
            if let Some(a) = angle {
                if name == "adf" { &mut adf_angles } else { &mut ep_angles }.push(a);
            }
            let (w0, w1) = w.as_ref().map_or((f64::NAN, f64::NAN), |w| (w[0], w[1]));
            rows.push(vec![
                i.to_string(),
                name.to_string(),
                w0.to_string(),
                w1.to_string(),
                angle.unwrap_or(f64::NAN).to_string(),
                status["converged"].to_string(),
            ]);
            entry.insert(
                name.into(),
                json!({ "normal": w.as_ref().map(|w| vec![w[0], w[1]]), "angle": opt_angle(angle), "status": status }),
            );
            surfaces.push((format!("{name}_{i}"), surface));
        }
        run_reports.push(Value::Object(entry));
    }
    write_grid(&cfg.output_dir.join("bpm_grid.csv"), &grid, &surfaces)?;
    write_table(
        &cfg.output_dir.join("bpm_boundaries.csv"),
        &["run", "method", "w1", "w2", "angle", "converged"],
        &rows,
    )?;
    let (sa, se) = (spread(&adf_angles), spread(&ep_angles));
    let report = json!({
        "runs": run_reports,
        "adf_spread": sa,
        "ep_spread": se,
        "ep_spread_below_adf": se < sa,
    });
    Ok(Outcome { report, non_converged })
}

struct RobustRun {
    seed: u64,
    data: LabeledSet,
    stp: [tep_core::Result<StpFit>; 2],
    gp: [tep_core::Result<GpFit>; 2],
}

fn stp_robustness(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let grid = grid_of(cfg);
    let kernel = cfg.se_kernel()?;
    let opts = cfg.ep_options();
    let scfg = StpConfig {
        v: cfg.v,
        eps: cfg.epsilon,
        kernel,
        scale: SiteScale::Global,
    };
    let runs: Vec<RobustRun> = (0..cfg.n_seeds as u64)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed.wrapping_add(k);
            let data = gen_stp_clusters(cfg.n_points, cfg.outliers.count, seed, placement(cfg));
            let clean = data.clean();
            let stp = [
                stp::fit(&clean.x, &clean.y, &scfg, &opts),
                stp::fit(&data.x, &data.y, &scfg, &opts),
            ];
            let gp = [
                gp_ep_fit(&clean.x, &clean.y, &kernel, cfg.epsilon, &opts),
                gp_ep_fit(&data.x, &data.y, &kernel, cfg.epsilon, &opts),
            ];
            RobustRun { seed, data, stp, gp }
        })
        .collect();

    let mut non_converged = 0;
    let mut seeds = Vec::new();
    let mut stp_wins = 0;
    let mut compared = 0;
    for r in &runs {
        r.data
            .write_csv(cfg.output_dir.join(format!("stp_data_seed{}.csv", r.seed)))?;
        let clean = r.data.clean();
        let xs = [&clean.x, &r.data.x];
        let mut surfaces = Vec::new();
        let mut fits = serde_json::Map::new();
        let mut angles = [[None; 2]; 2];
        for (m, model) in ["stp", "gp"].iter().enumerate() {
            for (c, case) in ["clean", "contaminated"].iter().enumerate() {
                let (weights, status) = if m == 0 {
                    match &r.stp[c] {
                        Ok(f) => (f.predictive_weights().ok(), ep_summary(&f.report)),
                        Err(e) => (None, failed(e)),
                    }
                } else {
                    match &r.gp[c] {
                        Ok(f) => (f.predictive_weights().ok(), ep_summary(&f.report)),
                        Err(e) => (None, failed(e)),
                    }
                };
                non_converged += !status["converged"].as_bool().unwrap_or(false) as usize;
                let surface = weights
                    .as_ref()
                    .map_or_else(|| nan_surface(&grid), |w| kernel_surface(&grid, &kernel, xs[c], w));
                let angle = weights.as_ref().and_then(|_| boundary(&grid, &surface));
                angles[m][c] = angle;
                fits.insert(
                    format!("{model}_{case}"),
                    json!({ "angle": opt_angle(angle), "status": status }),
                );
                surfaces.push((format!("{model}_{case}"), surface));
            }
        }
        write_grid(
            &cfg.output_dir.join(format!("stp_grid_seed{}.csv", r.seed)),
            &grid,
            &surfaces,
        )?;
        let rot = |m: usize| match angles[m] {
            [Some(a), Some(b)] => Some(line_rotation(a, b)),
            _ => None,
        };
        let (rs, rg) = (rot(0), rot(1));
        let smaller = match (rs, rg) {
            (Some(s), Some(g)) => {
                compared += 1;
                Some(s < g)
            }
            _ => None,
        };
        stp_wins += (smaller == Some(true)) as usize;
        seeds.push(json!({
            "seed": r.seed,
            "fits": fits,
            "stp_rotation": opt_angle(rs),
            "gp_rotation": opt_angle(rg),
            "stp_rotation_smaller": smaller,
        }));
    }
    let report = json!({
        "seeds": seeds,
        "stp_smaller_count": stp_wins,
        "compared": compared,
        "stp_more_robust_majority": 2 * stp_wins > runs.len(),
    });
    Ok(Outcome { report, non_converged })
}

/// Tolerances of the classical-limit check at the largest swept dof.
pub const LIMIT_MEAN_TOL: f64 = 1e-2;
pub const LIMIT_EVIDENCE_TOL: f64 = 1e-3;

fn limits_check(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let kernel = cfg.se_kernel()?;
    let opts = cfg.ep_options();
    let lik = StepLikelihood::new(cfg.epsilon)?;
    let problems: Vec<_> = (0..cfg.n_seeds as u64)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed.wrapping_add(k);
            let d = gen_stp_clusters(cfg.n_points, 0, seed, placement(cfg));
            let lin = &d.x * d.x.transpose();
            let g_lin = gp_ep_fit_gram(&lin, &d.y, cfg.epsilon, &opts);
            let g_se = gp_ep_fit(&d.x, &d.y, &kernel, cfg.epsilon, &opts);
            let per_v: Vec<_> = cfg
                .v_sweep
                .iter()
                .map(|&v| {
                    let prior = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2), v);
                    let b = prior.and_then(|p| ep_fit(&p, &d.x, &d.y, &lik, &opts));
                    let s = stp::fit(
                        &d.x,
                        &d.y,
                        &StpConfig {
                            v,
                            eps: cfg.epsilon,
                            kernel,
                            scale: SiteScale::Global,
                        },
                        &opts,
                    );
                    (v, b, s)
                })
                .collect();
            (seed, d, g_lin, g_se, per_v)
        })
        .collect();

    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut non_converged = 0;
    let mut out = Vec::new();
    let mut mean_ok = true;
    let mut evidence_ok = true;
    let mut monotone = true;
    let (mut worst_mean, mut worst_z) = (0.0f64, 0.0f64);
    for (seed, d, g_lin, g_se, per_v) in &problems {
        let mut status = |r: Result<&EpReport, &tep_core::Error>| {
            let s = match r {
                Ok(rep) => ep_summary(rep),
                Err(e) => failed(e),
            };
            non_converged += !s["converged"].as_bool().unwrap_or(false) as usize;
            s
        };
        let gl = status(g_lin.as_ref().map(|f| &f.report));
        let gs = status(g_se.as_ref().map(|f| &f.report));
        let w_lin = g_lin.as_ref().ok().and_then(|f| f.linear_weight_mean(&d.x).ok());
        let mut rows = Vec::new();
        let mut prev = [f64::INFINITY; 4];
        for (v, b, s) in per_v {
            let bs = status(b.as_ref().map(|f| &f.report));
            let ss = status(s.as_ref().map(|f| &f.report));
            let dev = [
                match (b, &w_lin) {
                    (Ok(b), Some(w)) => (b.posterior.mu() - w).amax(),
                    _ => f64::NAN,
                },
                match (s, g_se) {
                    (Ok(s), Ok(g)) => (s.mean() - &g.posterior.mu).amax(),
                    _ => f64::NAN,
                },
                match (b.as_ref().ok().and_then(|b| b.marginal_likelihood().ok()), g_lin) {
                    (Some(z), Ok(g)) => rel(z, g.log_z.exp()),
                    _ => f64::NAN,
                },
                match (s.as_ref().ok().and_then(|s| s.marginal_likelihood().ok()), g_se) {
                    (Some(z), Ok(g)) => rel(z, g.log_z.exp()),
                    _ => f64::NAN,
                },
            ];
            monotone &= dev.iter().zip(&prev).all(|(a, p)| a < p);
            prev = dev;
            rows.push(json!({
                "v": v,
                "bpm_mean_dev": dev[0],
                "stp_mean_dev": dev[1],
                "bpm_evidence_rel_dev": dev[2],
                "stp_evidence_rel_dev": dev[3],
                "bpm_status": bs,
                "stp_status": ss,
            }));
        }
        let [m0, m1, z0, z1] = prev;
        let mean_dev = m0.max(m1);
        let z_dev = z0.max(z1);
        mean_ok &= mean_dev <= LIMIT_MEAN_TOL;
        evidence_ok &= z_dev <= LIMIT_EVIDENCE_TOL;
        worst_mean = worst_mean.max(if mean_dev.is_nan() { f64::INFINITY } else { mean_dev });
        worst_z = worst_z.max(if z_dev.is_nan() { f64::INFINITY } else { z_dev });
        out.push(json!({ "seed": seed, "gp_linear_status": gl, "gp_se_status": gs, "sweep": rows }));
    }
    let report = json!({
        "problems": out,
        "mean_tolerance": LIMIT_MEAN_TOL,
        "evidence_tolerance": LIMIT_EVIDENCE_TOL,
        "worst_mean_dev": worst_mean,
        "worst_evidence_rel_dev": worst_z,
        "mean_pass": mean_ok,
        "evidence_pass": evidence_ok,
        "monotone_pass": monotone,
        "pass": mean_ok && evidence_ok && monotone,
    });
    Ok(Outcome { report, non_converged })
}
