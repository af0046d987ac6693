//! Experiment configuration: a TOML file whose omitted keys fall back to
//! per-experiment defaults, resolved into a fully populated
//! [`ExperimentConfig`] that is embedded verbatim in every report.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use tep_core::ep_core::EpOptions;
use tep_core::kernel::SeKernel;
use tep_core::likelihood::StepLikelihood;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    BpmPermutation,
    StpRobustness,
    LimitsCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::BpmPermutation => "bpm-permutation",
            Experiment::StpRobustness => "stp-robustness",
            Experiment::LimitsCheck => "limits-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub lengthscale: f64,
    pub amplitude: f64,
    /// Diagonal jitter relative to the amplitude.
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpConfig {
    pub max_sweeps: usize,
    pub tol: f64,
    pub damping: f64,
    pub skip_invalid_cavity: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierConfig {
    pub count: usize,
    /// Outlier centre is `[y, y] - offset * [y, y]` for outlier label `y`.
    pub offset: f64,
    pub noise: f64,
    pub label: f64,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Degrees of freedom of the Student-t prior.
    pub v: f64,
    /// Label-noise rate of the step likelihood.
    pub epsilon: f64,
    /// Training points per dataset.
    pub n_points: usize,
    /// ADF/EP orderings for `bpm-permutation`.
    pub n_permutations: usize,
    /// Datasets (consecutive seeds) for `stp-robustness` and `limits-check`.
    pub n_seeds: usize,
    /// Dof values for the `limits-check` sweep; the last one is tested against the tolerances.
    pub v_sweep: Vec<f64>,
    pub kernel: KernelConfig,
    pub outliers: OutlierConfig,
    pub ep: EpConfig,
    pub grid: GridConfig,
}

/// Optional overrides as read from a file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub v: Option<f64>,
    pub epsilon: Option<f64>,
    pub n_points: Option<usize>,
    pub n_permutations: Option<usize>,
    pub n_seeds: Option<usize>,
    pub v_sweep: Option<Vec<f64>>,
    pub kernel: Option<PartialKernel>,
    pub outliers: Option<PartialOutliers>,
    pub ep: Option<PartialEp>,
    pub grid: Option<PartialGrid>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialKernel {
    pub lengthscale: Option<f64>,
    pub amplitude: Option<f64>,
    pub jitter: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialOutliers {
    pub count: Option<usize>,
    pub offset: Option<f64>,
    pub noise: Option<f64>,
    pub label: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialEp {
    pub max_sweeps: Option<usize>,
    pub tol: Option<f64>,
    pub damping: Option<f64>,
    pub skip_invalid_cavity: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialGrid {
    pub n: Option<usize>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            seed: 0,
            output_dir: PathBuf::from("out"),
            v: 10.0,
            epsilon: 0.1,
            n_points: 20,
            n_permutations: 10,
            n_seeds: 5,
            v_sweep: vec![10.0, 100.0, 1e4],
            kernel: KernelConfig {
                lengthscale: 1.0,
                amplitude: 1.0,
                jitter: 1e-6,
            },
            outliers: OutlierConfig {
                count: 0,
                offset: 2.0,
                noise: 0.1,
                label: 1.0,
            },
            ep: EpConfig {
                max_sweeps: 200,
                tol: 1e-8,
                damping: 1.0,
                skip_invalid_cavity: true,
            },
            grid: GridConfig {
                n: 200,
                lo: -3.0,
                hi: 3.0,
            },
        };
        match experiment {
            Experiment::BpmPermutation => Self { n_points: 1000, ..base },
            Experiment::StpRobustness => Self {
                epsilon: 0.02,
                n_points: 200,
                kernel: KernelConfig {
                    lengthscale: 2.0,
                    ..base.kernel
                },
                outliers: OutlierConfig {
                    count: 3,
                    ..base.outliers
                },
                ep: EpConfig {
                    max_sweeps: 300,
                    damping: 0.5,
                    ..base.ep
                },
                ..base
            },
            Experiment::LimitsCheck => base,
        }
    }

    /// Overlay a parsed file on the defaults of `experiment`.
    pub fn resolve(experiment: Experiment, file: ConfigFile) -> Result<Self, CliError> {
        if let Some(e) = file.experiment {
            if e != experiment {
                return Err(CliError::Config(format!(
                    "config is for `{}` but `{}` was requested",
                    e.name(),
                    experiment.name()
                )));
            }
        }
        let d = Self::defaults(experiment);
        let k = file.kernel.unwrap_or_default();
        let o = file.outliers.unwrap_or_default();
        let ep = file.ep.unwrap_or_default();
        let g = file.grid.unwrap_or_default();
        let cfg = Self {
            experiment,
            seed: file.seed.unwrap_or(d.seed),
            output_dir: file.output_dir.unwrap_or(d.output_dir),
            v: file.v.unwrap_or(d.v),
            epsilon: file.epsilon.unwrap_or(d.epsilon),
            n_points: file.n_points.unwrap_or(d.n_points),
            n_permutations: file.n_permutations.unwrap_or(d.n_permutations),
            n_seeds: file.n_seeds.unwrap_or(d.n_seeds),
            v_sweep: file.v_sweep.unwrap_or(d.v_sweep),
            kernel: KernelConfig {
                lengthscale: k.lengthscale.unwrap_or(d.kernel.lengthscale),
                amplitude: k.amplitude.unwrap_or(d.kernel.amplitude),
                jitter: k.jitter.unwrap_or(d.kernel.jitter),
            },
            outliers: OutlierConfig {
                count: o.count.unwrap_or(d.outliers.count),
                offset: o.offset.unwrap_or(d.outliers.offset),
                noise: o.noise.unwrap_or(d.outliers.noise),
                label: o.label.unwrap_or(d.outliers.label),
            },
            ep: EpConfig {
                max_sweeps: ep.max_sweeps.unwrap_or(d.ep.max_sweeps),
                tol: ep.tol.unwrap_or(d.ep.tol),
                damping: ep.damping.unwrap_or(d.ep.damping),
                skip_invalid_cavity: ep.skip_invalid_cavity.unwrap_or(d.ep.skip_invalid_cavity),
            },
            grid: GridConfig {
                n: g.n.unwrap_or(d.grid.n),
                lo: g.lo.unwrap_or(d.grid.lo),
                hi: g.hi.unwrap_or(d.grid.hi),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(experiment: Experiment, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(experiment, &text)
    }

    pub fn from_toml(experiment: Experiment, text: &str) -> Result<Self, CliError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::resolve(experiment, file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.v.is_finite() && self.v > 0.0) {
            return bad(format!("v must be positive, got {}", self.v));
        }
        if self.v_sweep.is_empty() || self.v_sweep.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("v_sweep must hold positive dof values".into());
        }
        StepLikelihood::new(self.epsilon).map_err(|e| CliError::Config(e.to_string()))?;
        self.se_kernel()?;
        if self.n_points < 2 {
            return bad("n_points must be at least 2".into());
        }
        if self.n_permutations < 1 || self.n_seeds < 1 {
            return bad("n_permutations and n_seeds must be at least 1".into());
        }
        if self.outliers.label != 1.0 && self.outliers.label != -1.0 {
            return bad("outliers.label must be 1 or -1".into());
        }
        if !(self.outliers.offset.is_finite() && self.outliers.noise >= 0.0 && self.outliers.noise.is_finite()) {
            return bad("outlier offset and noise must be finite with noise >= 0".into());
        }
        if !(self.ep.damping > 0.0 && self.ep.damping <= 1.0) {
            return bad(format!("ep.damping must lie in (0, 1], got {}", self.ep.damping));
        }
        if self.ep.tol.is_nan() || self.ep.tol <= 0.0 || self.ep.max_sweeps == 0 {
            return bad("ep.tol must be positive and ep.max_sweeps nonzero".into());
        }
        if self.grid.n < 2 || !self.grid.lo.is_finite() || !self.grid.hi.is_finite() || self.grid.lo >= self.grid.hi {
            return bad("grid needs n >= 2 and lo < hi".into());
        }
        Ok(())
    }

    pub fn se_kernel(&self) -> Result<SeKernel, CliError> {
        SeKernel::new(self.kernel.lengthscale, self.kernel.amplitude, self.kernel.jitter)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn ep_options(&self) -> EpOptions {
        EpOptions {
            max_sweeps: self.ep.max_sweeps,
            tol: self.ep.tol,
            damping: self.ep.damping,
            skip_invalid_cavity: self.ep.skip_invalid_cavity,
            ..Default::default()
        }
    }
}
