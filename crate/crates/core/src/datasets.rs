//! Seedable toy datasets.
//!
//! All generators draw from `ChaCha8Rng::seed_from_u64(seed)`, whose stream is
//! fixed across platforms, so a seed always yields the same bytes.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub outlier: Vec<bool>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// The subset without outliers.
    pub fn clean(&self) -> LabeledSet {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| !self.outlier[i]).collect();
        self.select(&keep)
    }

    pub fn select(&self, idx: &[usize]) -> LabeledSet {
        let x = DMatrix::from_fn(idx.len(), self.dim(), |r, c| self.x[(idx[r], c)]);
        LabeledSet {
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            outlier: idx.iter().map(|&i| self.outlier[i]).collect(),
        }
    }

    /// Write as CSV with columns `x1..xd, y, is_outlier`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        header.push("is_outlier".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = (0..self.dim()).map(|c| format!("{:?}", self.x[(i, c)])).collect();
            rec.push(format!("{}", self.y[i] as i64));
            rec.push(format!("{}", self.outlier[i] as u8));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let ncol = r.headers()?.len();
        if ncol < 3 {
            return Err(Error::Io("expected columns x1..xd, y, is_outlier".into()));
        }
        let d = ncol - 2;
        let mut xs = Vec::new();
        let mut y = Vec::new();
        let mut outlier = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Io(format!("bad number {s:?}: {e}")))
            };
            for c in 0..d {
                xs.push(parse(&rec[c])?);
            }
            y.push(parse(&rec[d])?);
            outlier.push(parse(&rec[d + 1])? != 0.0);
        }
        let n = y.len();
        Ok(LabeledSet {
            x: DMatrix::from_row_slice(n, d, &xs),
            y,
            outlier,
        })
    }
}

/// Mixture weights, centers and labels of the BPM toy problem.
pub const BPM_COMPONENTS: [(f64, [f64; 2], f64); 4] = [
    (0.05, [1.0, 1.0], 1.0),
    (0.25, [-1.0, 1.0], -1.0),
    (0.45, [-1.0, -1.0], -1.0),
    (0.25, [1.0, -1.0], 1.0),
];
pub const BPM_VARIANCE: f64 = 0.05;

/// Four-component Gaussian mixture; components centred at `x1 = +1` are labelled `+1`.
pub fn gen_bpm_mixture(n: usize, seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = BPM_VARIANCE.sqrt();
    let mut xs = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = BPM_COMPONENTS[3];
        for c in BPM_COMPONENTS {
            acc += c.0;
            if u < acc {
                comp = c;
                break;
            }
        }
        for &m in &comp.1 {
            let z: f64 = rng.sample(StandardNormal);
            xs.push(m + sd * z);
        }
        y.push(comp.2);
    }
    LabeledSet {
        x: DMatrix::from_row_slice(n, 2, &xs),
        y,
        outlier: vec![false; n],
    }
}

/// Where contaminating points go.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierPlacement {
    /// Label carried by every outlier.
    pub label: f64,
    /// Outlier centre is `[label, label] + offset * [-label, -label]`.
    pub offset: f64,
    /// Standard deviation of the isotropic jitter around the centre.
    pub noise: f64,
}

impl Default for OutlierPlacement {
    fn default() -> Self {
        Self {
            label: 1.0,
            offset: 2.0,
            noise: 0.1,
        }
    }
}

/// `n` points `x ~ N([y, y], I)` with balanced random labels, followed by
/// `n_outliers` mislabelled points placed per `placement`.
pub fn gen_stp_clusters(n: usize, n_outliers: usize, seed: u64, placement: OutlierPlacement) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n + n_outliers;
    let mut xs = Vec::with_capacity(2 * total);
    let mut y = Vec::with_capacity(total);
    for _ in 0..n {
        let yi = if rng.random::<bool>() { 1.0 } else { -1.0 };
        for _ in 0..2 {
            let z: f64 = rng.sample(StandardNormal);
            xs.push(yi + z);
        }
        y.push(yi);
    }
    let yl = placement.label;
    let centre = yl - placement.offset * yl;
    for _ in 0..n_outliers {
        for _ in 0..2 {
            let z: f64 = rng.sample(StandardNormal);
            xs.push(centre + placement.noise * z);
        }
        y.push(yl);
    }
    let mut outlier = vec![false; n];
    outlier.extend(std::iter::repeat_n(true, n_outliers));
    LabeledSet {
        x: DMatrix::from_row_slice(total, 2, &xs),
        y,
        outlier,
    }
}
