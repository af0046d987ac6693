//! Decision boundaries sampled on a square grid and summarized by the
//! orientation of the best-fit line through their zero crossings.

use std::f64::consts::PI;

/// Square grid of `n x n` points spanning `[lo, hi]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            n: 200,
            lo: -3.0,
            hi: 3.0,
        }
    }
}

impl Grid {
    pub fn coord(&self, i: usize) -> f64 {
        if self.n < 2 {
            return self.lo;
        }
        self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64
    }

    /// Values of `f` with `values[i][j] = f(coord(i), coord(j))`.
    pub fn evaluate(&self, mut f: impl FnMut(f64, f64) -> f64) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| f(self.coord(i), self.coord(j))).collect())
            .collect()
    }

    /// Sign changes between grid neighbours, located by linear interpolation.
    pub fn zero_crossings(&self, values: &[Vec<f64>]) -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        let n = self.n;
        let frac = |a: f64, b: f64| a / (a - b);
        for i in 0..n {
            for j in 0..n {
                let a = values[i][j];
                if i + 1 < n && (a >= 0.0) != (values[i + 1][j] >= 0.0) {
                    let s = frac(a, values[i + 1][j]);
                    pts.push((self.coord(i) + s * (self.coord(i + 1) - self.coord(i)), self.coord(j)));
                }
                if j + 1 < n && (a >= 0.0) != (values[i][j + 1] >= 0.0) {
                    let s = frac(a, values[i][j + 1]);
                    pts.push((self.coord(i), self.coord(j) + s * (self.coord(j + 1) - self.coord(j))));
                }
            }
        }
        pts
    }

    /// Orientation in `(-π/2, π/2]` of the boundary of `f`, or `None` when
    /// the grid holds fewer than two crossings.
    pub fn boundary_angle(&self, f: impl FnMut(f64, f64) -> f64) -> Option<f64> {
        line_angle(&self.zero_crossings(&self.evaluate(f)))
    }
}

/// Orientation of the total-least-squares line through `pts`.
pub fn line_angle(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / m, a.1 + p.1 / m));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pts {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    Some(normalize(0.5 * (2.0 * sxy).atan2(sxx - syy)))
}

/// Line orientation folded into `(-π/2, π/2]`.
pub fn normalize(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r > PI / 2.0 {
        r - PI
    } else {
        r
    }
}

/// Rotation between two undirected lines, in `[0, π/2]`.
pub fn line_rotation(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Orientation of the boundary `<w, x> = 0` of a linear classifier.
pub fn linear_boundary_angle(w0: f64, w1: f64) -> f64 {
    normalize((-w0).atan2(w1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn straight_line_angle() {
        let g = Grid::default();
        for &theta in &[0.0, 0.3, -0.7, 1.2] {
            let (s, c) = f64::sin_cos(theta);
            let a = g.boundary_angle(|x, y| -s * x + c * y + 0.1).unwrap();
            assert!(line_rotation(a, theta) < 1e-9, "{a} vs {theta}");
        }
    }

    #[test]
    fn linear_boundary_matches_grid() {
        let g = Grid::default();
        let (w0, w1) = (0.8, -0.5);
        let a = g.boundary_angle(|x, y| w0 * x + w1 * y).unwrap();
        assert!(line_rotation(a, linear_boundary_angle(w0, w1)) < 1e-9);
    }

    #[test]
    fn rotation_wraps() {
        assert_relative_eq!(line_rotation(PI / 2.0 - 0.01, -PI / 2.0 + 0.01), 0.02, epsilon = 1e-12);
        assert_relative_eq!(line_rotation(0.1, 0.1), 0.0);
        assert!(line_rotation(0.0, PI / 2.0) <= PI / 2.0);
    }

    #[test]
    fn no_crossings() {
        assert!(Grid::default().boundary_angle(|_, _| 1.0).is_none());
    }
}
