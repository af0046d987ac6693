//! Adaptive Gauss-Kronrod (7/15) quadrature on finite and infinite intervals.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Options for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, opts: &QuadOptions) -> Result<f64> {
    let (v, e) = gk15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, err: e });
    let mut total = v;
    let mut total_err = e;
    while total_err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature {
                tol: opts.abs_tol.max(opts.rel_tol * total.abs()),
                err: total_err,
            });
        }
        let seg = heap.pop().expect("heap is never empty");
        let m = 0.5 * (seg.a + seg.b);
        let (v1, e1) = gk15(f, seg.a, m);
        let (v2, e2) = gk15(f, m, seg.b);
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.err;
        heap.push(Segment {
            a: seg.a,
            b: m,
            value: v1,
            err: e1,
        });
        heap.push(Segment {
            a: m,
            b: seg.b,
            value: v2,
            err: e2,
        });
    }
    // Re-sum to shed accumulated rounding in the running total.
    Ok(heap.iter().map(|s| s.value).sum())
}

/// Integrate `f` over `[a, b]`; either end may be infinite.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, opts).map(|v| -v);
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(&mut f, a, b, opts),
        (true, false) => {
            let mut g = |u: f64| {
                if u >= 1.0 {
                    return 0.0;
                }
                let w = 1.0 - u;
                f(a + u / w) / (w * w)
            };
            adaptive(&mut g, 0.0, 1.0, opts)
        }
        (false, true) => {
            let mut g = |u: f64| {
                if u >= 1.0 {
                    return 0.0;
                }
                let w = 1.0 - u;
                f(b - u / w) / (w * w)
            };
            adaptive(&mut g, 0.0, 1.0, opts)
        }
        (false, false) => {
            let mut g = |u: f64| {
                let w = 1.0 - u * u;
                if w <= 0.0 {
                    return 0.0;
                }
                f(u / w) * (1.0 + u * u) / (w * w)
            };
            adaptive(&mut g, -1.0, 1.0, opts)
        }
    }
}

/// Integrate over the real line, splitting at the given interior breakpoints.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], opts: &QuadOptions) -> Result<f64> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(pts);
    edges.push(f64::INFINITY);
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += integrate(&mut f, w[0], w[1], opts)?;
    }
    Ok(total)
}

/// Iterated integral of `f(x, y)` over the product of two intervals.
pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    (ax, bx): (f64, f64),
    (ay, by): (f64, f64),
    opts: &QuadOptions,
) -> Result<f64> {
    let inner = QuadOptions {
        abs_tol: opts.abs_tol * 1e-2,
        rel_tol: opts.rel_tol * 1e-1,
        ..*opts
    };
    let mut failure = None;
    let outer = integrate(
        |x| match integrate(|y| f(x, y), ay, by, &inner) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        ax,
        bx,
        opts,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(outer),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x, -1.0, 3.0, &QuadOptions::default()).unwrap();
        assert_relative_eq!(v, 20.0 - 8.0, max_relative = 1e-13);
    }

    #[test]
    fn gaussian_whole_line() {
        let v = integrate(
            |x| (-0.5 * x * x).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &QuadOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(v, (2.0 * PI).sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn cauchy_heavy_tails() {
        let v = integrate(|x| 1.0 / (1.0 + x * x), 0.0, f64::INFINITY, &QuadOptions::default()).unwrap();
        assert_relative_eq!(v, PI / 2.0, max_relative = 1e-10);
        let w = integrate(
            |x| 1.0 / (1.0 + x * x),
            f64::NEG_INFINITY,
            -1.0,
            &QuadOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(w, PI / 4.0, max_relative = 1e-10);
    }

    #[test]
    fn step_with_break() {
        let f = |x: f64| if x > 0.7 { (-0.5 * x * x).exp() } else { 0.0 };
        let v = integrate_with_breaks(f, &[0.7], &QuadOptions::default()).unwrap();
        let expect = (2.0 * PI).sqrt() * crate::special::normal_cdf(-0.7);
        assert_relative_eq!(v, expect, max_relative = 1e-10);
    }

    #[test]
    fn two_dimensional_gaussian() {
        let v = integrate_2d(
            |x, y| (-0.5 * (x * x + y * y)).exp(),
            (f64::NEG_INFINITY, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
            &QuadOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(v, 2.0 * PI, max_relative = 1e-9);
    }

    #[test]
    fn reversed_bounds() {
        let v = integrate(|x| x, 1.0, 0.0, &QuadOptions::default()).unwrap();
        assert_relative_eq!(v, -0.5, max_relative = 1e-14);
    }
}
