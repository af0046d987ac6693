//! Univariate special functions: Student-t and normal densities and CDFs.

use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{PI, SQRT_2};

/// `ln Γ((v + k)/2) - ln Γ(v/2) - (k/2) ln(π v)`: log normalizer of a
/// `k`-variate Student-t with unit scale determinant.
pub fn t_log_norm_const(v: f64, k: usize) -> f64 {
    let kf = k as f64;
    ln_gamma(0.5 * (v + kf)) - ln_gamma(0.5 * v) - 0.5 * kf * (PI * v).ln()
}

/// Log density of the standard univariate Student-t.
pub fn t_log_pdf(z: f64, v: f64) -> f64 {
    t_log_norm_const(v, 1) - 0.5 * (v + 1.0) * (z * z / v).ln_1p()
}

pub fn t_pdf(z: f64, v: f64) -> f64 {
    t_log_pdf(z, v).exp()
}

/// Lower tail `P(T <= z)` for `z <= 0`, computed without cancellation.
fn t_lower_tail(z: f64, v: f64) -> f64 {
    0.5 * beta_reg(0.5 * v, 0.5, v / (v + z * z))
}

/// CDF of the standard univariate Student-t.
pub fn t_cdf(z: f64, v: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z <= 0.0 {
        t_lower_tail(z, v)
    } else {
        1.0 - t_lower_tail(-z, v)
    }
}

/// `ln P(T <= z)`, finite even where the CDF underflows.
pub fn t_log_cdf(z: f64, v: f64) -> f64 {
    if z > 0.0 {
        return (-t_lower_tail(-z, v)).ln_1p();
    }
    let p = t_lower_tail(z, v);
    if p > 1e-300 {
        return p.ln();
    }
    // Leading term of the tail expansion: F(z) ~ f(z) (v + z^2) / (v |z|).
    let az = z.abs();
    t_log_pdf(z, v) + ((v + az * az) / (v * az)).ln()
}

/// `f(z)/F(z)` for the standard Student-t, stable in the lower tail.
pub fn t_pdf_over_cdf(z: f64, v: f64) -> f64 {
    (t_log_pdf(z, v) - t_log_cdf(z, v)).exp()
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn normal_log_cdf(z: f64) -> f64 {
    if z > -30.0 {
        return normal_cdf(z).ln();
    }
    // Asymptotic series for the lower tail.
    let z2 = z * z;
    -0.5 * z2 - (-z).ln() - 0.5 * (2.0 * PI).ln() + (-1.0 / z2 + 2.5 / (z2 * z2)).ln_1p()
}
