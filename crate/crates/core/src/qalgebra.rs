//! Deformed exponential and logarithm, and the algebra built on them.
//!
//! All functions reduce to their classical counterparts when the deformation
//! index equals one. Values of `t` within [`CLASSICAL_TOL`] of one dispatch to
//! the classical branch; elsewhere the power forms are evaluated through
//! `ln_1p`/`expm1` so accuracy is kept as `t` approaches one.

use crate::error::{Error, Result};

/// Distance from one below which the classical branch is used.
pub const CLASSICAL_TOL: f64 = 1e-12;

/// Deformation index `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DeformIndex(f64);

impl DeformIndex {
    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(Self(t))
        } else {
            Err(Error::InvalidDeformIndex(t))
        }
    }

    /// Index of a `k`-variate Student-t with `v` degrees of freedom: `1 + 2/(v + k)`.
    pub fn from_dof(v: f64, k: usize) -> Result<Self> {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidDof(v));
        }
        Ok(Self(1.0 + 2.0 / (v + k as f64)))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - t`.
    pub fn one_minus(self) -> f64 {
        1.0 - self.0
    }

    pub fn is_classical(self) -> bool {
        (self.0 - 1.0).abs() < CLASSICAL_TOL
    }
}

/// A value together with a flag recording whether the `[.]_+` truncation fired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncated {
    pub value: f64,
    pub truncated: bool,
}

fn classical(t: f64) -> bool {
    (t - 1.0).abs() < CLASSICAL_TOL
}

/// `[1 + (1 - t) x]_+^{1/(1-t)}`.
///
/// For `t > 1` a non-positive bracket has no finite limit and is reported as
/// [`Error::ExpDomain`]. For `t < 1` the bracket is truncated at zero.
pub fn exp_t(x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidDeformIndex(t));
    }
    if classical(t) {
        return Ok(x.exp());
    }
    let a = 1.0 - t;
    let ax = a * x;
    if ax <= -1.0 {
        if t > 1.0 {
            return Err(Error::ExpDomain { bracket: 1.0 + ax, t });
        }
        return Ok(0.0);
    }
    Ok((ax.ln_1p() / a).exp())
}

/// `exp_t` with the truncation flag exposed. Fails only for `t > 1` on a
/// non-positive bracket.
pub fn exp_t_checked(x: f64, t: f64) -> Result<Truncated> {
    let value = exp_t(x, t)?;
    let truncated = !classical(t) && t < 1.0 && (1.0 - t) * x <= -1.0;
    Ok(Truncated { value, truncated })
}

/// `(x^{1-t} - 1) / (1 - t)` for `x >= 0`.
pub fn ln_t(x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidDeformIndex(t));
    }
    if x < 0.0 || x.is_nan() {
        return Err(Error::LogDomain(x));
    }
    if classical(t) {
        return Ok(x.ln());
    }
    let a = 1.0 - t;
    if x == 0.0 {
        // x^{1-t} is 0 for t < 1 and infinite for t > 1.
        return Ok(if a > 0.0 { -1.0 / a } else { f64::NEG_INFINITY });
    }
    Ok((a * x.ln()).exp_m1() / a)
}

/// Bracket `x^{1-q} + y^{1-q} - 1` computed as `1 + expm1 + expm1`.
fn product_bracket_m1(x: f64, y: f64, a: f64) -> f64 {
    (a * x.ln()).exp_m1() + (a * y.ln()).exp_m1()
}

/// q-product `[x^{1-q} + y^{1-q} - 1]_+^{1/(1-q)}` for `x, y > 0`.
pub fn q_product(x: f64, y: f64, q: f64) -> f64 {
    q_product_checked(x, y, q).value
}

pub fn q_product_checked(x: f64, y: f64, q: f64) -> Truncated {
    if x <= 0.0 || y <= 0.0 {
        return Truncated {
            value: 0.0,
            truncated: x < 0.0 || y < 0.0,
        };
    }
    if classical(q) {
        return Truncated {
            value: x * y,
            truncated: false,
        };
    }
    let a = 1.0 - q;
    power_bracket(product_bracket_m1(x, y, a), a)
}

/// q-division `[x^{1-q} - y^{1-q} + 1]_+^{1/(1-q)}` for `x, y > 0`.
///
/// The sign of the trailing constant makes this the inverse of
/// [`q_product`]: `q_division(q_product(x, y, q), y, q) == x`.
pub fn q_division(x: f64, y: f64, q: f64) -> f64 {
    q_division_checked(x, y, q).value
}

pub fn q_division_checked(x: f64, y: f64, q: f64) -> Truncated {
    if x <= 0.0 || y <= 0.0 {
        return Truncated {
            value: 0.0,
            truncated: x < 0.0 || y < 0.0,
        };
    }
    if classical(q) {
        return Truncated {
            value: x / y,
            truncated: false,
        };
    }
    let a = 1.0 - q;
    let m1 = (a * x.ln()).exp_m1() - (a * y.ln()).exp_m1();
    power_bracket(m1, a)
}

/// `[1 + m1]_+^{1/a}`.
fn power_bracket(m1: f64, a: f64) -> Truncated {
    if m1 <= -1.0 {
        return Truncated {
            value: 0.0,
            truncated: true,
        };
    }
    Truncated {
        value: (m1.ln_1p() / a).exp(),
        truncated: false,
    }
}

/// Pseudo-addition `x + y + (1 - t) x y`, which satisfies
/// `exp_t(x) exp_t(y) = exp_t(pseudo_add(x, y, t))`.
pub fn pseudo_add(x: f64, y: f64, t: f64) -> f64 {
    x + y + (1.0 - t) * x * y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn classical_limit() {
        assert_relative_eq!(exp_t(0.7, 1.0).unwrap(), 0.7f64.exp());
        assert_relative_eq!(ln_t(2.5, 1.0).unwrap(), 2.5f64.ln());
        assert_relative_eq!(q_product(2.0, 3.0, 1.0), 6.0);
        assert_relative_eq!(q_division(6.0, 3.0, 1.0), 2.0);
    }

    #[test]
    fn near_one_is_continuous() {
        let t = 1.0 + 1e-9;
        assert_relative_eq!(exp_t(0.7, t).unwrap(), 0.7f64.exp(), max_relative = 1e-8);
        assert_relative_eq!(ln_t(2.5, t).unwrap(), 2.5f64.ln(), max_relative = 1e-8);
        assert_relative_eq!(q_product(2.0, 3.0, t), 6.0, max_relative = 1e-8);
    }

    #[test]
    fn known_values() {
        // t = 2: exp_t(x) = 1/(1 - x), ln_t(x) = 1 - 1/x
        assert_relative_eq!(exp_t(0.5, 2.0).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(ln_t(4.0, 2.0).unwrap(), 0.75, max_relative = 1e-14);
        // t = 0.5: exp_t(x) = (1 + x/2)^2
        assert_relative_eq!(exp_t(2.0, 0.5).unwrap(), 4.0, max_relative = 1e-14);
    }

    #[test]
    fn domain_errors_and_truncation() {
        assert!(matches!(exp_t(1.0, 2.0), Err(Error::ExpDomain { .. })));
        assert!(matches!(exp_t(2.0, 1.5), Err(Error::ExpDomain { .. })));
        assert_eq!(exp_t(-3.0, 0.5).unwrap(), 0.0);
        assert!(exp_t_checked(-3.0, 0.5).unwrap().truncated);
        assert!(!exp_t_checked(-1.0, 0.5).unwrap().truncated);
        assert!(matches!(ln_t(-1.0, 1.5), Err(Error::LogDomain(_))));
        assert!(matches!(exp_t(0.0, 0.0), Err(Error::InvalidDeformIndex(_))));
        assert!(q_division_checked(1.0, 100.0, 0.5).truncated);
        assert!(DeformIndex::new(-1.0).is_err());
    }

    #[test]
    fn deform_index_from_dof() {
        let t = DeformIndex::from_dof(3.0, 1).unwrap();
        assert_relative_eq!(t.value(), 1.5);
        assert_relative_eq!(t.one_minus(), -0.5);
        assert!(DeformIndex::from_dof(0.0, 1).is_err());
    }

    fn t_strat() -> impl Strategy<Value = f64> {
        prop_oneof![0.2f64..0.99, 1.01f64..3.0, Just(1.0)]
    }

    proptest! {
        #[test]
        fn ln_inverts_exp(t in t_strat(), x in -0.4f64..0.4) {
            let e = exp_t(x, t).unwrap();
            prop_assert!((ln_t(e, t).unwrap() - x).abs() < 1e-10);
        }

        #[test]
        fn exp_inverts_ln(t in t_strat(), x in 0.05f64..20.0) {
            let l = ln_t(x, t).unwrap();
            prop_assert!((exp_t(l, t).unwrap() - x).abs() < 1e-10 * x.max(1.0));
        }

        #[test]
        fn product_of_exps(t in t_strat(), x in -0.2f64..0.2, y in -0.2f64..0.2) {
            let lhs = exp_t(x, t).unwrap() * exp_t(y, t).unwrap();
            let rhs = exp_t(pseudo_add(x, y, t), t).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * lhs);
        }

        #[test]
        fn q_product_adds_logs(q in t_strat(), x in 0.3f64..3.0, y in 0.3f64..3.0) {
            let p = q_product_checked(x, y, q);
            prop_assume!(!p.truncated);
            let lhs = ln_t(p.value, q).unwrap();
            let rhs = ln_t(x, q).unwrap() + ln_t(y, q).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
        }

        #[test]
        fn q_division_inverts_product(q in t_strat(), x in 0.3f64..3.0, y in 0.3f64..3.0) {
            let p = q_product_checked(x, y, q);
            prop_assume!(!p.truncated);
            let back = q_division(p.value, y, q);
            prop_assert!((back - x).abs() < 1e-10 * x);
        }

        #[test]
        fn q_product_commutes(q in t_strat(), x in 0.1f64..5.0, y in 0.1f64..5.0) {
            prop_assert!((q_product(x, y, q) - q_product(y, x, q)).abs() < 1e-12 * q_product(x, y, q).max(1.0));
        }
    }
}
