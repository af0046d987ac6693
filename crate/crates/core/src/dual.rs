//! Forward-mode dual numbers for a single directional derivative.

use crate::special::{t_cdf, t_pdf};
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub const fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }

    pub const fn constant(v: f64) -> Self {
        Self { v, d: 0.0 }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Self::new(e, e * self.d)
    }

    pub fn exp_m1(self) -> Self {
        Self::new(self.v.exp_m1(), self.v.exp() * self.d)
    }

    pub fn ln(self) -> Self {
        Self::new(self.v.ln(), self.d / self.v)
    }

    pub fn ln_1p(self) -> Self {
        Self::new(self.v.ln_1p(), self.d / (1.0 + self.v))
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Self::new(s, 0.5 * self.d / s)
    }

    pub fn recip(self) -> Self {
        Self::new(1.0 / self.v, -self.d / (self.v * self.v))
    }

    /// Standard Student-t CDF with `v` degrees of freedom.
    pub fn t_cdf(self, v: f64) -> Self {
        Self::new(t_cdf(self.v, v), t_pdf(self.v, v) * self.d)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual::new(self.v / o.v, (self.d * o.v - self.v * o.d) / (o.v * o.v))
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, o: f64) -> Dual {
        Dual::new(self.v + o, self.d)
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(self, o: f64) -> Dual {
        Dual::new(self.v - o, self.d)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, o: f64) -> Dual {
        Dual::new(self.v * o, self.d * o)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    fn div(self, o: f64) -> Dual {
        Dual::new(self.v / o, self.d / o)
    }
}

impl Mul<Dual> for f64 {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        o * self
    }
}

impl Sub<Dual> for f64 {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self - o.v, -o.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn chain_rule_matches_fd() {
        let f = |x: Dual| ((x * x).exp_m1() / (x + 2.0)).ln_1p().sqrt() * x.t_cdf(3.0) - x.ln().recip();
        let g = |x: f64| ((x * x).exp_m1() / (x + 2.0)).ln_1p().sqrt() * t_cdf(x, 3.0) - 1.0 / x.ln();
        let x = 1.7;
        let r = f(Dual::new(x, 1.0));
        assert_relative_eq!(r.v, g(x), max_relative = 1e-14);
        assert_relative_eq!(r.d, fd(g, x), max_relative = 1e-7);
    }
}
