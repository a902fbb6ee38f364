use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Numbers the interpreter can run on: plain `f64` or dual numbers.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn re(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn pow(self, e: Self) -> Self;
    /// Truncation toward zero; derivative zero.
    fn trunc(self) -> Self {
        Self::constant(self.re().trunc())
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn re(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn pow(self, e: Self) -> Self {
        if e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
            self.powi(e as i32)
        } else {
            self.powf(e)
        }
    }
}

/// Forward-mode dual number `re + du·ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Dual {
    pub fn new(re: f64, du: f64) -> Self {
        Dual { re, du }
    }

    pub fn variable(re: f64) -> Self {
        Dual { re, du: 1.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.du * o.re + self.re * o.du)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual::new(
            self.re / o.re,
            (self.du * o.re - self.re * o.du) / (o.re * o.re),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.du)
    }
}

impl Scalar for Dual {
    fn constant(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.du)
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.du / self.re)
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.re.cos() * self.du)
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.re.sin() * self.du)
    }
    fn tan(self) -> Self {
        let c = self.re.cos();
        Dual::new(self.re.tan(), self.du / (c * c))
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.du / (2.0 * s))
    }
    fn abs(self) -> Self {
        if self.re < 0.0 {
            -self
        } else {
            self
        }
    }
    fn pow(self, e: Self) -> Self {
        let value = self.re.pow(e.re);
        let mut du = 0.0;
        if self.du != 0.0 && e.re != 0.0 {
            du += e.re * self.re.pow(e.re - 1.0) * self.du;
        }
        if e.du != 0.0 {
            du += value * self.re.ln() * e.du;
        }
        Dual::new(value, du)
    }
}
