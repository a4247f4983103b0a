//! First-order forward-mode dual numbers.
//!
//! `Dual { re, eps }` carries a value and one directional derivative. Evaluating an
//! analytic gradient with dual inputs seeded along `v` yields the Hessian-vector
//! product `∇²f · v` in the `eps` parts, which is all the adjoint sweep needs.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{
    Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign,
};

use num_traits::{Float, FloatConst, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    #[inline]
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    #[inline]
    pub fn constant(re: T) -> Self {
        Self { re, eps: T::zero() }
    }

    /// Applies a scalar function given its value and derivative at `re`.
    #[inline]
    fn chain(self, value: T, deriv: T) -> Self {
        Self {
            re: value,
            eps: deriv * self.eps,
        }
    }
}

impl<T: Real> PartialEq for Dual<T> {
    fn eq(&self, other: &Self) -> bool {
        self.re == other.re
    }
}

impl<T: Real> PartialOrd for Dual<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.re.partial_cmp(&other.re)
    }
}

impl<T: Real> fmt::Display for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}ε", self.re, self.eps)
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.re * rhs.re, self.re * rhs.eps + self.eps * rhs.re)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = T::one() / rhs.re;
        let re = self.re * inv;
        Self::new(re, (self.eps - re * rhs.eps) * inv)
    }
}

impl<T: Real> Rem for Dual<T> {
    type Output = Self;
    fn rem(self, rhs: Self) -> Self {
        // a % b = a - b * trunc(a / b); trunc is locally constant.
        let q = (self.re / rhs.re).trunc();
        Self::new(self.re % rhs.re, self.eps - rhs.eps * q)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

macro_rules! assign_op {
    ($trait:ident, $method:ident, $op:tt) => {
        impl<T: Real> $trait for Dual<T> {
            #[inline]
            fn $method(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    };
}

assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);
assign_op!(RemAssign, rem_assign, %);

impl<T: Real> Sum for Dual<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

impl<T: Real> Zero for Dual<T> {
    fn zero() -> Self {
        Self::constant(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.eps.is_zero()
    }
}

impl<T: Real> One for Dual<T> {
    fn one() -> Self {
        Self::constant(T::one())
    }
}

impl<T: Real> Num for Dual<T> {
    type FromStrRadixErr = T::FromStrRadixErr;
    fn from_str_radix(str: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        T::from_str_radix(str, radix).map(Self::constant)
    }
}

impl<T: Real> ToPrimitive for Dual<T> {
    fn to_i64(&self) -> Option<i64> {
        self.re.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.re.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        self.re.to_f64()
    }
}

impl<T: Real> NumCast for Dual<T> {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        <T as NumCast>::from(n).map(Self::constant)
    }
}

impl<T: Real> FromPrimitive for Dual<T> {
    fn from_i64(n: i64) -> Option<Self> {
        T::from_i64(n).map(Self::constant)
    }
    fn from_u64(n: u64) -> Option<Self> {
        T::from_u64(n).map(Self::constant)
    }
    fn from_f64(n: f64) -> Option<Self> {
        T::from_f64(n).map(Self::constant)
    }
}

macro_rules! float_const {
    ($($name:ident),*) => {
        $(fn $name() -> Self { Self::constant(T::$name()) })*
    };
}

impl<T: Real> FloatConst for Dual<T> {
    float_const!(
        E, FRAC_1_PI, FRAC_1_SQRT_2, FRAC_2_PI, FRAC_2_SQRT_PI, FRAC_PI_2, FRAC_PI_3, FRAC_PI_4,
        FRAC_PI_6, FRAC_PI_8, LN_10, LN_2, LOG10_E, LOG2_E, PI, SQRT_2
    );
}

impl<T: Real> Float for Dual<T> {
    fn nan() -> Self {
        Self::constant(T::nan())
    }
    fn infinity() -> Self {
        Self::constant(T::infinity())
    }
    fn neg_infinity() -> Self {
        Self::constant(T::neg_infinity())
    }
    fn neg_zero() -> Self {
        Self::constant(T::neg_zero())
    }
    fn min_value() -> Self {
        Self::constant(T::min_value())
    }
    fn min_positive_value() -> Self {
        Self::constant(T::min_positive_value())
    }
    fn epsilon() -> Self {
        Self::constant(T::epsilon())
    }
    fn max_value() -> Self {
        Self::constant(T::max_value())
    }
    fn is_nan(self) -> bool {
        self.re.is_nan() || self.eps.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.re.is_infinite() || self.eps.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
    fn is_normal(self) -> bool {
        self.re.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.re.classify()
    }
    fn floor(self) -> Self {
        Self::constant(self.re.floor())
    }
    fn ceil(self) -> Self {
        Self::constant(self.re.ceil())
    }
    fn round(self) -> Self {
        Self::constant(self.re.round())
    }
    fn trunc(self) -> Self {
        Self::constant(self.re.trunc())
    }
    fn fract(self) -> Self {
        Self::new(self.re.fract(), self.eps)
    }
    fn abs(self) -> Self {
        if self.re < T::zero() {
            -self
        } else {
            self
        }
    }
    fn signum(self) -> Self {
        Self::constant(self.re.signum())
    }
    fn is_sign_positive(self) -> bool {
        self.re.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.re.is_sign_negative()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        let r = self.re.recip();
        self.chain(r, -r * r)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        let v = self.re.powi(n);
        let d = T::from_i32(n).unwrap() * self.re.powi(n - 1);
        self.chain(v, d)
    }
    fn powf(self, n: Self) -> Self {
        // x^y = exp(y ln x)
        if n.eps.is_zero() {
            let v = self.re.powf(n.re);
            let d = if self.re.is_zero() && n.re >= T::one() {
                if n.re == T::one() {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                n.re * self.re.powf(n.re - T::one())
            };
            return self.chain(v, d);
        }
        (n * self.ln()).exp()
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        let two = T::one() + T::one();
        self.chain(s, T::one() / (two * s))
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn exp2(self) -> Self {
        let e = self.re.exp2();
        self.chain(e, e * T::LN_2())
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), self.re.recip())
    }
    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }
    fn log2(self) -> Self {
        self.chain(self.re.log2(), (self.re * T::LN_2()).recip())
    }
    fn log10(self) -> Self {
        self.chain(self.re.log10(), (self.re * T::LN_10()).recip())
    }
    fn max(self, other: Self) -> Self {
        if other.re > self.re || self.re.is_nan() {
            other
        } else {
            self
        }
    }
    fn min(self, other: Self) -> Self {
        if other.re < self.re || self.re.is_nan() {
            other
        } else {
            self
        }
    }
    fn abs_sub(self, other: Self) -> Self {
        if self.re <= other.re {
            Self::zero()
        } else {
            self - other
        }
    }
    fn cbrt(self) -> Self {
        let c = self.re.cbrt();
        let three = T::from_f64(3.0).unwrap();
        self.chain(c, T::one() / (three * c * c))
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn tan(self) -> Self {
        let t = self.re.tan();
        self.chain(t, T::one() + t * t)
    }
    fn asin(self) -> Self {
        self.chain(
            self.re.asin(),
            T::one() / (T::one() - self.re * self.re).sqrt(),
        )
    }
    fn acos(self) -> Self {
        self.chain(
            self.re.acos(),
            -T::one() / (T::one() - self.re * self.re).sqrt(),
        )
    }
    fn atan(self) -> Self {
        self.chain(self.re.atan(), T::one() / (T::one() + self.re * self.re))
    }
    fn atan2(self, other: Self) -> Self {
        let r2 = self.re * self.re + other.re * other.re;
        Self::new(
            self.re.atan2(other.re),
            (other.re * self.eps - self.re * other.eps) / r2,
        )
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn exp_m1(self) -> Self {
        self.chain(self.re.exp_m1(), self.re.exp())
    }
    fn ln_1p(self) -> Self {
        self.chain(self.re.ln_1p(), (T::one() + self.re).recip())
    }
    fn sinh(self) -> Self {
        self.chain(self.re.sinh(), self.re.cosh())
    }
    fn cosh(self) -> Self {
        self.chain(self.re.cosh(), self.re.sinh())
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, T::one() - t * t)
    }
    fn asinh(self) -> Self {
        self.chain(
            self.re.asinh(),
            T::one() / (self.re * self.re + T::one()).sqrt(),
        )
    }
    fn acosh(self) -> Self {
        self.chain(
            self.re.acosh(),
            T::one() / (self.re * self.re - T::one()).sqrt(),
        )
    }
    fn atanh(self) -> Self {
        self.chain(self.re.atanh(), T::one() / (T::one() - self.re * self.re))
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.re.integer_decode()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D = Dual<f64>;

    fn check_derivative(f: impl Fn(D) -> D, g: impl Fn(f64) -> f64, x: f64) {
        let ad = f(D::new(x, 1.0)).eps;
        let h = 1e-6;
        let fd = (g(x + h) - g(x - h)) / (2.0 * h);
        assert!(
            (ad - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
            "ad {ad} vs fd {fd} at {x}"
        );
    }

    #[test]
    fn elementary_functions_match_finite_differences() {
        let x = 0.37;
        check_derivative(|v| v.exp(), f64::exp, x);
        check_derivative(|v| v.ln(), f64::ln, x);
        check_derivative(|v| v.sqrt(), f64::sqrt, x);
        check_derivative(|v| v.sin() * v.cos(), |v| v.sin() * v.cos(), x);
        check_derivative(|v| v.sinh() / v.cosh(), |v| v.tanh(), x);
        check_derivative(|v| v.powi(3), |v| v.powi(3), x);
        check_derivative(|v| v.powf(D::constant(2.5)), |v| v.powf(2.5), x);
        check_derivative(|v| v.acos(), f64::acos, x);
        check_derivative(|v| v.atan2(D::constant(0.4)), |v| v.atan2(0.4), x);
        check_derivative(|v| v.recip() - v / (v + D::one()), |v| 1.0 / v - v / (v + 1.0), x);
    }

    #[test]
    fn arithmetic_product_rule() {
        let a = D::new(2.0, 1.0);
        let b = D::new(3.0, 0.0);
        let p = a * b;
        assert_eq!(p.re, 6.0);
        assert_eq!(p.eps, 3.0);
        let q = b / a;
        assert!((q.eps - (-3.0 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn dual_is_a_real_scalar() {
        fn generic_norm<T: Real>(v: &[T]) -> T {
            v.iter().map(|x| *x * *x).sum::<T>().sqrt()
        }
        let v = [D::new(3.0, 1.0), D::new(4.0, 0.0)];
        let n = generic_norm(&v);
        assert_eq!(n.re, 5.0);
        assert!((n.eps - 0.6).abs() < 1e-15);
    }
}
