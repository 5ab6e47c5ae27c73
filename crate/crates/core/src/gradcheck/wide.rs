//! Double-double scalar for finite-difference references.
//!
//! A value is an unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`, giving
//! about 106 significand bits. Arithmetic, `sqrt`, `exp`, `exp_m1`, `ln`,
//! `ln_1p` and `tanh` are carried at that precision. The remaining `Float`
//! methods round through `f64`; the network never calls them.

use std::cmp::Ordering;
use std::fmt;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wide {
    hi: f64,
    lo: f64,
}

const LN_2: Wide = Wide {
    hi: 0.6931471805599453,
    lo: 2.3190468138462996e-17,
};

fn w(hi: f64) -> Wide {
    Wide { hi, lo: 0.0 }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Wide {
    let s = a + b;
    if !s.is_finite() {
        return Wide { hi: s, lo: 0.0 };
    }
    Wide { hi: s, lo: b - (s - a) }
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Wide {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Wide { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    /// Exact multiplication by `2^k`.
    fn ldexp(self, k: i32) -> Self {
        // Two steps keep each factor representable near the exponent limits.
        let a = k / 2;
        let fa = 2f64.powi(a);
        let fb = 2f64.powi(k - a);
        Wide {
            hi: self.hi * fa * fb,
            lo: self.lo * fa * fb,
        }
    }

    /// `exp(r) - 1` for `|r| <= 0.5` by argument halving and a Taylor series.
    fn expm1_small(r: Self) -> Self {
        const HALVINGS: i32 = 10;
        let s = r.ldexp(-HALVINGS);
        let mut term = s;
        let mut sum = s;
        for n in 2..=14 {
            term = term * s / w(n as f64);
            sum = sum + term;
        }
        // expm1(2s) = expm1(s) * (expm1(s) + 2)
        for _ in 0..HALVINGS {
            sum = sum * (sum + w(2.0));
        }
        sum
    }

    fn wide_exp(self) -> Self {
        if self.hi.is_nan() {
            return self;
        }
        if self.hi > 709.78 {
            return w(f64::INFINITY);
        }
        if self.hi < -745.2 {
            return Wide::zero();
        }
        let k = (self.hi / LN_2.hi).round();
        let r = self - LN_2 * w(k);
        (Self::expm1_small(r) + Wide::one()).ldexp(k as i32)
    }

    fn wide_exp_m1(self) -> Self {
        if self.hi.abs() <= 0.5 {
            Self::expm1_small(self)
        } else {
            self.wide_exp() - Wide::one()
        }
    }

    fn wide_ln(self) -> Self {
        if self.hi.is_nan() || self.hi < 0.0 {
            return w(f64::NAN);
        }
        if self.hi == 0.0 {
            return w(f64::NEG_INFINITY);
        }
        if self.hi.is_infinite() {
            return self;
        }
        let mut y = w(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).wide_exp() - Wide::one();
        }
        y
    }

    fn wide_ln_1p(self) -> Self {
        if self.hi.is_nan() || self.hi < -1.0 {
            return w(f64::NAN);
        }
        if self.hi == -1.0 && self.lo <= 0.0 {
            return w(f64::NEG_INFINITY);
        }
        if self.hi.is_infinite() {
            return self;
        }
        let mut y = w(self.hi.ln_1p());
        for _ in 0..2 {
            let e = y.wide_exp_m1();
            y = y - (e - self) / (e + Wide::one());
        }
        y
    }

    fn wide_tanh(self) -> Self {
        if self.hi.is_nan() {
            return self;
        }
        let a = self.abs();
        let t = if a.hi > 40.0 {
            Wide::one()
        } else {
            let e = (a + a).wide_exp_m1();
            e / (e + w(2.0))
        };
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }

    fn wide_sqrt(self) -> Self {
        if self.hi <= 0.0 || !self.hi.is_finite() {
            return w(self.hi.sqrt());
        }
        let y = w(self.hi.sqrt());
        y + (self - y * y) / (y + y)
    }

    fn via_f64(self, f: impl Fn(f64) -> f64) -> Self {
        w(f(self.hi + self.lo))
    }
}

impl From<f64> for Wide {
    fn from(hi: f64) -> Self {
        w(hi)
    }
}

impl fmt::Display for Wide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&(self.hi + self.lo), f)
    }
}

impl PartialOrd for Wide {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            o => Some(o),
        }
    }
}

impl Neg for Wide {
    type Output = Wide;
    fn neg(self) -> Wide {
        Wide {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Wide {
    type Output = Wide;
    fn add(self, rhs: Wide) -> Wide {
        let (s, e) = two_sum(self.hi, rhs.hi);
        if !s.is_finite() {
            return w(s);
        }
        let (t, f) = two_sum(self.lo, rhs.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }
}

impl Sub for Wide {
    type Output = Wide;
    fn sub(self, rhs: Wide) -> Wide {
        self + -rhs
    }
}

impl Mul for Wide {
    type Output = Wide;
    fn mul(self, rhs: Wide) -> Wide {
        let (p, e) = two_prod(self.hi, rhs.hi);
        if !p.is_finite() || p == 0.0 {
            return w(p);
        }
        quick_two_sum(p, e + (self.hi * rhs.lo + self.lo * rhs.hi))
    }
}

impl Div for Wide {
    type Output = Wide;
    fn div(self, rhs: Wide) -> Wide {
        let q1 = self.hi / rhs.hi;
        if !q1.is_finite() || q1 == 0.0 {
            return w(q1);
        }
        let r = self - rhs * w(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * w(q2);
        let q3 = r.hi / rhs.hi;
        quick_two_sum(q1, q2) + w(q3)
    }
}

impl Rem for Wide {
    type Output = Wide;
    fn rem(self, rhs: Wide) -> Wide {
        self - (self / rhs).trunc() * rhs
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl $tr for Wide {
            fn $m(&mut self, rhs: Wide) {
                *self = *self $op rhs;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /, RemAssign rem_assign %);

impl Zero for Wide {
    fn zero() -> Self {
        w(0.0)
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for Wide {
    fn one() -> Self {
        w(1.0)
    }
}

impl Num for Wide {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(w)
    }
}

impl ToPrimitive for Wide {
    fn to_i64(&self) -> Option<i64> {
        let t = self.trunc();
        (t.hi + t.lo).to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        let t = self.trunc();
        (t.hi + t.lo).to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.hi + self.lo)
    }
}

impl FromPrimitive for Wide {
    fn from_i64(n: i64) -> Option<Self> {
        let hi = n as f64;
        let lo = (n - hi as i64) as f64;
        Some(quick_two_sum(hi, lo))
    }
    fn from_u64(n: u64) -> Option<Self> {
        let hi = n as f64;
        let lo = n.wrapping_sub(hi as u64) as i64 as f64;
        Some(quick_two_sum(hi, lo))
    }
    fn from_f64(n: f64) -> Option<Self> {
        Some(w(n))
    }
}

impl NumCast for Wide {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(w)
    }
}

impl Float for Wide {
    fn nan() -> Self {
        w(f64::NAN)
    }
    fn infinity() -> Self {
        w(f64::INFINITY)
    }
    fn neg_infinity() -> Self {
        w(f64::NEG_INFINITY)
    }
    fn neg_zero() -> Self {
        w(-0.0)
    }
    fn min_value() -> Self {
        w(f64::MIN)
    }
    fn min_positive_value() -> Self {
        w(f64::MIN_POSITIVE)
    }
    fn epsilon() -> Self {
        w(f64::EPSILON * f64::EPSILON)
    }
    fn max_value() -> Self {
        w(f64::MAX)
    }
    fn is_nan(self) -> bool {
        self.hi.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.hi.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.hi.is_finite()
    }
    fn is_normal(self) -> bool {
        self.hi.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.hi.classify()
    }
    fn floor(self) -> Self {
        let f = self.hi.floor();
        if f == self.hi {
            quick_two_sum(f, self.lo.floor())
        } else {
            w(f)
        }
    }
    fn ceil(self) -> Self {
        -(-self).floor()
    }
    fn round(self) -> Self {
        let f = (self + w(0.5)).floor();
        if self.hi < 0.0 {
            -(-self).round()
        } else {
            f
        }
    }
    fn trunc(self) -> Self {
        if self.hi < 0.0 {
            self.ceil()
        } else {
            self.floor()
        }
    }
    fn fract(self) -> Self {
        self - self.trunc()
    }
    fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }
    fn signum(self) -> Self {
        w(self.hi.signum())
    }
    fn is_sign_positive(self) -> bool {
        self.hi.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.hi.is_sign_negative()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        Wide::one() / self
    }
    fn powi(self, n: i32) -> Self {
        let mut base = self;
        let mut e = n.unsigned_abs();
        let mut acc = Wide::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        if n < 0 {
            acc.recip()
        } else {
            acc
        }
    }
    fn powf(self, n: Self) -> Self {
        (n * self.wide_ln()).wide_exp()
    }
    fn sqrt(self) -> Self {
        self.wide_sqrt()
    }
    fn exp(self) -> Self {
        self.wide_exp()
    }
    fn exp2(self) -> Self {
        (self * LN_2).wide_exp()
    }
    fn ln(self) -> Self {
        self.wide_ln()
    }
    fn log(self, base: Self) -> Self {
        self.wide_ln() / base.wide_ln()
    }
    fn log2(self) -> Self {
        self.wide_ln() / LN_2
    }
    fn log10(self) -> Self {
        self.wide_ln() / w(10.0).wide_ln()
    }
    fn max(self, other: Self) -> Self {
        if self.is_nan() || other > self {
            other
        } else {
            self
        }
    }
    fn min(self, other: Self) -> Self {
        if self.is_nan() || other < self {
            other
        } else {
            self
        }
    }
    fn abs_sub(self, other: Self) -> Self {
        if self > other {
            self - other
        } else {
            Wide::zero()
        }
    }
    fn cbrt(self) -> Self {
        self.via_f64(f64::cbrt)
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).wide_sqrt()
    }
    fn sin(self) -> Self {
        self.via_f64(f64::sin)
    }
    fn cos(self) -> Self {
        self.via_f64(f64::cos)
    }
    fn tan(self) -> Self {
        self.via_f64(f64::tan)
    }
    fn asin(self) -> Self {
        self.via_f64(f64::asin)
    }
    fn acos(self) -> Self {
        self.via_f64(f64::acos)
    }
    fn atan(self) -> Self {
        self.via_f64(f64::atan)
    }
    fn atan2(self, other: Self) -> Self {
        w((self.hi + self.lo).atan2(other.hi + other.lo))
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn exp_m1(self) -> Self {
        self.wide_exp_m1()
    }
    fn ln_1p(self) -> Self {
        self.wide_ln_1p()
    }
    fn sinh(self) -> Self {
        let e = self.wide_exp();
        (e - e.recip()) / w(2.0)
    }
    fn cosh(self) -> Self {
        let e = self.wide_exp();
        (e + e.recip()) / w(2.0)
    }
    fn tanh(self) -> Self {
        self.wide_tanh()
    }
    fn asinh(self) -> Self {
        self.via_f64(f64::asinh)
    }
    fn acosh(self) -> Self {
        self.via_f64(f64::acosh)
    }
    fn atanh(self) -> Self {
        self.via_f64(f64::atanh)
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.hi.integer_decode()
    }
}

impl Scalar for Wide {
    fn bits(self) -> u64 {
        self.hi.to_bits() ^ self.lo.to_bits().rotate_left(32)
    }
}
