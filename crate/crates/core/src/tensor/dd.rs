//! Double-double arithmetic: an unevaluated sum `hi + lo` of two `f64`s
//! carrying about 106 significant bits.
//!
//! Used as the reference precision for finite differences. Arithmetic,
//! `exp`, `ln`, `tanh` and `sqrt` are accurate to roughly 1e-30 relative;
//! the remaining `Float` methods exist for trait completeness and round
//! through `f64`.

use core::cmp::Ordering;
use core::fmt;
use core::num::FpCategory;
use core::ops::{
    Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign,
};

use num_traits::{Float, Num, NumCast, One, ToPrimitive, Zero};

use super::Scalar;

#[derive(Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1
const LN2: DoubleDouble = DoubleDouble {
    hi: core::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

/// `1/i!` for `i` in `0..=13`.
const INV_FACTORIAL: [DoubleDouble; 14] = [
    DoubleDouble::new(1.0, 0.0),
    DoubleDouble::new(1.0, 0.0),
    DoubleDouble::new(0.5, 0.0),
    DoubleDouble::new(0.16666666666666666, 9.25185853854297e-18),
    DoubleDouble::new(0.041666666666666664, 2.3129646346357427e-18),
    DoubleDouble::new(0.008333333333333333, 1.1564823173178714e-19),
    DoubleDouble::new(0.001388888888888889, -5.300543954373577e-20),
    DoubleDouble::new(0.0001984126984126984, 1.7209558293420705e-22),
    DoubleDouble::new(2.48015873015873e-05, 2.1511947866775882e-23),
    DoubleDouble::new(2.7557319223985893e-06, -1.858393274046472e-22),
    DoubleDouble::new(2.755731922398589e-07, 2.3767714622250297e-23),
    DoubleDouble::new(2.505210838544172e-08, -1.448814070935912e-24),
    DoubleDouble::new(2.08767569878681e-09, -1.20734505911326e-25),
    DoubleDouble::new(1.6059043836821613e-10, 1.2585294588752098e-26),
];

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

/// `2^k` as an `f64`, for `k` in the normal exponent range.
fn pow2(k: i32) -> f64 {
    f64::from_bits(((k + 1023) as u64) << 52)
}

impl DoubleDouble {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub const fn lift(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn from_sum(a: f64, b: f64) -> Self {
        let (hi, lo) = quick_two_sum(a, b);
        Self { hi, lo }
    }

    fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        Self::from_sum(p, e + self.lo * b)
    }

    fn ldexp(self, k: i32) -> Self {
        let (a, b) = (k / 2, k - k / 2);
        let (fa, fb) = (pow2(a), pow2(b));
        Self {
            hi: self.hi * fa * fb,
            lo: self.lo * fa * fb,
        }
    }

    fn dd_exp(self) -> Self {
        if self.hi.is_nan() {
            return Self::nan();
        }
        if self.hi > 709.0 {
            return Self::infinity();
        }
        if self.hi < -745.0 {
            return Self::zero();
        }
        let k = libm_round(self.hi / LN2.hi);
        let r = self - LN2.mul_f64(k);
        // shrink the argument so a short Taylor series converges, then square
        // back up
        const HALVINGS: i32 = 5;
        // |r| <= ln2 / 64, so the degree-13 remainder is below 1e-38
        let r = r.ldexp(-HALVINGS);
        let mut sum = INV_FACTORIAL[INV_FACTORIAL.len() - 1];
        for c in INV_FACTORIAL[..INV_FACTORIAL.len() - 1].iter().rev() {
            sum = sum * r + *c;
        }
        for _ in 0..HALVINGS {
            sum = sum * sum;
        }
        sum.ldexp(k as i32)
    }

    fn dd_ln(self) -> Self {
        if self.hi.is_nan() || self.hi < 0.0 {
            return Self::nan();
        }
        if self.hi == 0.0 {
            return Self::neg_infinity();
        }
        if self.hi.is_infinite() {
            return Self::infinity();
        }
        // Newton on exp(y) = x from the f64 estimate; each step squares the
        // relative error
        let mut y = Self::lift(num_traits::Float::ln(self.hi));
        for _ in 0..2 {
            y = y + self * (-y).dd_exp() - Self::one();
        }
        y
    }
}

fn libm_round(x: f64) -> f64 {
    Float::round(x)
}

impl From<f64> for DoubleDouble {
    fn from(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }
}

impl From<DoubleDouble> for f64 {
    fn from(v: DoubleDouble) -> Self {
        v.hi + v.lo
    }
}

impl fmt::Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e} + {:e}", self.hi, self.lo)
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&(self.hi + self.lo), f)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            o => Some(o),
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        if !s.is_finite() {
            return Self::lift(s);
        }
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Self::from_sum(s, e + f)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        self + -b
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        if !p.is_finite() {
            return Self::lift(p);
        }
        Self::from_sum(p, e + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        if !q1.is_finite() {
            return Self::lift(q1);
        }
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        Self::from_sum(q1, q2) + Self::lift(q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;
    fn rem(self, b: Self) -> Self {
        self - (self / b).trunc() * b
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl $tr for DoubleDouble {
            fn $m(&mut self, b: Self) {
                *self = *self $op b;
            }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /, RemAssign rem_assign %);

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self::lift(0.0)
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self::lift(1.0)
    }
}

impl Num for DoubleDouble {
    type FromStrRadixErr = num_traits::ParseFloatError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Self::lift)
    }
}

impl ToPrimitive for DoubleDouble {
    fn to_i64(&self) -> Option<i64> {
        (self.hi + self.lo).to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        (self.hi + self.lo).to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.hi + self.lo)
    }
}

impl NumCast for DoubleDouble {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(Self::lift)
    }
}

/// Lifts an `f64` function; used only where reference precision does not
/// matter.
macro_rules! via_f64 {
    ($($name:ident),*) => {$(
        fn $name(self) -> Self {
            Self::lift(Float::$name(self.hi + self.lo))
        }
    )*};
}

impl Float for DoubleDouble {
    fn nan() -> Self {
        Self::lift(f64::NAN)
    }
    fn infinity() -> Self {
        Self::lift(f64::INFINITY)
    }
    fn neg_infinity() -> Self {
        Self::lift(f64::NEG_INFINITY)
    }
    fn neg_zero() -> Self {
        Self::lift(-0.0)
    }
    fn min_value() -> Self {
        Self::lift(f64::MIN)
    }
    fn min_positive_value() -> Self {
        Self::lift(f64::MIN_POSITIVE)
    }
    fn epsilon() -> Self {
        Self::lift(4.93038065763132e-32)
    }
    fn max_value() -> Self {
        Self::lift(f64::MAX)
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
        let hi = Float::floor(self.hi);
        if hi == self.hi {
            Self::from_sum(hi, Float::floor(self.lo))
        } else {
            Self::lift(hi)
        }
    }
    fn ceil(self) -> Self {
        -(-self).floor()
    }
    fn round(self) -> Self {
        (self + Self::lift(0.5)).floor()
    }
    fn trunc(self) -> Self {
        if self.hi >= 0.0 {
            self.floor()
        } else {
            self.ceil()
        }
    }
    fn fract(self) -> Self {
        self - self.trunc()
    }
    fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }
    fn signum(self) -> Self {
        Self::lift(Float::signum(self.hi))
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
        Self::one() / self
    }
    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { self.recip() } else { self };
        let mut e = n.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }
    fn powf(self, n: Self) -> Self {
        (self.dd_ln() * n).dd_exp()
    }
    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 {
                Self::zero()
            } else {
                Self::nan()
            };
        }
        let y = Self::lift(Float::sqrt(self.hi));
        y + (self - y * y) / y.mul_f64(2.0)
    }
    fn exp(self) -> Self {
        self.dd_exp()
    }
    fn exp2(self) -> Self {
        (self * LN2).dd_exp()
    }
    fn ln(self) -> Self {
        self.dd_ln()
    }
    fn log(self, base: Self) -> Self {
        self.dd_ln() / base.dd_ln()
    }
    fn log2(self) -> Self {
        self.dd_ln() / LN2
    }
    fn log10(self) -> Self {
        self.dd_ln() / Self::lift(10.0).dd_ln()
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
        if self <= other {
            Self::zero()
        } else {
            self - other
        }
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn atan2(self, other: Self) -> Self {
        Self::lift(Float::atan2(self.hi, other.hi))
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn exp_m1(self) -> Self {
        self.dd_exp() - Self::one()
    }
    fn ln_1p(self) -> Self {
        (self + Self::one()).dd_ln()
    }
    fn tanh(self) -> Self {
        let t = (-self.abs()).mul_f64(2.0).dd_exp();
        let r = (Self::one() - t) / (Self::one() + t);
        if self.hi < 0.0 {
            -r
        } else {
            r
        }
    }
    fn sinh(self) -> Self {
        let e = self.dd_exp();
        (e - e.recip()).mul_f64(0.5)
    }
    fn cosh(self) -> Self {
        let e = self.dd_exp();
        (e + e.recip()).mul_f64(0.5)
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        Float::integer_decode(self.hi)
    }
    via_f64!(cbrt, sin, cos, tan, asin, acos, atan, asinh, acosh, atanh);
}

impl Scalar for DoubleDouble {
    #[inline]
    fn of(v: f64) -> Self {
        Self::lift(v)
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self.hi + self.lo
    }
}
