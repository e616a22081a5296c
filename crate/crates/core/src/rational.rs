//! Arbitrary-precision rational scalars plus the two number-theoretic
//! helpers the distance engine relies on: smallest-denominator rationals in
//! an interval and rational lower bounds on the exponential.
//!
//! Values stay in canonical form (positive denominator, gcd 1) and all
//! arithmetic is exact. Floating point appears only in human-readable output.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;
use thiserror::Error;

/// Exact rational number in canonical form.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(BigRational);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RationalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid rational literal {0:?}")]
    Parse(String),
}

impl Rational {
    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    /// Builds `numer/denom`. Panics when `denom` is zero; use [`Rational::from_big`]
    /// for fallible construction.
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "rational with zero denominator");
        Rational(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn from_big(numer: BigInt, denom: BigInt) -> Result<Self, RationalError> {
        if denom.is_zero() {
            return Err(RationalError::DivisionByZero);
        }
        Ok(Rational(BigRational::new(numer, denom)))
    }

    pub fn from_int(v: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(v)))
    }

    /// Exact power of two, `exp` may be negative.
    pub fn pow2(exp: i32) -> Self {
        let one = BigInt::one();
        if exp >= 0 {
            Rational(BigRational::from_integer(one << exp as usize))
        } else {
            Rational(BigRational::new(one.clone(), one << (-exp) as usize))
        }
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn recip(&self) -> Result<Self, RationalError> {
        if self.is_zero() {
            return Err(RationalError::DivisionByZero);
        }
        Ok(Rational(self.0.recip()))
    }

    pub fn checked_div(&self, rhs: &Rational) -> Result<Self, RationalError> {
        if rhs.is_zero() {
            return Err(RationalError::DivisionByZero);
        }
        Ok(Rational(&self.0 / &rhs.0))
    }

    pub fn floor_int(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    pub fn ceil_int(&self) -> BigInt {
        self.0.ceil().to_integer()
    }

    /// Nearest double, for display only.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl From<i64> for Rational {
    fn from(v: i64) -> Self {
        Rational::from_int(v)
    }
}

impl From<BigInt> for Rational {
    fn from(v: BigInt) -> Self {
        Rational(BigRational::from_integer(v))
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((self.0).$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &'a Rational) -> Rational {
                Rational((self.0).$method(&rhs.0))
            }
        }
        impl<'a> $trait<Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((&self.0).$method(rhs.0))
            }
        }
        impl<'a, 'b> $trait<&'b Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: &'b Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl AddAssign<&Rational> for Rational {
    fn add_assign(&mut self, rhs: &Rational) {
        self.0 += &rhs.0;
    }
}

impl AddAssign for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        self.0 += rhs.0;
    }
}

impl SubAssign<&Rational> for Rational {
    fn sub_assign(&mut self, rhs: &Rational) {
        self.0 -= &rhs.0;
    }
}

impl MulAssign<&Rational> for Rational {
    fn mul_assign(&mut self, rhs: &Rational) {
        self.0 *= &rhs.0;
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.denom().is_one() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

fn digits_to_bigint(s: &str) -> Option<BigInt> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    BigInt::parse_bytes(s.as_bytes(), 10)
}

impl FromStr for Rational {
    type Err = RationalError;

    /// Accepts `num/den`, plain integers, and terminating decimals
    /// (`"0.49"` parses as 49/100). An optional leading sign applies
    /// to the whole literal; denominators are unsigned.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || RationalError::Parse(s.to_string());
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let value = if let Some((num, den)) = body.split_once('/') {
            let num = digits_to_bigint(num).ok_or_else(err)?;
            let den = digits_to_bigint(den).ok_or_else(err)?;
            if den.is_zero() {
                return Err(RationalError::DivisionByZero);
            }
            BigRational::new(num, den)
        } else if let Some((int_part, frac_part)) = body.split_once('.') {
            if int_part.is_empty() && frac_part.is_empty() {
                return Err(err());
            }
            let int = if int_part.is_empty() {
                BigInt::zero()
            } else {
                digits_to_bigint(int_part).ok_or_else(err)?
            };
            let frac = if frac_part.is_empty() {
                BigInt::zero()
            } else {
                digits_to_bigint(frac_part).ok_or_else(err)?
            };
            let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
            BigRational::new(int * &scale + frac, scale)
        } else {
            BigRational::from_integer(digits_to_bigint(body).ok_or_else(err)?)
        };
        Ok(Rational(if negative { -value } else { value }))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Smallest-denominator rational in the closed interval `[lo, hi]`, with
/// denominator ties broken by smallest absolute numerator. Panics when
/// `lo > hi`.
///
/// Runs a continued-fraction descent on the endpoints, so the cost is the
/// length of the shorter expansion rather than a denominator scan.
pub fn best_rational_in_interval(lo: &Rational, hi: &Rational) -> Rational {
    assert!(lo <= hi, "empty interval: {} > {}", lo, hi);
    if lo.is_positive() {
        simplest_positive(lo, hi)
    } else if hi.is_negative() {
        -simplest_positive(&-hi, &-lo)
    } else {
        // The interval straddles or touches zero.
        Rational::zero()
    }
}

// Both ends strictly positive. Integers in range win outright (denominator 1,
// and ceil(lo) has the smallest numerator among them); otherwise recurse on
// the reciprocal of the fractional parts.
fn simplest_positive(lo: &Rational, hi: &Rational) -> Rational {
    let ceil_lo = Rational::from(lo.ceil_int());
    if ceil_lo <= *hi {
        return ceil_lo;
    }
    let floor = Rational::from(lo.floor_int());
    let inner = simplest_positive(
        &(hi - &floor).recip().expect("fractional part nonzero"),
        &(lo - &floor).recip().expect("fractional part nonzero"),
    );
    floor + inner.recip().expect("recursion returns positive")
}

/// Partial sum of the exponential series: `sum_{k < terms} eps^k / k!`.
///
/// Every partial sum undershoots `e^eps` for `eps >= 0`, so the result is a
/// sound substitute wherever an under-approximation of `e^eps` is required.
/// Panics when `eps` is negative or `terms` is zero.
pub fn taylor_lower_bound_exp(eps: &Rational, terms: u32) -> Rational {
    assert!(!eps.is_negative(), "negative exponent");
    assert!(terms >= 1, "at least one series term required");
    let mut sum = Rational::zero();
    let mut term = Rational::one();
    for k in 0..terms {
        if k > 0 {
            term = term * eps / Rational::from_int(i64::from(k));
        }
        sum += &term;
    }
    sum
}

/// Series tolerance used by [`exp_lower_bound`]: terms are added until one
/// drops below 10^-12.
pub fn exp_series_tolerance() -> Rational {
    Rational::new(1, 1_000_000_000_000)
}

/// Lower bound on `e^eps` with automatic term count: the series is extended
/// until the last added term is below [`exp_series_tolerance`].
pub fn exp_lower_bound(eps: &Rational) -> Rational {
    assert!(!eps.is_negative(), "negative exponent");
    let tol = exp_series_tolerance();
    let mut sum = Rational::zero();
    let mut term = Rational::one();
    let mut k = 1i64;
    loop {
        sum += &term;
        if term < tol {
            return sum;
        }
        term = term * eps / Rational::from_int(k);
        k += 1;
    }
}
