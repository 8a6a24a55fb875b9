//! Exact rational arithmetic used for weights, thresholds and time bounds.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Signed exact rational. Every operation is checked; overflow panics
/// instead of wrapping.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rat(Ratio<i128>);

impl Rat {
    pub const ZERO: Rat = Rat(Ratio::new_raw(0, 1));
    pub const ONE: Rat = Rat(Ratio::new_raw(1, 1));

    pub fn new(numer: i128, denom: i128) -> Rat {
        assert!(denom != 0, "rational with zero denominator");
        Rat(Ratio::new(numer, denom))
    }

    pub fn int(n: i128) -> Rat {
        Rat(Ratio::from_integer(n))
    }

    pub fn half() -> Rat {
        Rat::new(1, 2)
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    /// Largest integer not above the value.
    pub fn floor(&self) -> i128 {
        self.numer().div_euclid(self.denom())
    }

    /// Smallest integer strictly greater than the value.
    pub fn next_int_above(&self) -> i128 {
        self.floor() + 1
    }

    pub fn abs(&self) -> Rat {
        Rat(self.0.abs())
    }

    pub fn recip(&self) -> Rat {
        assert!(!self.is_zero(), "reciprocal of zero");
        Rat(self.0.recip())
    }

    pub fn checked_add(&self, o: &Rat) -> Option<Rat> {
        if o.is_zero() {
            return Some(*self);
        }
        if self.is_zero() {
            return Some(*o);
        }
        if self.denom() == 1 && o.denom() == 1 {
            return self.numer().checked_add(o.numer()).map(Rat::int);
        }
        self.0.checked_add(&o.0).map(Rat)
    }

    pub fn checked_sub(&self, o: &Rat) -> Option<Rat> {
        if o.is_zero() {
            return Some(*self);
        }
        if self.denom() == 1 && o.denom() == 1 {
            return self.numer().checked_sub(o.numer()).map(Rat::int);
        }
        self.0.checked_sub(&o.0).map(Rat)
    }

    pub fn checked_mul(&self, o: &Rat) -> Option<Rat> {
        self.0.checked_mul(&o.0).map(Rat)
    }

    pub fn checked_div(&self, o: &Rat) -> Option<Rat> {
        self.0.checked_div(&o.0).map(Rat)
    }

    /// Approximate value for display and statistics only.
    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }
}

/// Running sum kept over one shared denominator. Adding a value whose
/// denominator divides the current one costs a division and a multiply,
/// with no gcd.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RatSum {
    num: i128,
    den: i128,
}

impl RatSum {
    pub fn new(start: Rat) -> RatSum {
        RatSum { num: start.numer(), den: start.denom() }
    }

    pub fn numer(&self) -> i128 {
        self.num
    }

    pub fn denom(&self) -> i128 {
        self.den
    }

    pub fn add(&mut self, v: Rat) {
        if self.try_add(v).is_none() {
            // shrink to lowest terms once before giving up
            let g = self.num.gcd(&self.den);
            self.num /= g;
            self.den /= g;
            if self.try_add(v).is_none() {
                *self = RatSum::new(self.get() + v);
            }
        }
    }

    fn try_add(&mut self, v: Rat) -> Option<()> {
        let (mut num, mut den) = (self.num, self.den);
        if den % v.denom() != 0 {
            let f = v.denom() / den.gcd(&v.denom());
            num = num.checked_mul(f)?;
            den = den.checked_mul(f)?;
        }
        num = num.checked_add(v.numer().checked_mul(den / v.denom())?)?;
        self.num = num;
        self.den = den;
        Some(())
    }

    pub fn get(&self) -> Rat {
        Rat::new(self.num, self.den)
    }
}

impl Default for Rat {
    fn default() -> Self {
        Rat::ZERO
    }
}

impl From<i64> for Rat {
    fn from(n: i64) -> Self {
        Rat::int(n as i128)
    }
}

impl From<i32> for Rat {
    fn from(n: i32) -> Self {
        Rat::int(n as i128)
    }
}

impl Add for Rat {
    type Output = Rat;
    fn add(self, o: Rat) -> Rat {
        self.checked_add(&o).expect("rational overflow in addition")
    }
}

impl Sub for Rat {
    type Output = Rat;
    fn sub(self, o: Rat) -> Rat {
        self.checked_sub(&o).expect("rational overflow in subtraction")
    }
}

impl Mul for Rat {
    type Output = Rat;
    fn mul(self, o: Rat) -> Rat {
        self.checked_mul(&o).expect("rational overflow in multiplication")
    }
}

impl Div for Rat {
    type Output = Rat;
    fn div(self, o: Rat) -> Rat {
        assert!(!o.is_zero(), "rational division by zero");
        self.checked_div(&o).expect("rational overflow in division")
    }
}

impl Mul<i64> for Rat {
    type Output = Rat;
    fn mul(self, o: i64) -> Rat {
        self * Rat::from(o)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat::ZERO - self
    }
}

impl AddAssign for Rat {
    fn add_assign(&mut self, o: Rat) {
        *self = *self + o;
    }
}

impl SubAssign for Rat {
    fn sub_assign(&mut self, o: Rat) {
        *self = *self - o;
    }
}

impl Sum for Rat {
    fn sum<I: Iterator<Item = Rat>>(iter: I) -> Rat {
        iter.fold(Rat::ZERO, |a, b| a + b)
    }
}

impl<'a> Sum<&'a Rat> for Rat {
    fn sum<I: Iterator<Item = &'a Rat>>(iter: I) -> Rat {
        iter.fold(Rat::ZERO, |a, b| a + *b)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse rational from {0:?}")]
pub struct ParseRatError(pub String);

impl FromStr for Rat {
    type Err = ParseRatError;

    /// Accepts `n`, `n/d` and finite decimals such as `0.75` (read exactly).
    fn from_str(s: &str) -> Result<Rat, ParseRatError> {
        let err = || ParseRatError(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i128 = n.trim().parse().map_err(|_| err())?;
            let d: i128 = d.trim().parse().map_err(|_| err())?;
            if d == 0 {
                return Err(err());
            }
            return Ok(Rat::new(n, d));
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 30 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            let neg = int.starts_with('-');
            let int: i128 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| err())? };
            let scale = 10i128.checked_pow(frac.len() as u32).ok_or_else(err)?;
            let frac: i128 = frac.parse().map_err(|_| err())?;
            let mag = int.abs().checked_mul(scale).and_then(|v| v.checked_add(frac)).ok_or_else(err)?;
            return Ok(Rat::new(if neg { -mag } else { mag }, scale));
        }
        s.parse::<i128>().map(Rat::int).map_err(|_| err())
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Nonnegative exact weight.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Weight(Rat);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("negative weight {0}")]
pub struct NegativeWeight(pub Rat);

impl Weight {
    pub const ZERO: Weight = Weight(Rat::ZERO);

    pub fn new(r: Rat) -> Result<Weight, NegativeWeight> {
        if r.is_negative() {
            Err(NegativeWeight(r))
        } else {
            Ok(Weight(r))
        }
    }

    pub fn get(&self) -> Rat {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl From<Weight> for Rat {
    fn from(w: Weight) -> Rat {
        w.0
    }
}

impl Add for Weight {
    type Output = Weight;
    fn add(self, o: Weight) -> Weight {
        Weight(self.0 + o.0)
    }
}

impl AddAssign for Weight {
    fn add_assign(&mut self, o: Weight) {
        self.0 += o.0;
    }
}

impl Sum for Weight {
    fn sum<I: Iterator<Item = Weight>>(iter: I) -> Weight {
        iter.fold(Weight::ZERO, |a, b| a + b)
    }
}

impl PartialEq<Rat> for Weight {
    fn eq(&self, o: &Rat) -> bool {
        self.0 == *o
    }
}

impl PartialOrd<Rat> for Weight {
    fn partial_cmp(&self, o: &Rat) -> Option<std::cmp::Ordering> {
        Some(self.0.cmp(o))
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Weight, D::Error> {
        let r = Rat::deserialize(d)?;
        Weight::new(r).map_err(serde::de::Error::custom)
    }
}
