//! Probabilities that are either exact rationals or decimals.
//!
//! Arithmetic between two exact values stays exact; as soon as a decimal
//! takes part the result is a decimal. Comparisons take a tolerance that is
//! only consulted when at least one side is a decimal, so an all-rational
//! model is always checked exactly.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Default tolerance for decimal probabilities.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum Prob {
    Exact(BigRational),
    Approx(f64),
}

impl Prob {
    pub fn zero() -> Self {
        Prob::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Prob::Exact(BigRational::one())
    }

    /// Exact `num / den`. Panics if `den == 0`.
    pub fn ratio(num: i64, den: i64) -> Self {
        Prob::Exact(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn approx(value: f64) -> Self {
        Prob::Approx(value)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Prob::Exact(_))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Prob::Exact(r) => rational_to_f64(r),
            Prob::Approx(x) => *x,
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match self {
            Prob::Exact(r) => Some(r),
            Prob::Approx(_) => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Prob::Exact(_) => true,
            Prob::Approx(x) => x.is_finite(),
        }
    }

    pub fn abs(&self) -> Prob {
        match self {
            Prob::Exact(r) => Prob::Exact(r.abs()),
            Prob::Approx(x) => Prob::Approx(x.abs()),
        }
    }

    /// `|self - other|`.
    pub fn abs_diff(&self, other: &Prob) -> Prob {
        (self - other).abs()
    }

    /// Equality: exact when both sides are exact, otherwise `|a - b| <= tol`.
    pub fn approx_eq(&self, other: &Prob, tol: f64) -> bool {
        match (self, other) {
            (Prob::Exact(a), Prob::Exact(b)) => a == b,
            _ => (self.to_f64() - other.to_f64()).abs() <= tol,
        }
    }

    /// `self <= bound`, allowing `tol` of slack when a decimal is involved.
    pub fn le_tol(&self, bound: &Prob, tol: f64) -> bool {
        match (self, bound) {
            (Prob::Exact(a), Prob::Exact(b)) => a <= b,
            _ => self.to_f64() <= bound.to_f64() + tol,
        }
    }

    pub fn is_zero_tol(&self, tol: f64) -> bool {
        self.approx_eq(&Prob::zero(), tol)
    }

    pub fn is_one_tol(&self, tol: f64) -> bool {
        self.approx_eq(&Prob::one(), tol)
    }

    /// Strictly positive. Decimals are compared without tolerance.
    pub fn is_positive(&self) -> bool {
        match self {
            Prob::Exact(r) => r.is_positive(),
            Prob::Approx(x) => *x > 0.0,
        }
    }

    /// Total order used for picking maxima; decimals compare as floats.
    pub fn cmp_value(&self, other: &Prob) -> Ordering {
        match (self, other) {
            (Prob::Exact(a), Prob::Exact(b)) => a.cmp(b),
            _ => self
                .to_f64()
                .partial_cmp(&other.to_f64())
                .unwrap_or(Ordering::Equal),
        }
    }

    pub fn max(self, other: Prob) -> Prob {
        if other.cmp_value(&self) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    /// Division that yields `None` for an exactly-zero (or, for decimals,
    /// tolerance-zero) denominator.
    pub fn checked_div(&self, den: &Prob, tol: f64) -> Option<Prob> {
        if den.is_zero_tol(tol) {
            None
        } else {
            Some(self / den)
        }
    }

    pub fn sum<'a, I: IntoIterator<Item = &'a Prob>>(items: I) -> Prob {
        items.into_iter().fold(Prob::zero(), |acc, p| &acc + p)
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // very large numerators/denominators: scale down first
            let shift = r.denom().bits().max(r.numer().bits()).saturating_sub(1000);
            let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl<'a> $trait<&'a Prob> for &'a Prob {
            type Output = Prob;
            fn $method(self, rhs: &'a Prob) -> Prob {
                match (self, rhs) {
                    (Prob::Exact(a), Prob::Exact(b)) => Prob::Exact(a $op b),
                    _ => Prob::Approx(self.to_f64() $op rhs.to_f64()),
                }
            }
        }

        impl $trait for Prob {
            type Output = Prob;
            fn $method(self, rhs: Prob) -> Prob {
                (&self).$method(&rhs)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);
binop!(Div, div, /);

impl Neg for &Prob {
    type Output = Prob;
    fn neg(self) -> Prob {
        match self {
            Prob::Exact(r) => Prob::Exact(-r),
            Prob::Approx(x) => Prob::Approx(-x),
        }
    }
}

impl Neg for Prob {
    type Output = Prob;
    fn neg(self) -> Prob {
        -&self
    }
}

impl From<f64> for Prob {
    fn from(value: f64) -> Self {
        Prob::Approx(value)
    }
}

impl From<BigRational> for Prob {
    fn from(value: BigRational) -> Self {
        Prob::Exact(value)
    }
}

impl From<i64> for Prob {
    fn from(value: i64) -> Self {
        Prob::Exact(BigRational::from_integer(BigInt::from(value)))
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prob::Exact(r) => {
                if r.denom().is_one() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Prob::Approx(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational `{0}`: expected \"p/q\" with integers p and q > 0")]
pub struct ParseProbError(pub String);

impl FromStr for Prob {
    type Err = ParseProbError;

    /// Parses `"p/q"` (q > 0) or a bare integer `"p"` as an exact value.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseProbError(s.to_string());
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let num: BigInt = num.parse().map_err(|_| err())?;
        let den: BigInt = den.parse().map_err(|_| err())?;
        if !den.is_positive() {
            return Err(err());
        }
        Ok(Prob::Exact(BigRational::new(num, den)))
    }
}

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Prob::Exact(_) => serializer.serialize_str(&self.to_string()),
            Prob::Approx(x) => serializer.serialize_f64(*x),
        }
    }
}

struct ProbVisitor;

impl<'de> Visitor<'de> for ProbVisitor {
    type Value = Prob;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or a rational string \"p/q\"")
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Prob, E> {
        Ok(Prob::Exact(BigRational::from_integer(BigInt::from(v))))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Prob, E> {
        Ok(Prob::Exact(BigRational::from_integer(BigInt::from(v))))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Prob, E> {
        Ok(Prob::Approx(v))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Prob, E> {
        v.parse().map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Prob {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(ProbVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_arithmetic_stays_exact() {
        let half = Prob::ratio(1, 2);
        let quarter = &half * &half;
        assert_eq!(quarter, Prob::ratio(1, 4));
        assert_eq!(&quarter + &quarter, half);
        assert!(quarter.is_exact());
    }

    #[test]
    fn mixing_with_decimal_degrades() {
        let p = &Prob::ratio(1, 2) + &Prob::approx(0.25);
        assert_eq!(p, Prob::Approx(0.75));
    }

    #[test]
    fn exact_comparison_ignores_tolerance() {
        let a = Prob::ratio(1, 3);
        let b = Prob::ratio(1_000_000_001, 3_000_000_000);
        assert!(!a.approx_eq(&b, 1.0));
        assert!(Prob::approx(1.0 / 3.0).approx_eq(&a, 1e-12));
    }

    #[test]
    fn parse_rationals() {
        assert_eq!("3/4".parse::<Prob>().unwrap(), Prob::ratio(3, 4));
        assert_eq!("2/4".parse::<Prob>().unwrap(), Prob::ratio(1, 2));
        assert_eq!("1".parse::<Prob>().unwrap(), Prob::one());
        assert!("1/0".parse::<Prob>().is_err());
        assert!("1/-2".parse::<Prob>().is_err());
        assert!("x/2".parse::<Prob>().is_err());
    }

    #[test]
    fn serde_forms() {
        let v: Vec<Prob> = serde_json::from_str(r#"[1, 0.5, "1/8", -1]"#).unwrap();
        assert_eq!(
            v,
            vec![Prob::one(), Prob::Approx(0.5), Prob::ratio(1, 8), Prob::ratio(-1, 1)]
        );
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"["1",0.5,"1/8","-1"]"#);
    }

    #[test]
    fn checked_div_on_zero() {
        assert!(Prob::one().checked_div(&Prob::zero(), 0.0).is_none());
        assert_eq!(
            Prob::one().checked_div(&Prob::ratio(1, 2), 0.0),
            Some(Prob::ratio(2, 1))
        );
    }
}
