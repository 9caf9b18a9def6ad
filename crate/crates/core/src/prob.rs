//! Exact probabilities.
//!
//! Every quantity in this crate is an exact rational. Partition discovery
//! compares conditional distributions for equality, so there is no tolerance
//! anywhere in the pipeline.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// An exact rational number, normally in `[0, 1]`.
///
/// Residuals and discrepancies reuse the type, so the range is not enforced
/// by construction; [`Probability::is_probability`] checks it.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Probability(BigRational);

impl Probability {
    pub fn zero() -> Self {
        Self(BigRational::zero())
    }

    pub fn one() -> Self {
        Self(BigRational::one())
    }

    /// `num / den`. Panics if `den == 0`.
    pub fn new(num: i64, den: i64) -> Self {
        Self(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// The uniform mass `1 / n`.
    pub fn uniform(n: usize) -> Self {
        Self::new(1, n as i64)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_probability(&self) -> bool {
        !self.0.is_negative() && self.0 <= BigRational::one()
    }

    pub fn abs_diff(&self, other: &Self) -> Self {
        Self((&self.0 - &other.0).abs())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Six significant digits, for human-readable reports only.
    pub fn to_decimal_string(&self) -> String {
        let v = self.to_f64();
        if v == 0.0 {
            return "0".to_string();
        }
        let digits = 6 - 1 - v.abs().log10().floor() as i32;
        if digits > 0 {
            format!("{:.*}", digits as usize, v)
        } else {
            format!("{:.0}", v)
        }
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Probability {
    type Err = Error;

    /// Accepts `"p/q"` or a bare integer.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Parse(format!("not an exact fraction: {s:?}"));
        let s = s.trim();
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s, "1"),
        };
        let num: BigInt = num.parse().map_err(|_| bad())?;
        let den: BigInt = den.parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        Ok(Self(BigRational::new(num, den)))
    }
}

impl Serialize for Probability {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<&Probability> for &Probability {
            type Output = Probability;
            fn $method(self, rhs: &Probability) -> Probability {
                Probability((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<Probability> for Probability {
            type Output = Probability;
            fn $method(self, rhs: Probability) -> Probability {
                Probability(self.0.$method(rhs.0))
            }
        }
        impl $trait<&Probability> for Probability {
            type Output = Probability;
            fn $method(self, rhs: &Probability) -> Probability {
                Probability(self.0.$method(&rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl std::ops::AddAssign<&Probability> for Probability {
    fn add_assign(&mut self, rhs: &Probability) {
        self.0 += &rhs.0;
    }
}

impl std::ops::AddAssign for Probability {
    fn add_assign(&mut self, rhs: Probability) {
        self.0 += rhs.0;
    }
}

impl Sum for Probability {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |acc, p| acc + p)
    }
}

impl<'a> Sum<&'a Probability> for Probability {
    fn sum<I: Iterator<Item = &'a Probability>>(iter: I) -> Self {
        iter.fold(Self::zero(), |acc, p| acc + p)
    }
}

/// A finite distribution over `0..len`, stored densely.
pub type Dist = Vec<Probability>;

/// Sum of a dense distribution.
pub fn total(dist: &[Probability]) -> Probability {
    dist.iter().sum()
}

/// Indices with positive mass.
pub fn support(dist: &[Probability]) -> impl Iterator<Item = usize> + '_ {
    dist.iter()
        .enumerate()
        .filter(|(_, p)| p.is_positive())
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        let p: Probability = "2/4".parse().unwrap();
        assert_eq!(p, Probability::new(1, 2));
        assert_eq!(p.to_string(), "1/2");
        assert_eq!("3".parse::<Probability>().unwrap().to_string(), "3/1");
        assert!("1/0".parse::<Probability>().is_err());
        assert!("x/2".parse::<Probability>().is_err());
    }

    #[test]
    fn thirds_sum_to_one_exactly() {
        let third = Probability::new(1, 3);
        let s: Probability = [third.clone(), third.clone(), third].iter().sum();
        assert!(s.is_one());
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(Probability::new(1, 3).to_decimal_string(), "0.333333");
        assert_eq!(Probability::new(1, 2).to_decimal_string(), "0.500000");
        assert_eq!(Probability::zero().to_decimal_string(), "0");
        assert_eq!(Probability::one().to_decimal_string(), "1.00000");
    }

    #[test]
    fn serde_uses_fraction_strings() {
        let p = Probability::new(3, 8);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "\"3/8\"");
        let back: Probability = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
