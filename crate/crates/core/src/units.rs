//! Exact numeric quantities: currency, work, and share targets.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("`{0}` is not a decimal or a/b fraction")]
    Malformed(String),
    #[error("share target must lie in (0, 1], got {0}")]
    TargetRange(String),
}

/// Parses `"3"`, `"0.05"`, `"-1.5e-3"` or `"1/20"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational, ParseError> {
    let bad = || ParseError::Malformed(text.to_string());
    let s = text.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(at) => (&s[..at], s[at + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let joined = format!("{int_part}{frac_part}");
    let numer = BigInt::from_str(if joined.is_empty() { "0" } else { &joined }).map_err(|_| bad())?;
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let mut value = BigRational::from_integer(numer);
    if scale >= 0 {
        value *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if negative { -value } else { value })
}

/// Formats a rational as `n` or `n/d`.
pub fn format_rational(value: &BigRational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Accepts TOML integers, floats (via their shortest round-trip decimal) or
/// strings.
pub(crate) fn deserialize_rational<'de, D: Deserializer<'de>>(de: D) -> Result<BigRational, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Float(f64),
        Text(String),
    }
    let text = match Raw::deserialize(de)? {
        Raw::Int(i) => i.to_string(),
        Raw::Float(f) => format!("{f}"),
        Raw::Text(s) => s,
    };
    parse_rational(&text).map_err(serde::de::Error::custom)
}

pub(crate) fn serialize_rational<S: Serializer>(value: &BigRational, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(&format_rational(value))
}

macro_rules! rational_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub BigRational);

        impl $name {
            pub fn zero() -> Self {
                $name(BigRational::zero())
            }

            pub fn from_integer(n: i64) -> Self {
                $name(BigRational::from_integer(BigInt::from(n)))
            }

            pub fn from_ratio(n: i64, d: i64) -> Self {
                $name(BigRational::new(BigInt::from(n), BigInt::from(d)))
            }

            pub fn is_zero(&self) -> bool {
                self.0.is_zero()
            }

            pub fn is_positive(&self) -> bool {
                self.0.is_positive()
            }

            pub fn is_negative(&self) -> bool {
                self.0.is_negative()
            }

            pub fn abs(&self) -> Self {
                $name(self.0.abs())
            }

            pub fn to_f64(&self) -> f64 {
                self.0.to_f64().unwrap_or(f64::NAN)
            }

            pub fn exact(&self) -> String {
                format_rational(&self.0)
            }

            /// Fixed-point rendering with `places` decimals, truncated toward zero.
            pub fn decimal(&self, places: usize) -> String {
                let scale = num_traits::pow(BigInt::from(10u32), places);
                let scaled = (&self.0 * BigRational::from_integer(scale.clone())).trunc().to_integer();
                let negative = scaled.is_negative() || (scaled.is_zero() && self.0.is_negative());
                let magnitude = scaled.abs();
                let int_part = &magnitude / &scale;
                let frac_part = &magnitude % &scale;
                let sign = if negative { "-" } else { "" };
                if places == 0 {
                    format!("{sign}{int_part}")
                } else {
                    format!("{sign}{int_part}.{:0>width$}", frac_part.to_string(), width = places)
                }
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.exact())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.exact())
            }
        }

        impl FromStr for $name {
            type Err = ParseError;
            fn from_str(s: &str) -> Result<Self, ParseError> {
                parse_rational(s).map($name)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
                serialize_rational(&self.0, ser)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
                deserialize_rational(de).map($name)
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl<'a> Add<&'a $name> for &'a $name {
            type Output = $name;
            fn add(self, rhs: &'a $name) -> $name {
                $name(&self.0 + &rhs.0)
            }
        }

        impl Sub for $name {
            type Output = $name;
            fn sub(self, rhs: $name) -> $name {
                $name(self.0 - rhs.0)
            }
        }

        impl<'a> Sub<&'a $name> for &'a $name {
            type Output = $name;
            fn sub(self, rhs: &'a $name) -> $name {
                $name(&self.0 - &rhs.0)
            }
        }

        impl AddAssign for $name {
            fn add_assign(&mut self, rhs: $name) {
                self.0 += rhs.0;
            }
        }

        impl<'a> AddAssign<&'a $name> for $name {
            fn add_assign(&mut self, rhs: &'a $name) {
                self.0 += &rhs.0;
            }
        }

        impl SubAssign for $name {
            fn sub_assign(&mut self, rhs: $name) {
                self.0 -= rhs.0;
            }
        }

        impl<'a> SubAssign<&'a $name> for $name {
            fn sub_assign(&mut self, rhs: &'a $name) {
                self.0 -= &rhs.0;
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }

        impl Sum for $name {
            fn sum<I: Iterator<Item = $name>>(iter: I) -> $name {
                iter.fold($name::zero(), |acc, x| acc + x)
            }
        }

        impl<'a> Sum<&'a $name> for $name {
            fn sum<I: Iterator<Item = &'a $name>>(iter: I) -> $name {
                iter.fold($name::zero(), |mut acc, x| {
                    acc += x;
                    acc
                })
            }
        }
    };
}

rational_newtype!(
    /// Currency, kept as an exact rational so ledger sums never drift.
    Amount
);

rational_newtype!(
    /// Proof-of-work measured in expected hashes (`N / D` per batch).
    Work
);

rational_newtype!(
    /// Dimensionless exact ratio: hashrate shares, allocation weights.
    Fraction
);

impl Amount {
    /// `self * numerator / denominator` for a pro-rata split by work.
    pub fn pro_rata(&self, part: &Work, whole: &Work) -> Amount {
        Amount(&self.0 * &part.0 / &whole.0)
    }

    /// Scales by a plain rational factor.
    pub fn scale(&self, factor: &BigRational) -> Amount {
        Amount(&self.0 * factor)
    }
}

impl Mul<&BigRational> for &Amount {
    type Output = Amount;
    fn mul(self, rhs: &BigRational) -> Amount {
        Amount(&self.0 * rhs)
    }
}

impl Div<&BigRational> for &Amount {
    type Output = Amount;
    fn div(self, rhs: &BigRational) -> Amount {
        Amount(&self.0 / rhs)
    }
}

impl Work {
    /// Ratio of two works as a plain rational.
    pub fn fraction_of(&self, whole: &Work) -> BigRational {
        &self.0 / &whole.0
    }

    /// Canonical encoding: reduced numerator and denominator, each as a
    /// length-prefixed big-endian unsigned integer. Works are never negative.
    pub fn encode(&self, out: &mut Vec<u8>) {
        let numer = self.0.numer().to_biguint().unwrap_or_default().to_bytes_be();
        let denom = self.0.denom().to_biguint().unwrap_or_else(BigUint::one).to_bytes_be();
        for part in [numer, denom] {
            out.extend_from_slice(&(part.len() as u32).to_be_bytes());
            out.extend_from_slice(&part);
        }
    }
}

/// Share target `D` in (0, 1]: a hash is a valid share when its normalized
/// value does not exceed `D`. Stored as a reduced fraction of two `u64`s.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Target {
    numer: u64,
    denom: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Target {
    pub const ONE: Target = Target { numer: 1, denom: 1 };

    pub fn new(numer: u64, denom: u64) -> Result<Target, ParseError> {
        if numer == 0 || denom == 0 || numer > denom {
            return Err(ParseError::TargetRange(format!("{numer}/{denom}")));
        }
        let g = gcd(numer, denom);
        Ok(Target { numer: numer / g, denom: denom / g })
    }

    pub fn from_rational(value: &BigRational) -> Result<Target, ParseError> {
        let range_err = || ParseError::TargetRange(format_rational(value));
        let numer = value.numer().to_u64().ok_or_else(range_err)?;
        let denom = value.denom().to_u64().ok_or_else(range_err)?;
        Target::new(numer, denom).map_err(|_| range_err())
    }

    pub fn numer(&self) -> u64 {
        self.numer
    }

    pub fn denom(&self) -> u64 {
        self.denom
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(BigInt::from(self.numer), BigInt::from(self.denom))
    }

    pub fn to_f64(&self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    /// True when `value / 2^64 <= numer / denom`, compared exactly.
    pub fn admits(&self, value: u64) -> bool {
        (value as u128) * (self.denom as u128) <= (self.numer as u128) << 64
    }

    /// Expected hashes represented by `shares` shares at this target.
    pub fn work_of(&self, shares: u64) -> Work {
        Work(BigRational::new(BigInt::from(shares) * BigInt::from(self.denom), BigInt::from(self.numer)))
    }
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Target({}/{})", self.numer, self.denom)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom == 1 {
            write!(f, "{}", self.numer)
        } else {
            write!(f, "{}/{}", self.numer, self.denom)
        }
    }
}

impl FromStr for Target {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, ParseError> {
        Target::from_rational(&parse_rational(s)?)
    }
}

impl Serialize for Target {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let value = deserialize_rational(de)?;
        Target::from_rational(&value).map_err(serde::de::Error::custom)
    }
}
