//! Bandwidth quantities.
//!
//! Every rate is carried internally as an integral number of bytes per second.
//! Literals accept byte-based (`B/s`, `KB/s`, `MB/s`, `GB/s`) and bit-based
//! (`bps`, `Kbps`, `Mbps`, `Gbps`) suffixes with decimal SI multipliers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A rate in bytes per second.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(pub u64);

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RateError {
    #[error("malformed rate literal `{0}`")]
    Malformed(String),
    #[error("rate literal `{0}` is not a whole number of bytes per second")]
    Fractional(String),
    #[error("rate literal `{0}` overflows 64 bits")]
    Overflow(String),
}

/// (suffix, numerator, denominator) in bytes/s per unit.
const UNITS: &[(&str, u128, u128)] = &[
    ("GB/s", 1_000_000_000, 1),
    ("MB/s", 1_000_000, 1),
    ("KB/s", 1_000, 1),
    ("B/s", 1, 1),
    ("Gbps", 1_000_000_000, 8),
    ("Mbps", 1_000_000, 8),
    ("Kbps", 1_000, 8),
    ("bps", 1, 8),
];

impl Rate {
    pub const ZERO: Rate = Rate(0);

    pub fn bytes_per_sec(self) -> u64 {
        self.0
    }

    pub fn mbps(megabytes: u64) -> Rate {
        Rate(megabytes * 1_000_000)
    }

    /// Length in bytes of the unit suffix that starts the string, if any.
    pub fn unit_suffix_len(s: &str) -> Option<usize> {
        UNITS
            .iter()
            .find(|(suffix, _, _)| s.starts_with(suffix))
            .map(|(suffix, _, _)| suffix.len())
    }

    pub fn parse_literal(text: &str) -> Result<Rate, RateError> {
        let s = text.trim();
        let split = s
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .unwrap_or(s.len());
        let (number, unit) = s.split_at(split);
        if number.is_empty() {
            return Err(RateError::Malformed(text.to_string()));
        }
        let (num_unit, den_unit) = if unit.is_empty() {
            (1, 1)
        } else {
            let (_, n, d) = UNITS
                .iter()
                .find(|(suffix, _, _)| *suffix == unit)
                .ok_or_else(|| RateError::Malformed(text.to_string()))?;
            (*n, *d)
        };
        let (int_part, frac_part) = match number.split_once('.') {
            Some((i, f)) => (i, f),
            None => (number, ""),
        };
        if int_part.is_empty() || frac_part.contains('.') || (number.contains('.') && frac_part.is_empty()) {
            return Err(RateError::Malformed(text.to_string()));
        }
        let digits = format!("{int_part}{frac_part}");
        let mantissa: u128 = digits
            .parse()
            .map_err(|_| RateError::Overflow(text.to_string()))?;
        let scale = 10u128
            .checked_pow(frac_part.len() as u32)
            .ok_or_else(|| RateError::Overflow(text.to_string()))?;
        let numerator = mantissa
            .checked_mul(num_unit)
            .ok_or_else(|| RateError::Overflow(text.to_string()))?;
        let denominator = scale * den_unit;
        if numerator % denominator != 0 {
            return Err(RateError::Fractional(text.to_string()));
        }
        let value = numerator / denominator;
        u64::try_from(value)
            .map(Rate)
            .map_err(|_| RateError::Overflow(text.to_string()))
    }
}

impl FromStr for Rate {
    type Err = RateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rate::parse_literal(s)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        if v == 0 {
            return write!(f, "0B/s");
        }
        for (suffix, n, d) in UNITS.iter().take(4) {
            let unit = (*n / *d) as u64;
            if v % unit == 0 {
                return write!(f, "{}{}", v / unit, suffix);
            }
        }
        write!(f, "{v}B/s")
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u64(self.0)
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(v) => Ok(Rate(v)),
            Raw::Text(s) => Rate::parse_literal(&s).map_err(serde::de::Error::custom),
        }
    }
}
