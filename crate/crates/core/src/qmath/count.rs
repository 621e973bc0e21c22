use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::QmathError;

/// Integers above this are not exactly representable and print in
/// scientific notation.
const EXACT_LIMIT: f64 = 9_007_199_254_740_992.0;

/// A non-negative integer count that may be astronomically large
/// (`10^53` marbles), held as a binary mantissa/exponent pair in an `f64`.
///
/// Accepts plain integers and decimal strings in integer or scientific
/// notation (`"1e53"`, `"2.5e10"`). Below `2^53` the value is exact.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Count(f64);

impl Count {
    pub fn new(value: f64) -> Result<Count, QmathError> {
        if !value.is_finite() || value < 0.0 || value.fract() != 0.0 {
            return Err(QmathError::BadCount(value.to_string()));
        }
        Ok(Count(value))
    }

    pub fn get(&self) -> f64 {
        self.0
    }

    /// The count as a `u64` when it is exactly representable.
    pub fn as_u64(&self) -> Option<u64> {
        (self.0 <= EXACT_LIMIT).then_some(self.0 as u64)
    }
}

impl From<u64> for Count {
    fn from(n: u64) -> Count {
        Count(n as f64)
    }
}

impl FromStr for Count {
    type Err = QmathError;

    fn from_str(s: &str) -> Result<Count, QmathError> {
        let t = s.trim().replace('_', "");
        let bad = || QmathError::BadCount(s.to_string());
        if t.is_empty() || t.starts_with(['-', '+']) {
            return Err(bad());
        }
        if t.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(n) = t.parse::<u64>() {
                return Ok(Count::from(n));
            }
        }
        let value: f64 = t.parse().map_err(|_| bad())?;
        Count::new(value).map_err(|_| bad())
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_u64() {
            Some(n) => write!(f, "{n}"),
            None => write!(f, "{:e}", self.0),
        }
    }
}

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.as_u64() {
            Some(n) => serializer.serialize_u64(n),
            None => serializer.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Count {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Count, D::Error> {
        struct CountVisitor;

        impl Visitor<'_> for CountVisitor {
            type Value = Count;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer or a decimal string such as \"1e53\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Count, E> {
                Ok(Count::from(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Count, E> {
                Count::new(v as f64).map_err(E::custom)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Count, E> {
                Count::new(v).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Count, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(CountVisitor)
    }
}
