use std::fmt;
use std::ops::Mul;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{ExtReal, QmathError, LOG10_E, LOG10_LN10};
use std::f64::consts::{LN_10, LOG10_2};

/// Below this value of `log10(n * p)` [`LogProb::complement_power`] switches
/// from `1 - (1 - p)^n` to the series `u - u^2/2 + u^3/6 - ...` in
/// `u = -n ln(1 - p)`. Both branches agree to ~1e-15 at the crossover.
pub const COMPLEMENT_SERIES_CROSSOVER_LOG10: f64 = -6.0;

/// Positive log10 values up to this size are treated as rounding and clamped.
const POSITIVE_TOLERANCE: f64 = 1e-12;

/// Largest `u` for which the four-term series is trusted.
const SERIES_MAX_U: f64 = 1e-3;

/// A probability stored as its decimal logarithm.
///
/// `None` is the exact-zero sentinel. It is distinct from any finite tiny
/// value: `b^2 = 0` means "no tail", not "a very small tail".
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogProb {
    log10: Option<ExtReal>,
}

impl LogProb {
    pub const ZERO: LogProb = LogProb { log10: None };
    pub const ONE: LogProb = LogProb {
        log10: Some(ExtReal::ZERO),
    };

    pub fn from_real(p: f64) -> Result<LogProb, QmathError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(QmathError::NotAProbability(p));
        }
        if p == 0.0 {
            return Ok(LogProb::ZERO);
        }
        let log10 = if p > 0.5 {
            (p - 1.0).ln_1p() / LN_10
        } else {
            p.log10()
        };
        LogProb::from_log10(log10)
    }

    /// From a decimal logarithm; `-inf` maps to exact zero.
    pub fn from_log10(log10: f64) -> Result<LogProb, QmathError> {
        if log10 == f64::NEG_INFINITY {
            return Ok(LogProb::ZERO);
        }
        LogProb::from_log10_ext(ExtReal::from_f64(log10)?)
    }

    /// From a natural logarithm, e.g. `|b|^2 = e^(-2 * 10^15)`.
    pub fn from_ln(ln: f64) -> Result<LogProb, QmathError> {
        if ln == f64::NEG_INFINITY {
            return Ok(LogProb::ZERO);
        }
        LogProb::from_log10_ext(ExtReal::from_f64(ln)?.mul_f64(LOG10_E)?)
    }

    pub fn from_log10_ext(log10: ExtReal) -> Result<LogProb, QmathError> {
        if log10.is_sign_negative() || log10.is_zero() {
            return Ok(LogProb { log10: Some(log10) });
        }
        if log10.to_f64() <= POSITIVE_TOLERANCE {
            return Ok(LogProb::ONE);
        }
        Err(QmathError::PositiveLog(log10.to_string()))
    }

    /// `log10(p)` as an `f64`; `None` for exact zero. Values closer to zero
    /// than the `f64` range round to `-0.0`; use [`log10_ext`](Self::log10_ext)
    /// to keep them.
    pub fn log10(&self) -> Option<f64> {
        self.log10.map(|x| x.to_f64())
    }

    pub fn log10_ext(&self) -> Option<ExtReal> {
        self.log10
    }

    /// Natural logarithm; `-inf` for exact zero.
    pub fn ln(&self) -> f64 {
        self.log10().map_or(f64::NEG_INFINITY, |l| l * LN_10)
    }

    pub fn is_zero(&self) -> bool {
        self.log10.is_none()
    }

    pub fn is_one(&self) -> bool {
        matches!(self.log10, Some(l) if l.is_zero())
    }

    /// Linear value; underflows to `0.0` below the `f64` range.
    pub fn to_real(&self) -> f64 {
        match self.log10 {
            None => 0.0,
            Some(l) => {
                let l = l.to_f64();
                if l < -400.0 {
                    0.0
                } else {
                    10f64.powf(l)
                }
            }
        }
    }

    /// `p^n`.
    pub fn pow(self, n: f64) -> Result<LogProb, QmathError> {
        if !n.is_finite() || n < 0.0 {
            return Err(QmathError::NegativeExponent(n));
        }
        if n == 0.0 {
            return Ok(LogProb::ONE);
        }
        match self.log10 {
            None => Ok(LogProb::ZERO),
            Some(l) => LogProb::from_log10_ext(l.mul_f64(n)?),
        }
    }

    /// `1 - p`, with full relative accuracy whether `p` is tiny or near one.
    pub fn one_minus(self) -> LogProb {
        let l = match self.log10 {
            None => return LogProb::ONE,
            Some(l) => l,
        };
        if l.is_zero() {
            return LogProb::ZERO;
        }
        if !l.fits_f64() {
            if l.log10_abs() < 0.0 {
                // p = 10^l with |l| below the f64 range: 1 - p = |l| ln 10 (1 + O(l))
                return LogProb::checked(l.log10_abs() + LOG10_LN10);
            }
            // p = 10^l lies below even the ExtReal range; pin the deficit there
            let deficit = ExtReal::new(-LOG10_E, super::MIN_EXPONENT);
            return LogProb::checked_ext(deficit);
        }
        let lf = l.to_f64();
        if lf > -LOG10_2 {
            // p > 1/2: 1 - p = -expm1(l ln 10)
            let q = -(lf * LN_10).exp_m1();
            return LogProb::checked(q.log10());
        }
        if lf >= -300.0 {
            let p = 10f64.powf(lf);
            return LogProb::checked_ext(ExtReal::from_f64((-p).ln_1p() / LN_10));
        }
        // p below the f64 range: log10(1 - p) = -p / ln 10 to within p^2
        let p = ExtReal::from_log10(lf).expect("finite log10");
        LogProb::checked_ext(p.mul_f64(-LOG10_E))
    }

    /// `1 - (1 - p)^n`, robust from `n p << 1` through `n p >> 1`.
    pub fn complement_power(self, n: f64) -> Result<LogProb, QmathError> {
        if !n.is_finite() || n < 0.0 {
            return Err(QmathError::NegativeExponent(n));
        }
        let l = match self.log10 {
            None => return Ok(LogProb::ZERO),
            Some(l) => l,
        };
        if n == 0.0 {
            return Ok(LogProb::ZERO);
        }
        if l.is_zero() {
            return Ok(LogProb::ONE);
        }
        // log10(1 - p), negative
        let log_q = self.one_minus().log10.expect("1 - p is nonzero for p < 1");
        let estimate = n.log10() + l.to_f64();
        if estimate < COMPLEMENT_SERIES_CROSSOVER_LOG10 {
            let u = -(log_q.mul_f64(n * LN_10)?);
            let uf = u.to_f64();
            if uf <= SERIES_MAX_U {
                let series = 1.0 - uf / 2.0 + uf * uf / 6.0 - uf * uf * uf / 24.0;
                return LogProb::from_log10_ext(ExtReal::from_f64(u.log10_abs() + series.log10())?);
            }
        }
        Ok(LogProb::from_log10_ext(log_q.mul_f64(n)?)?.one_minus())
    }

    /// `log10` of the sum of several probabilities (log-sum-exp). The result
    /// may exceed zero when the inputs do not describe disjoint events.
    /// `None` when every term is exact zero.
    pub fn log10_sum<I: IntoIterator<Item = LogProb>>(terms: I) -> Option<f64> {
        let logs: Vec<f64> = terms.into_iter().filter_map(|p| p.log10()).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return None;
        }
        let sum: f64 = logs.iter().map(|l| 10f64.powf(l - max)).sum();
        Some(max + sum.log10())
    }

    /// Short human-readable magnitude, e.g. `0.729`, `1.52e-23`,
    /// `10^-999999999999947` or `1 - 4.34e-21`.
    pub fn order_of_magnitude(&self) -> String {
        let l = match self.log10 {
            None => return "0".to_string(),
            Some(l) => l,
        };
        if l.is_zero() {
            return "1".to_string();
        }
        let lf = l.to_f64();
        if lf > -1e-6 {
            return format!("1 - {}", self.one_minus().order_of_magnitude());
        }
        if lf >= -300.0 {
            let x = 10f64.powf(lf);
            if x >= 1e-4 {
                return format!("{}", round_sig(x, 6));
            }
            return format!("{:.5e}", x);
        }
        format!("10^{}", round_sig(lf, 15))
    }

    fn checked(log10: f64) -> LogProb {
        LogProb::from_log10(log10).unwrap_or(LogProb::ONE)
    }

    fn checked_ext(log10: Result<ExtReal, QmathError>) -> LogProb {
        log10
            .and_then(LogProb::from_log10_ext)
            .unwrap_or(LogProb::ONE)
    }
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    if !scale.is_finite() || scale == 0.0 {
        return x;
    }
    (x * scale).round() / scale
}

impl Mul for LogProb {
    type Output = LogProb;

    fn mul(self, rhs: LogProb) -> LogProb {
        match (self.log10, rhs.log10) {
            (Some(a), Some(b)) => LogProb { log10: Some(a + b) },
            _ => LogProb::ZERO,
        }
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.order_of_magnitude())
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.fits_f64() {
            return serializer.serialize_f64(self.to_f64());
        }
        // a JSON number literal whose exponent is beyond f64
        let raw = RawValue::from_string(self.to_string()).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<ExtReal, D::Error> {
        let raw = Box::<RawValue>::deserialize(deserializer)?;
        let text = raw.get().trim();
        let text = text
            .strip_prefix('"')
            .and_then(|t| t.strip_suffix('"'))
            .unwrap_or(text);
        text.parse().map_err(de::Error::custom)
    }
}

impl Serialize for LogProb {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("LogProb", 1)?;
        s.serialize_field("log10", &self.log10)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for LogProb {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<LogProb, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Repr {
            log10: Option<ExtReal>,
        }
        let repr = Repr::deserialize(deserializer)?;
        match repr.log10 {
            None => Ok(LogProb::ZERO),
            Some(l) => LogProb::from_log10_ext(l).map_err(de::Error::custom),
        }
    }
}
