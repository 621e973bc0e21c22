use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use super::QmathError;

/// Smallest decimal exponent an [`ExtReal`] keeps. Magnitudes below it are
/// pinned here rather than flushed to zero.
pub const MIN_EXPONENT: i64 = -(1 << 62);
/// Largest decimal exponent an [`ExtReal`] keeps.
pub const MAX_EXPONENT: i64 = 1 << 62;

/// A real number with an `f64` mantissa and a 64-bit decimal exponent.
///
/// Values whose magnitude lies in `[1e-290, 1e290]` are held as a plain
/// `f64` (exponent zero) so ordinary arithmetic stays bit-exact. Outside that
/// band the value is `mantissa * 10^exponent` with `1 <= |mantissa| < 10`,
/// which keeps ~15 significant digits at magnitudes like `10^(-10^15)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtReal {
    mantissa: f64,
    exponent: i64,
}

const PLAIN_MAX_DECADE: i64 = 290;

/// `10^e` as an `f64`, splitting the power so intermediate factors stay normal.
pub(crate) fn pow10(e: i64) -> f64 {
    if e > 308 {
        f64::INFINITY
    } else if e < -400 {
        0.0
    } else if e >= -300 {
        10f64.powi(e as i32)
    } else {
        10f64.powi(-300) * 10f64.powi((e + 300) as i32)
    }
}

fn in_plain_band(x: f64) -> bool {
    x == 0.0 || (1e-290..=1e290).contains(&x.abs())
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal {
        mantissa: 0.0,
        exponent: 0,
    };
    pub const ONE: ExtReal = ExtReal {
        mantissa: 1.0,
        exponent: 0,
    };

    /// `mantissa * 10^exponent` in canonical form.
    fn normalized(mantissa: f64, exponent: i64) -> ExtReal {
        if mantissa == 0.0 {
            return ExtReal::ZERO;
        }
        debug_assert!(mantissa.is_finite());
        if exponent == 0 && in_plain_band(mantissa) {
            return ExtReal {
                mantissa,
                exponent: 0,
            };
        }
        let shift = mantissa.abs().log10().floor() as i64;
        let mut m = if shift == 0 {
            mantissa
        } else {
            mantissa * pow10(-shift)
        };
        let mut e = exponent.saturating_add(shift);
        // log10 can land one decade off near exact powers of ten
        if m.abs() >= 10.0 {
            m /= 10.0;
            e = e.saturating_add(1);
        } else if m.abs() < 1.0 {
            m *= 10.0;
            e = e.saturating_sub(1);
        }
        if e.abs() <= PLAIN_MAX_DECADE {
            return ExtReal {
                mantissa: m * pow10(e),
                exponent: 0,
            };
        }
        ExtReal {
            mantissa: m,
            exponent: e.clamp(MIN_EXPONENT, MAX_EXPONENT),
        }
    }

    /// Decimal decomposition `(m, e)` with `1 <= |m| < 10` (or `(0, 0)`).
    pub fn decimal_parts(&self) -> (f64, i64) {
        if self.exponent != 0 || self.mantissa == 0.0 {
            return (self.mantissa, self.exponent);
        }
        let x = self.mantissa;
        let mut e = x.abs().log10().floor() as i64;
        let mut m = x * pow10(-e);
        if m.abs() >= 10.0 {
            m /= 10.0;
            e += 1;
        } else if m.abs() < 1.0 {
            m *= 10.0;
            e -= 1;
        }
        (m, e)
    }

    /// Builds `mantissa * 10^exponent`, renormalizing the mantissa.
    pub fn new(mantissa: f64, exponent: i64) -> Result<ExtReal, QmathError> {
        if !mantissa.is_finite() {
            return Err(QmathError::NonFinite(mantissa));
        }
        Ok(ExtReal::normalized(mantissa, exponent))
    }

    pub fn from_f64(x: f64) -> Result<ExtReal, QmathError> {
        if !x.is_finite() {
            return Err(QmathError::NonFinite(x));
        }
        if in_plain_band(x) {
            return Ok(ExtReal {
                mantissa: x,
                exponent: 0,
            });
        }
        // subnormals lose digits in log10; lift them first
        if x.abs() < 1e-290 {
            return Ok(ExtReal::normalized(x * 1e300, -300));
        }
        Ok(ExtReal::normalized(x * 1e-300, 300))
    }

    /// `10^log10` for any finite `log10`, including values far below the
    /// `f64` range.
    pub fn from_log10(log10: f64) -> Result<ExtReal, QmathError> {
        if !log10.is_finite() {
            return Err(QmathError::NonFinite(log10));
        }
        if log10.abs() <= PLAIN_MAX_DECADE as f64 {
            return Ok(ExtReal::normalized(10f64.powf(log10), 0));
        }
        let whole = log10.floor();
        if whole < MIN_EXPONENT as f64 {
            return Ok(ExtReal {
                mantissa: 1.0,
                exponent: MIN_EXPONENT,
            });
        }
        if whole > MAX_EXPONENT as f64 {
            return Err(QmathError::NonFinite(f64::INFINITY));
        }
        let frac = log10 - whole;
        Ok(ExtReal::normalized(10f64.powf(frac), whole as i64))
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    pub fn is_sign_negative(&self) -> bool {
        self.mantissa < 0.0
    }

    pub fn abs(self) -> ExtReal {
        ExtReal {
            mantissa: self.mantissa.abs(),
            exponent: self.exponent,
        }
    }

    /// Nearest `f64`; overflows to infinity and underflows to zero.
    pub fn to_f64(&self) -> f64 {
        if self.exponent == 0 {
            return self.mantissa;
        }
        if self.exponent > 308 {
            return self.mantissa.signum() * f64::INFINITY;
        }
        if self.exponent < -330 {
            return self.mantissa.signum() * 0.0;
        }
        self.mantissa * pow10(self.exponent)
    }

    /// Whether the value is held as a plain `f64`.
    pub fn fits_f64(&self) -> bool {
        self.exponent == 0
    }

    /// `log10(|self|)`; `-inf` for zero.
    pub fn log10_abs(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.mantissa.abs().log10() + self.exponent as f64
    }

    pub fn mul_f64(self, x: f64) -> Result<ExtReal, QmathError> {
        Ok(self * ExtReal::from_f64(x)?)
    }

    pub fn recip(self) -> Result<ExtReal, QmathError> {
        if self.is_zero() {
            return Err(QmathError::DivisionByZero);
        }
        if self.exponent == 0 {
            let r = 1.0 / self.mantissa;
            if in_plain_band(r) {
                return Ok(ExtReal::normalized(r, 0));
            }
        }
        let (m, e) = self.decimal_parts();
        Ok(ExtReal::normalized(1.0 / m, e.saturating_neg()))
    }
}

impl Add for ExtReal {
    type Output = ExtReal;

    fn add(self, rhs: ExtReal) -> ExtReal {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        if self.exponent == 0 && rhs.exponent == 0 {
            return ExtReal::normalized(self.mantissa + rhs.mantissa, 0);
        }
        let (a, b) = (self.decimal_parts(), rhs.decimal_parts());
        let (big, small) = if a.1 >= b.1 { (a, b) } else { (b, a) };
        let gap = big.1.saturating_sub(small.1);
        if gap > 20 {
            return ExtReal::normalized(big.0, big.1);
        }
        ExtReal::normalized(big.0 + small.0 * pow10(-gap), big.1)
    }
}

impl Sub for ExtReal {
    type Output = ExtReal;

    fn sub(self, rhs: ExtReal) -> ExtReal {
        self + (-rhs)
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;

    fn neg(self) -> ExtReal {
        ExtReal {
            mantissa: -self.mantissa,
            exponent: self.exponent,
        }
    }
}

impl Mul for ExtReal {
    type Output = ExtReal;

    fn mul(self, rhs: ExtReal) -> ExtReal {
        if self.is_zero() || rhs.is_zero() {
            return ExtReal::ZERO;
        }
        if self.exponent == 0 && rhs.exponent == 0 {
            let p = self.mantissa * rhs.mantissa;
            if p.is_finite() && in_plain_band(p) {
                return ExtReal {
                    mantissa: p,
                    exponent: 0,
                };
            }
        }
        let (a, b) = (self.decimal_parts(), rhs.decimal_parts());
        ExtReal::normalized(a.0 * b.0, a.1.saturating_add(b.1))
    }
}

impl Div for ExtReal {
    type Output = ExtReal;

    /// Panics on division by zero; use [`ExtReal::recip`] for a checked path.
    fn div(self, rhs: ExtReal) -> ExtReal {
        self * rhs.recip().expect("ExtReal division by zero")
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &ExtReal) -> Option<Ordering> {
        let sign = |x: &ExtReal| {
            if x.mantissa > 0.0 {
                1
            } else if x.mantissa < 0.0 {
                -1
            } else {
                0
            }
        };
        let (sa, sb) = (sign(self), sign(other));
        if sa != sb || sa == 0 {
            return sa.partial_cmp(&sb);
        }
        let (a, b) = (self.decimal_parts(), other.decimal_parts());
        let magnitude = if self.exponent == 0 && other.exponent == 0 {
            self.mantissa.abs().total_cmp(&other.mantissa.abs())
        } else {
            a.1.cmp(&b.1).then(a.0.abs().total_cmp(&b.0.abs()))
        };
        Some(if sa > 0 {
            magnitude
        } else {
            magnitude.reverse()
        })
    }
}

impl fmt::Display for ExtReal {
    /// Plain `f64` formatting inside the normal range, `<mantissa>e<exponent>`
    /// outside it. Both forms are valid JSON number literals.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.fits_f64() {
            let x = self.to_f64();
            if x != 0.0 && (x.abs() >= 1e16 || x.abs() < 1e-5) {
                write!(f, "{x:e}")
            } else {
                write!(f, "{x}")
            }
        } else {
            write!(f, "{}e{}", self.mantissa, self.exponent)
        }
    }
}

impl FromStr for ExtReal {
    type Err = QmathError;

    fn from_str(s: &str) -> Result<ExtReal, QmathError> {
        let s = s.trim();
        let bad = || QmathError::Parse(s.to_string());
        let (digits, exponent) = match s.find(['e', 'E']) {
            Some(pos) => (&s[..pos], s[pos + 1..].parse::<i64>().map_err(|_| bad())?),
            None => (s, 0),
        };
        if digits.is_empty() || digits.contains(['e', 'E']) {
            return Err(bad());
        }
        let mantissa: f64 = digits.parse().map_err(|_| bad())?;
        if !mantissa.is_finite() {
            return Err(bad());
        }
        Ok(ExtReal::normalized(mantissa, exponent))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn round_trips_ordinary_reals() {
        for x in [1.0, -0.13727, 0.1, 6.02e23, -3.5e-250, 4.9e-310, 1.7e308] {
            let e = ExtReal::from_f64(x).unwrap();
            assert!(rel(e.to_f64(), x) < 1e-12, "{x} -> {e:?}");
        }
        assert_eq!(ExtReal::from_f64(0.0).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn holds_magnitudes_outside_f64() {
        let tiny = ExtReal::from_log10(-1e15).unwrap();
        let (m, e) = tiny.decimal_parts();
        assert_eq!(e, -1_000_000_000_000_000);
        assert!((m - 1.0).abs() < 1e-15);
        assert_eq!(tiny.to_f64(), 0.0);
        let scaled = tiny.mul_f64(1e53).unwrap();
        assert_eq!(scaled.decimal_parts().1, -999_999_999_999_947);
        assert!((scaled.log10_abs() + 999_999_999_999_947.0).abs() < 1e-3);
    }

    #[test]
    fn addition_aligns_exponents() {
        let a = ExtReal::new(9.5, -1_000_000).unwrap();
        let b = ExtReal::new(7.0, -1_000_001).unwrap();
        let s = a + b;
        let (m, e) = s.decimal_parts();
        assert_eq!(e, -999_999);
        assert!((m - 1.02).abs() < 1e-14);
        assert!((a - a).is_zero());
        // a far smaller term is absorbed
        let big = ExtReal::from_f64(1.0).unwrap();
        assert_eq!(big + a, big);
    }

    #[test]
    fn ordering_respects_sign_and_magnitude() {
        let small = ExtReal::from_log10(-1e15).unwrap();
        let one = ExtReal::ONE;
        assert!(small < one);
        assert!(-one < -small);
        assert!(-small < ExtReal::ZERO);
        assert!(ExtReal::ZERO < small);
    }

    #[test]
    fn division_and_reciprocal() {
        let a = ExtReal::from_log10(-999_999_999_999_947.0).unwrap();
        let b = ExtReal::from_log10(-1e15).unwrap();
        assert!(rel((a / b).to_f64(), 1e53) < 1e-12);
        assert!(ExtReal::ZERO.recip().is_err());
    }

    #[test]
    fn parses_and_prints_extended_literals() {
        let x: ExtReal = "-4.342944819032518e-1000000000000001".parse().unwrap();
        assert_eq!(x.decimal_parts().1, -1_000_000_000_000_001);
        assert_eq!(x.to_string(), "-4.342944819032518e-1000000000000001");
        let y: ExtReal = "-0.13727247168202539".parse().unwrap();
        assert_eq!(y.to_f64(), -0.13727247168202539);
        assert_eq!(y.to_string(), "-0.1372724716820254");
        let z: ExtReal = "-1e15".parse().unwrap();
        assert_eq!(z.to_f64(), -1e15);
        assert!("e5".parse::<ExtReal>().is_err());
        assert!("1e".parse::<ExtReal>().is_err());
        assert!("nan".parse::<ExtReal>().is_err());
    }
}
