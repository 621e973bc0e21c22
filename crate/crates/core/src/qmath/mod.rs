//! Extended-range log-domain probability arithmetic.
//!
//! Every probability is held as its decimal logarithm in an [`ExtReal`], so
//! both `10^(-10^15)` and `1 - 10^(-10^15)` are representable without
//! underflow. Exact zero is a separate sentinel and is absorbing under
//! multiplication.

mod count;
mod ext;
mod logprob;
mod special;

use thiserror::Error;

pub use count::Count;
pub use ext::{ExtReal, MAX_EXPONENT, MIN_EXPONENT};
pub use logprob::{LogProb, COMPLEMENT_SERIES_CROSSOVER_LOG10};
pub use special::{ln_binomial_pmf, log10_binomial, log10_erfc};

/// `log10(e)`.
pub const LOG10_E: f64 = std::f64::consts::LOG10_E;
/// `log10(ln 10)`.
pub const LOG10_LN10: f64 = 0.362_215_688_699_463_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmathError {
    #[error("probability {0} is outside [0, 1]")]
    NotAProbability(f64),
    #[error("log10 value {0} is positive; a probability needs log10 <= 0")]
    PositiveLog(String),
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("exponent {0} must be finite and non-negative")]
    NegativeExponent(f64),
    #[error("binomial coefficient C({n}, {k}) needs integers with 0 <= k <= n")]
    BinomialDomain { n: f64, k: f64 },
    #[error("count {0} is not a non-negative integer")]
    BadCount(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("cannot parse {0:?}")]
    Parse(String),
}
