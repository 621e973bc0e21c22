//! The n-marble counting model.
//!
//! Each marble is in the state `a|in> + b|out>` with `|a|^2 >> |b|^2 > 0`,
//! and the ensemble is the n-fold product. This module gives the weights of
//! the branch classes of that product, the probability that every marble is
//! found inside, the threshold `n` above which "some marble is outside"
//! becomes likely, and a Monte Carlo of the GRW hit process that resolves
//! each marble.
//!
//! Relative phases of `a` and `b` are not stored; nothing here depends on
//! them.

mod anomaly;
mod branch;
mod reduction;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qmath::{Count, LogProb, QmathError};

pub use anomaly::{anomaly_threshold_n, max_tau_for_n, prob_all_in, prob_not_all_in};
pub use branch::{
    branch_class_weight, count_distribution, count_distribution_at, enumerate_branches,
    BranchOutcome, DENSE_DISTRIBUTION_MAX_N, ENUMERATION_MAX_N,
};
pub use reduction::{
    reduction_time_stats, simulate_batch, simulate_reduction, simulate_trajectory,
    write_trajectory_csv, MarbleOutcome, ReductionStats, ReductionTrajectory, TrajectorySummary,
    MONTE_CARLO_MAX_N,
};

/// `ln |b|^2` for a 1 g marble after a perception time, `e^(-2 * 10^15)`.
pub const DEFAULT_LN_B2: f64 = -2e15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarblesError {
    #[error(transparent)]
    Qmath(#[from] QmathError),
    #[error("{0}")]
    Domain(String),
    #[error("Monte Carlo is limited to n <= {max} marbles, got {n}")]
    MonteCarloCap { n: String, max: u64 },
    #[error("dense count distribution is limited to n <= {max}, got {n}; request specific k values instead")]
    MemoryGuard { n: String, max: u64 },
    #[error("t_max must be positive and not NaN, got {0}")]
    BadTmax(f64),
}

/// Squared moduli of the in-box and tail amplitudes of one marble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarbleAmplitudes {
    a2: LogProb,
    b2: LogProb,
}

impl MarbleAmplitudes {
    /// From the tail weight; `a^2 = 1 - b^2`. `b^2 = 0` is the tail-free
    /// limit, `b^2 = 1` is rejected.
    pub fn from_b2(b2: LogProb) -> Result<MarbleAmplitudes, MarblesError> {
        let a2 = b2.one_minus();
        if a2.is_zero() {
            return Err(MarblesError::Domain(
                "b^2 = 1 leaves no in-box branch".into(),
            ));
        }
        Ok(MarbleAmplitudes { a2, b2 })
    }

    pub fn from_a2(a2: LogProb) -> Result<MarbleAmplitudes, MarblesError> {
        if a2.is_zero() {
            return Err(MarblesError::Domain("a^2 must be positive".into()));
        }
        Ok(MarbleAmplitudes {
            a2,
            b2: a2.one_minus(),
        })
    }

    pub fn from_real_a2(a2: f64) -> Result<MarbleAmplitudes, MarblesError> {
        MarbleAmplitudes::from_a2(LogProb::from_real(a2)?)
    }

    pub fn from_real_b2(b2: f64) -> Result<MarbleAmplitudes, MarblesError> {
        MarbleAmplitudes::from_b2(LogProb::from_real(b2)?)
    }

    pub fn from_log10_b2(log10_b2: f64) -> Result<MarbleAmplitudes, MarblesError> {
        MarbleAmplitudes::from_b2(LogProb::from_log10(log10_b2)?)
    }

    pub fn from_ln_b2(ln_b2: f64) -> Result<MarbleAmplitudes, MarblesError> {
        MarbleAmplitudes::from_b2(LogProb::from_ln(ln_b2)?)
    }

    pub fn a2(&self) -> LogProb {
        self.a2
    }

    pub fn b2(&self) -> LogProb {
        self.b2
    }

    pub fn is_tail_free(&self) -> bool {
        self.b2.is_zero()
    }
}

impl Default for MarbleAmplitudes {
    fn default() -> Self {
        MarbleAmplitudes::from_ln_b2(DEFAULT_LN_B2).expect("default tail weight is valid")
    }
}

/// GRW hit parameters. Rates in s^-1, width in cm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrwParameters {
    pub lambda_per_nucleon: f64,
    pub nucleons_per_marble: f64,
    pub localization_width: f64,
}

impl GrwParameters {
    pub fn new(
        lambda_per_nucleon: f64,
        nucleons_per_marble: f64,
        localization_width: f64,
    ) -> Result<GrwParameters, MarblesError> {
        for (name, v) in [
            ("lambda", lambda_per_nucleon),
            ("nucleons", nucleons_per_marble),
            ("localization_width", localization_width),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MarblesError::Domain(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        let p = GrwParameters {
            lambda_per_nucleon,
            nucleons_per_marble,
            localization_width,
        };
        if !p.marble_rate().is_finite() {
            return Err(MarblesError::Domain("marble hit rate overflows".into()));
        }
        Ok(p)
    }

    /// Hit rate of a whole marble, `lambda * N`.
    pub fn marble_rate(&self) -> f64 {
        self.lambda_per_nucleon * self.nucleons_per_marble
    }

    /// Parameters with the given marble rate and default width.
    pub fn with_marble_rate(rate: f64) -> Result<GrwParameters, MarblesError> {
        GrwParameters::new(rate, 1.0, Self::default().localization_width)
    }
}

impl Default for GrwParameters {
    fn default() -> Self {
        GrwParameters {
            lambda_per_nucleon: 1e-16,
            nucleons_per_marble: 1e24,
            localization_width: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub n: Count,
    pub amplitudes: MarbleAmplitudes,
    pub grw: GrwParameters,
}

impl EnsembleSpec {
    pub fn new(
        n: Count,
        amplitudes: MarbleAmplitudes,
        grw: GrwParameters,
    ) -> Result<EnsembleSpec, MarblesError> {
        if n.get() < 1.0 {
            return Err(MarblesError::Domain("an ensemble needs n >= 1".into()));
        }
        Ok(EnsembleSpec { n, amplitudes, grw })
    }

    /// Default GRW parameters.
    pub fn with_amplitudes(
        n: u64,
        amplitudes: MarbleAmplitudes,
    ) -> Result<EnsembleSpec, MarblesError> {
        EnsembleSpec::new(Count::from(n), amplitudes, GrwParameters::default())
    }
}

/// The JSON form of an ensemble, e.g.
/// `{"n": "1e53", "log10_b2": -1e15, "lambda": 1e-16, "nucleons": 1e24, "t_max": 1e-3}`.
///
/// `log10_b2: null` is the tail-free limit; omitting it gives the default
/// `e^(-2 * 10^15)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleInput {
    pub n: Count,
    #[serde(default = "default_log10_b2")]
    pub log10_b2: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub nucleons: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
}

fn default_log10_b2() -> Option<f64> {
    Some(DEFAULT_LN_B2 * crate::qmath::LOG10_E)
}

impl EnsembleInput {
    pub fn to_spec(&self) -> Result<EnsembleSpec, MarblesError> {
        let defaults = GrwParameters::default();
        let b2 = match self.log10_b2 {
            None => LogProb::ZERO,
            Some(l) => LogProb::from_log10(l)?,
        };
        let grw = GrwParameters::new(
            self.lambda.unwrap_or(defaults.lambda_per_nucleon),
            self.nucleons.unwrap_or(defaults.nucleons_per_marble),
            defaults.localization_width,
        )?;
        EnsembleSpec::new(self.n, MarbleAmplitudes::from_b2(b2)?, grw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amplitudes_sum_to_one() {
        let m = MarbleAmplitudes::from_real_b2(0.1).unwrap();
        assert!((m.a2().to_real() + m.b2().to_real() - 1.0).abs() < 1e-12);
        let m = MarbleAmplitudes::from_real_a2(0.7).unwrap();
        assert!((m.b2().to_real() - 0.3).abs() < 1e-12);
        assert!(MarbleAmplitudes::from_real_b2(1.0).is_err());
        assert!(MarbleAmplitudes::from_real_b2(0.0).unwrap().is_tail_free());
    }

    #[test]
    fn default_tail_is_e_to_minus_two_e15() {
        let m = MarbleAmplitudes::default();
        let l = m.b2().log10().unwrap();
        assert!((l - (-2e15 / std::f64::consts::LN_10)).abs() < 1.0);
        assert!(!m.a2().is_one());
    }

    #[test]
    fn default_marble_rate() {
        assert_eq!(GrwParameters::default().marble_rate(), 1e8);
        assert!(GrwParameters::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ensemble_json() {
        let text =
            r#"{"n": "1e53", "log10_b2": -1e15, "lambda": 1e-16, "nucleons": 1e24, "t_max": 1e-3}"#;
        let input: EnsembleInput = serde_json::from_str(text).unwrap();
        let spec = input.to_spec().unwrap();
        assert_eq!(spec.n.get(), 1e53);
        assert_eq!(spec.amplitudes.b2().log10(), Some(-1e15));
        assert_eq!(input.t_max, Some(1e-3));

        let tail_free: EnsembleInput =
            serde_json::from_str(r#"{"n": 5, "log10_b2": null}"#).unwrap();
        assert!(tail_free.to_spec().unwrap().amplitudes.is_tail_free());
        let defaulted: EnsembleInput = serde_json::from_str(r#"{"n": 5}"#).unwrap();
        assert!(!defaulted.to_spec().unwrap().amplitudes.is_tail_free());

        assert!(serde_json::from_str::<EnsembleInput>(r#"{"n": 5, "bogus": 1}"#).is_err());
        assert!(serde_json::from_str::<EnsembleInput>(r#"{"n": 0}"#)
            .unwrap()
            .to_spec()
            .is_err());
    }
}
