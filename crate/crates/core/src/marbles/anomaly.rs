use std::f64::consts::LN_10;

use super::{EnsembleSpec, MarblesError};
use crate::qmath::{ExtReal, LogProb};

/// `P(N_in = n) = a^(2n)`.
pub fn prob_all_in(spec: &EnsembleSpec) -> Result<LogProb, MarblesError> {
    Ok(spec.amplitudes.a2().pow(spec.n.get())?)
}

/// `1 - (1 - b^2)^n`.
pub fn prob_not_all_in(spec: &EnsembleSpec) -> Result<LogProb, MarblesError> {
    Ok(spec.amplitudes.b2().complement_power(spec.n.get())?)
}

/// The largest `tau` with `P(N_in != n) <= tau`, i.e. `1 - (1 - b^2)^n`.
pub fn max_tau_for_n(n: f64, b2: LogProb) -> Result<LogProb, MarblesError> {
    if !(n >= 1.0 && n.is_finite()) {
        return Err(MarblesError::Domain(format!(
            "n must be finite and >= 1, got {n}"
        )));
    }
    Ok(b2.complement_power(n)?)
}

/// `ln(1 - tau) / ln(1 - b^2)`: for larger `n` the probability that some
/// marble is outside exceeds `tau`. Returned as an [`ExtReal`] because the
/// boundary can be far beyond the `f64` range.
pub fn anomaly_threshold_n(tau: LogProb, b2: LogProb) -> Result<ExtReal, MarblesError> {
    for (name, p) in [("tau", tau), ("b^2", b2)] {
        if p.is_zero() || p.is_one() {
            return Err(MarblesError::Domain(format!(
                "{name} must lie strictly between 0 and 1"
            )));
        }
    }
    Ok(neg_ln_one_minus(tau)? / neg_ln_one_minus(b2)?)
}

/// `-ln(1 - p)`, positive and never rounded to zero for `p > 0`.
fn neg_ln_one_minus(p: LogProb) -> Result<ExtReal, MarblesError> {
    let l = p
        .one_minus()
        .log10_ext()
        .ok_or_else(|| MarblesError::Domain("1 - p is zero".into()))?;
    if l.is_zero() {
        return Err(MarblesError::Domain("p is too close to 1".into()));
    }
    Ok((-l).mul_f64(LN_10)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marbles::MarbleAmplitudes;

    fn spec_b2(n: &str, b2: LogProb) -> EnsembleSpec {
        EnsembleSpec::new(
            n.parse().unwrap(),
            MarbleAmplitudes::from_b2(b2).unwrap(),
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn three_marbles() {
        let s = spec_b2("3", LogProb::from_real(0.1).unwrap());
        assert!((prob_all_in(&s).unwrap().to_real() - 0.729).abs() < 1e-15);
        assert!((prob_not_all_in(&s).unwrap().to_real() - 0.271).abs() < 1e-15);
        let tau = max_tau_for_n(3.0, LogProb::from_real(0.1).unwrap()).unwrap();
        assert!((tau.to_real() - 0.271).abs() < 1e-15);
    }

    #[test]
    fn single_marble_tail() {
        let b2 = LogProb::from_real(0.25).unwrap();
        let s = spec_b2("1", b2);
        assert!((prob_not_all_in(&s).unwrap().to_real() - 0.25).abs() < 1e-16);
        assert_eq!(max_tau_for_n(1.0, b2).unwrap().log10(), b2.log10());
    }

    #[test]
    fn universe_mass_ensemble() {
        let b2 = LogProb::from_log10(-1e15).unwrap();
        let s = spec_b2("1e53", b2);
        let all_in = prob_all_in(&s).unwrap();
        assert!(!all_in.is_one());
        let l = all_in.log10_ext().unwrap();
        // 10^53 * -10^(-10^15) / ln 10
        assert_eq!(l.decimal_parts().1, -1_000_000_000_000_000 + 53 - 1);
        let not_all = prob_not_all_in(&s).unwrap().log10().unwrap();
        assert!((not_all - (-1e15 + 53.0)).abs() <= 0.5);
        let tau = max_tau_for_n(1e53, b2).unwrap().log10().unwrap();
        assert!((tau - (-1e15 + 53.0)).abs() <= 1.0);
    }

    #[test]
    fn threshold_exact_case() {
        let n = anomaly_threshold_n(
            LogProb::from_real(0.5).unwrap(),
            LogProb::from_real(0.1).unwrap(),
        )
        .unwrap();
        // ln 0.5 / ln 0.9, 50-digit reference
        assert!((n.to_f64() - 6.578_813_478_960_584).abs() < 1e-13);
    }

    #[test]
    fn threshold_small_tau_is_tau_over_b2() {
        let tau = LogProb::from_real(1e-8).unwrap();
        let b2 = LogProb::from_real(1e-12).unwrap();
        let n = anomaly_threshold_n(tau, b2).unwrap().to_f64();
        assert!((n / 1e4 - 1.0).abs() < 1e-6);
        let n = anomaly_threshold_n(
            LogProb::from_log10(-1e15 + 53.0).unwrap(),
            LogProb::from_log10(-1e15).unwrap(),
        )
        .unwrap();
        assert!((n.log10_abs() - 53.0).abs() < 1e-6);
    }

    #[test]
    fn threshold_domain() {
        let half = LogProb::from_real(0.5).unwrap();
        assert!(anomaly_threshold_n(LogProb::ZERO, half).is_err());
        assert!(anomaly_threshold_n(half, LogProb::ONE).is_err());
        let tiny = anomaly_threshold_n(LogProb::from_real(1e-300).unwrap(), half).unwrap();
        assert!(tiny.to_f64() < 1e-299);
    }
}
