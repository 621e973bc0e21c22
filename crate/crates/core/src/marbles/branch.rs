use serde::Serialize;

use super::{EnsembleSpec, MarblesError};
use crate::qmath::{ln_binomial_pmf, log10_binomial, Count, ExtReal, LogProb};

/// Smallest `a^2`, `b^2` handled by the saddle-point form.
const SADDLE_POINT_MIN_WEIGHT: f64 = 1e-290;

/// Largest `n` for which every one of the `2^n` terms is listed.
pub const ENUMERATION_MAX_N: u64 = 20;
/// Largest `n` for which [`count_distribution`] returns every class.
pub const DENSE_DISTRIBUTION_MAX_N: u64 = 1_000_000;

/// One term of the product-state expansion, or a class of them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BranchOutcome {
    pub k_in: Count,
    pub log_weight: LogProb,
    /// Bit `i` set when marble `i` is inside. Only for single terms with
    /// `n <= 64`.
    pub in_mask: Option<u64>,
}

/// Total weight `C(n, k) a^(2k) b^(2(n-k))` of the terms with exactly `k`
/// marbles inside.
pub fn branch_class_weight(spec: &EnsembleSpec, k: f64) -> Result<LogProb, MarblesError> {
    let n = spec.n.get();
    if !(k >= 0.0 && k <= n && k.fract() == 0.0) {
        return Err(MarblesError::Domain(format!(
            "k = {k} is not an integer in [0, {}]",
            spec.n
        )));
    }
    let a2 = spec.amplitudes.a2();
    if k == n {
        return Ok(a2.pow(n)?);
    }
    let (p, q) = (a2.to_real(), spec.amplitudes.b2().to_real());
    if p >= SADDLE_POINT_MIN_WEIGHT && q >= SADDLE_POINT_MIN_WEIGHT && spec.n.as_u64().is_some() {
        return Ok(LogProb::from_ln(ln_binomial_pmf(n, k, p, q)?)?);
    }
    // a tail below the f64 range: the terms no longer cancel
    let tail = spec.amplitudes.b2().pow(n - k)?;
    let (Some(l_tail), Some(l_a)) = (tail.log10_ext(), a2.log10_ext()) else {
        return Ok(LogProb::ZERO);
    };
    let l_c = ExtReal::from_f64(log10_binomial(n, k)?)?;
    Ok(LogProb::from_log10_ext(l_c + l_a.mul_f64(k)? + l_tail)?)
}

/// Every class weight, indexed by `k`.
pub fn count_distribution(spec: &EnsembleSpec) -> Result<Vec<LogProb>, MarblesError> {
    let n = match spec.n.as_u64() {
        Some(n) if n <= DENSE_DISTRIBUTION_MAX_N => n,
        _ => {
            return Err(MarblesError::MemoryGuard {
                n: spec.n.to_string(),
                max: DENSE_DISTRIBUTION_MAX_N,
            })
        }
    };
    (0..=n)
        .map(|k| branch_class_weight(spec, k as f64))
        .collect()
}

/// Class weights at the requested `k`, for any `n`.
pub fn count_distribution_at(
    spec: &EnsembleSpec,
    ks: &[f64],
) -> Result<Vec<LogProb>, MarblesError> {
    ks.iter().map(|&k| branch_class_weight(spec, k)).collect()
}

/// All `2^n` single terms, in mask order.
pub fn enumerate_branches(spec: &EnsembleSpec) -> Result<Vec<BranchOutcome>, MarblesError> {
    let n = match spec.n.as_u64() {
        Some(n) if n <= ENUMERATION_MAX_N => n as u32,
        _ => {
            return Err(MarblesError::MemoryGuard {
                n: spec.n.to_string(),
                max: ENUMERATION_MAX_N,
            })
        }
    };
    let a2 = spec.amplitudes.a2();
    let b2 = spec.amplitudes.b2();
    let mut terms = Vec::with_capacity(1 << n);
    for mask in 0u64..(1 << n) {
        let k = mask.count_ones();
        let weight = a2.pow(k as f64)? * b2.pow((n - k) as f64)?;
        terms.push(BranchOutcome {
            k_in: Count::from(k as u64),
            log_weight: weight,
            in_mask: Some(mask),
        });
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marbles::MarbleAmplitudes;

    fn spec(n: u64, a2: f64) -> EnsembleSpec {
        EnsembleSpec::with_amplitudes(n, MarbleAmplitudes::from_real_a2(a2).unwrap()).unwrap()
    }

    #[test]
    fn two_marble_cross_terms() {
        let w = branch_class_weight(&spec(2, 0.9), 1.0).unwrap();
        assert!((w.to_real() - 0.18).abs() < 1e-15);
        let d = count_distribution(&spec(2, 0.9)).unwrap();
        let lin: Vec<f64> = d.iter().map(|p| p.to_real()).collect();
        for (got, want) in lin.iter().zip([0.01, 0.18, 0.81]) {
            assert!((got - want).abs() < 1e-15, "{lin:?}");
        }
    }

    #[test]
    fn all_in_class_is_pow() {
        let s = spec(3, 0.9);
        let w = branch_class_weight(&s, 3.0).unwrap();
        assert_eq!(w, s.amplitudes.a2().pow(3.0).unwrap());
        assert!((w.to_real() - 0.729).abs() < 1e-15);
    }

    #[test]
    fn fair_four_marbles() {
        let d = count_distribution(&spec(4, 0.5)).unwrap();
        for (k, p) in d.iter().enumerate() {
            let want = [1.0, 4.0, 6.0, 4.0, 1.0][k] / 16.0;
            assert!((p.to_real() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn tail_free_limit() {
        let s =
            EnsembleSpec::with_amplitudes(5, MarbleAmplitudes::from_real_b2(0.0).unwrap()).unwrap();
        let d = count_distribution(&s).unwrap();
        assert!(d[5].is_one());
        assert!(d[..5].iter().all(|p| p.is_zero()));
    }

    #[test]
    fn rejects_bad_k_and_huge_dense_requests() {
        let s = spec(3, 0.9);
        assert!(branch_class_weight(&s, 4.0).is_err());
        assert!(branch_class_weight(&s, 1.5).is_err());
        let big = EnsembleSpec::new(
            "1e53".parse().unwrap(),
            MarbleAmplitudes::from_log10_b2(-1e15).unwrap(),
            Default::default(),
        )
        .unwrap();
        assert!(matches!(
            count_distribution(&big),
            Err(MarblesError::MemoryGuard { .. })
        ));
        assert!(enumerate_branches(&big).is_err());
        let w = count_distribution_at(&big, &[1e53]).unwrap();
        assert!(w[0].log10_ext().unwrap().is_sign_negative());
    }

    #[test]
    fn enumeration_masks_match_k() {
        let terms = enumerate_branches(&spec(6, 0.8)).unwrap();
        assert_eq!(terms.len(), 64);
        for t in &terms {
            assert_eq!(t.in_mask.unwrap().count_ones() as f64, t.k_in.get());
        }
    }
}
