use std::f64::consts::{LN_10, PI};

use statrs::function::erf;

use super::QmathError;

/// Above this, `n` is treated through the Stirling route.
const EXACT_BINOMIAL_MAX_N: f64 = 60.0;
/// Below this `min(k, n - k)` the coefficient is summed term by term.
const DIRECT_SUM_MAX_K: f64 = 20.0;
/// `erfc` underflows near 26.5; past this the asymptotic series takes over.
const ERFC_ASYMPTOTIC_FROM: f64 = 26.0;

/// `ln Γ(z + 1) - [(z + 1/2) ln z - z + ln(2π)/2]` for `z >= 20`.
fn stirling_correction(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 / 1680.0)))
}

/// `stirling_correction(k)` for `k = 1..19`, where the series is too short.
const STIRLING_CORRECTION_SMALL: [f64; 19] = [
    0.081_061_466_795_327_258,
    0.041_340_695_955_409_294,
    0.027_677_925_684_998_339,
    0.020_790_672_103_765_093,
    0.016_644_691_189_821_192,
    0.013_876_128_823_070_748,
    0.011_896_709_945_891_77,
    0.010_411_265_261_972_096,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_871,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_53,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
    0.005_207_655_919_609_64,
    0.004_901_395_948_434_738,
    0.004_629_153_749_334_029,
    0.004_385_560_249_232_324,
];

fn stirling_error(k: f64) -> f64 {
    if k < 20.0 {
        STIRLING_CORRECTION_SMALL[k as usize - 1]
    } else {
        stirling_correction(k)
    }
}

/// `x ln(x / m) + m - x` given the deviation `y = x - m` separately, so the
/// near-cancelling case `x ~ m` keeps full relative precision.
fn deviance(x: f64, m: f64, y: f64) -> f64 {
    if x == 0.0 {
        return m;
    }
    if y.abs() < 0.1 * (x + m) {
        let v = y / (x + m);
        let v2 = v * v;
        let mut term = 2.0 * x * v;
        let mut sum = y * v;
        for j in 1..200 {
            term *= v2;
            let next = sum + term / (2 * j + 1) as f64;
            if next == sum {
                break;
            }
            sum = next;
        }
        sum
    } else {
        x * (x / m).ln() - y
    }
}

fn ln_factorial_small(m: u32) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

fn exact_binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k as u128 {
        c = c * (n as u128 - k as u128 + i) / i;
    }
    c
}

/// `log10 C(n, k)` for integer-valued `0 <= k <= n`.
///
/// Exact integer arithmetic for `n <= 60`; a term-by-term sum when
/// `min(k, n - k) < 20`; otherwise the entropy form of Stirling's series,
/// whose terms are all of one sign so the result keeps full relative
/// precision even at `n = 10^60`.
pub fn log10_binomial(n: f64, k: f64) -> Result<f64, QmathError> {
    let integral = |x: f64| x.is_finite() && x >= 0.0 && x.fract() == 0.0;
    if !integral(n) || !integral(k) || k > n {
        return Err(QmathError::BinomialDomain { n, k });
    }
    if n <= EXACT_BINOMIAL_MAX_N {
        return Ok((exact_binomial(n as u64, k as u64) as f64).log10());
    }
    let m = k.min(n - k);
    if m == 0.0 {
        return Ok(0.0);
    }
    let ln_c = if m < DIRECT_SUM_MAX_K {
        let ln_n = n.ln();
        let falling: f64 = (0..m as u32)
            .map(|i| ln_n + (-(i as f64) / n).ln_1p())
            .sum();
        falling - ln_factorial_small(m as u32)
    } else {
        let ratio = m / n;
        let rest = n - m;
        -m * ratio.ln() - rest * (-ratio).ln_1p() - 0.5 * (2.0 * PI * m * (1.0 - ratio)).ln()
            + stirling_correction(n)
            - stirling_correction(m)
            - stirling_correction(rest)
    };
    Ok(ln_c / LN_10)
}

/// `ln` of the Binomial(n, p) mass at `k`, with `q = 1 - p` supplied
/// separately so that either can be tiny.
///
/// Uses the saddle-point (deviance) form, which keeps full relative
/// precision near the mode even for `n ~ 10^15`, where the direct sum of
/// `ln C(n, k)`, `k ln p` and `(n - k) ln q` cancels catastrophically.
/// `n` and `k` must be integers below `2^53`.
pub fn ln_binomial_pmf(n: f64, k: f64, p: f64, q: f64) -> Result<f64, QmathError> {
    let integral = |x: f64| x.is_finite() && x >= 0.0 && x.fract() == 0.0;
    if !integral(n) || !integral(k) || k > n {
        return Err(QmathError::BinomialDomain { n, k });
    }
    for x in [p, q] {
        if !(0.0..=1.0).contains(&x) {
            return Err(QmathError::NotAProbability(x));
        }
    }
    if k == 0.0 {
        return Ok(if n == 0.0 { 0.0 } else { n * q.ln() });
    }
    if k == n {
        return Ok(n * p.ln());
    }
    if p == 0.0 || q == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let rest = n - k;
    // n p = m1 + e1 and n q = m2 + e2 exactly
    let m1 = n * p;
    let e1 = n.mul_add(p, -m1);
    let m2 = n * q;
    let e2 = n.mul_add(q, -m2);
    let y1 = (k - m1) - e1;
    let y2 = (rest - m2) - e2;
    let stirling = stirling_error(n) - stirling_error(k) - stirling_error(rest);
    Ok(stirling - deviance(k, m1, y1) - deviance(rest, m2, y2)
        + 0.5 * (n / (2.0 * PI * k * rest)).ln())
}

/// `log10 erfc(x)`, finite for every finite `x` (no underflow to `-inf`).
pub fn log10_erfc(x: f64) -> f64 {
    if x < ERFC_ASYMPTOTIC_FROM {
        return erf::erfc(x).log10();
    }
    // erfc(x) = e^{-x^2} / (x sqrt(pi)) * sum_k (-1)^k (2k-1)!! / (2x^2)^k
    let inv = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..12 {
        term *= -((2 * k - 1) as f64) * inv;
        sum += term;
    }
    (-x * x - (x * PI.sqrt()).ln() + sum.ln()) / LN_10
}
