use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use super::{EnsembleSpec, MarblesError};

/// Largest ensemble the Monte Carlo accepts.
pub const MONTE_CARLO_MAX_N: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarbleOutcome {
    In,
    Out,
    /// First hit came after `t_max`.
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionTrajectory {
    pub hit_times: Vec<f64>,
    pub outcomes: Vec<MarbleOutcome>,
    /// Latest first-hit time over all marbles, resolved or not.
    pub total_reduction_time: f64,
    pub final_k_in: u64,
    pub unresolved_count: u64,
}

impl ReductionTrajectory {
    pub fn all_resolved(&self) -> bool {
        self.unresolved_count == 0
    }
}

/// One trajectory without the per-marble vectors; a row of the CSV export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub seed_index: u64,
    pub total_reduction_time: f64,
    pub final_k_in: u64,
    pub unresolved_count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReductionStats {
    pub samples: u64,
    pub mean: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
    pub q50: f64,
    pub q99: f64,
}

/// Per-marble draws: an exponential hit time, then a uniform that picks
/// the branch. The branch test is `ln(1 - u) < ln b^2`, so a `b^2` below
/// `2^-53` can never fire.
struct Sampler {
    n: u64,
    hit: Exp<f64>,
    ln_b2: f64,
    t_max: f64,
}

impl Sampler {
    fn new(spec: &EnsembleSpec, t_max: f64) -> Result<Sampler, MarblesError> {
        let n = match spec.n.as_u64() {
            Some(n) if n <= MONTE_CARLO_MAX_N => n,
            _ => {
                return Err(MarblesError::MonteCarloCap {
                    n: spec.n.to_string(),
                    max: MONTE_CARLO_MAX_N,
                })
            }
        };
        if t_max.is_nan() || t_max <= 0.0 {
            return Err(MarblesError::BadTmax(t_max));
        }
        let rate = spec.grw.marble_rate();
        let hit =
            Exp::new(rate).map_err(|e| MarblesError::Domain(format!("hit rate {rate}: {e}")))?;
        Ok(Sampler {
            n,
            hit,
            ln_b2: spec.amplitudes.b2().ln(),
            t_max,
        })
    }

    fn rng(seed: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        rng
    }

    fn marble(&self, rng: &mut ChaCha8Rng) -> (f64, MarbleOutcome) {
        let t = self.hit.sample(rng);
        let u: f64 = rng.random();
        let outcome = if t > self.t_max {
            MarbleOutcome::Unresolved
        } else if (1.0 - u).ln() < self.ln_b2 {
            MarbleOutcome::Out
        } else {
            MarbleOutcome::In
        };
        (t, outcome)
    }

    fn summary(&self, seed: u64, index: u64) -> TrajectorySummary {
        let mut rng = Sampler::rng(seed, index);
        let mut s = TrajectorySummary {
            seed_index: index,
            total_reduction_time: 0.0,
            final_k_in: 0,
            unresolved_count: 0,
        };
        for _ in 0..self.n {
            let (t, outcome) = self.marble(&mut rng);
            s.total_reduction_time = s.total_reduction_time.max(t);
            match outcome {
                MarbleOutcome::In => s.final_k_in += 1,
                MarbleOutcome::Out => {}
                MarbleOutcome::Unresolved => s.unresolved_count += 1,
            }
        }
        s
    }
}

/// Trajectory number `index` of the stream family `seed`.
pub fn simulate_trajectory(
    spec: &EnsembleSpec,
    seed: u64,
    index: u64,
    t_max: f64,
) -> Result<ReductionTrajectory, MarblesError> {
    let sampler = Sampler::new(spec, t_max)?;
    let mut rng = Sampler::rng(seed, index);
    let (hit_times, outcomes): (Vec<f64>, Vec<MarbleOutcome>) =
        (0..sampler.n).map(|_| sampler.marble(&mut rng)).unzip();
    let total_reduction_time = hit_times.iter().copied().fold(0.0, f64::max);
    let count = |o: MarbleOutcome| outcomes.iter().filter(|&&x| x == o).count() as u64;
    Ok(ReductionTrajectory {
        total_reduction_time,
        final_k_in: count(MarbleOutcome::In),
        unresolved_count: count(MarbleOutcome::Unresolved),
        hit_times,
        outcomes,
    })
}

pub fn simulate_reduction(
    spec: &EnsembleSpec,
    seed: u64,
    t_max: f64,
) -> Result<ReductionTrajectory, MarblesError> {
    simulate_trajectory(spec, seed, 0, t_max)
}

/// Trajectories `0..count`, computed in parallel. Row `i` equals the
/// summary of `simulate_trajectory(spec, seed, i, t_max)`.
pub fn simulate_batch(
    spec: &EnsembleSpec,
    seed: u64,
    t_max: f64,
    count: u64,
) -> Result<Vec<TrajectorySummary>, MarblesError> {
    let sampler = Sampler::new(spec, t_max)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| sampler.summary(seed, i))
        .collect())
}

/// Mean, standard error and quantiles of the total reduction time.
pub fn reduction_time_stats(
    spec: &EnsembleSpec,
    samples: u64,
    seed: u64,
) -> Result<ReductionStats, MarblesError> {
    if samples < 100 {
        return Err(MarblesError::Domain(format!(
            "reduction_time_stats needs at least 100 samples, got {samples}"
        )));
    }
    let rows = simulate_batch(spec, seed, f64::INFINITY, samples)?;
    let mut times: Vec<f64> = rows.iter().map(|r| r.total_reduction_time).collect();
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    times.sort_by(f64::total_cmp);
    let quantile = |q: f64| times[((q * n).ceil() as usize).clamp(1, times.len()) - 1];
    Ok(ReductionStats {
        samples,
        mean,
        std_error: (var / n).sqrt(),
        q50: quantile(0.5),
        q99: quantile(0.99),
    })
}

/// CSV with columns `seed_index,total_reduction_time,final_k_in,unresolved_count`.
pub fn write_trajectory_csv<W: Write>(out: W, rows: &[TrajectorySummary]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marbles::{GrwParameters, MarbleAmplitudes};
    use crate::qmath::Count;

    fn spec(n: u64, a2: f64) -> EnsembleSpec {
        EnsembleSpec::with_amplitudes(n, MarbleAmplitudes::from_real_a2(a2).unwrap()).unwrap()
    }

    #[test]
    fn same_seed_same_trajectory() {
        let s = spec(50, 0.6);
        let a = simulate_reduction(&s, 7, 1.0).unwrap();
        let b = simulate_reduction(&s, 7, 1.0).unwrap();
        assert_eq!(a, b);
        let c = simulate_reduction(&s, 8, 1.0).unwrap();
        assert_ne!(a.hit_times, c.hit_times);
    }

    #[test]
    fn batch_rows_match_single_trajectories() {
        let s = spec(30, 0.5);
        let rows = simulate_batch(&s, 3, 2e-8, 16).unwrap();
        for row in &rows {
            let t = simulate_trajectory(&s, 3, row.seed_index, 2e-8).unwrap();
            assert_eq!(t.total_reduction_time, row.total_reduction_time);
            assert_eq!(t.final_k_in, row.final_k_in);
            assert_eq!(t.unresolved_count, row.unresolved_count);
        }
        assert!(rows.iter().any(|r| r.unresolved_count > 0));
    }

    #[test]
    fn tail_free_marbles_all_land_inside() {
        let s = EnsembleSpec::with_amplitudes(1000, MarbleAmplitudes::from_real_b2(0.0).unwrap())
            .unwrap();
        for seed in 0..5 {
            assert_eq!(simulate_reduction(&s, seed, 1.0).unwrap().final_k_in, 1000);
        }
    }

    #[test]
    fn unobservable_tail_never_fires() {
        let s =
            EnsembleSpec::with_amplitudes(10_000, MarbleAmplitudes::from_log10_b2(-1e15).unwrap())
                .unwrap();
        let t = simulate_reduction(&s, 1, 1.0).unwrap();
        assert_eq!(t.final_k_in, 10_000);
    }

    #[test]
    fn structural_invariants() {
        let s = spec(200, 0.3);
        let t = simulate_reduction(&s, 11, 1e-8).unwrap();
        let max = t.hit_times.iter().copied().fold(0.0, f64::max);
        assert_eq!(t.total_reduction_time, max);
        let ins = t
            .outcomes
            .iter()
            .filter(|&&o| o == MarbleOutcome::In)
            .count() as u64;
        assert_eq!(t.final_k_in, ins);
        for (time, o) in t.hit_times.iter().zip(&t.outcomes) {
            assert_eq!(*time > 1e-8, *o == MarbleOutcome::Unresolved);
        }
    }

    #[test]
    fn rejects_oversized_and_bad_tmax() {
        let big = EnsembleSpec::new(
            Count::new(1e8).unwrap(),
            MarbleAmplitudes::from_real_a2(0.5).unwrap(),
            GrwParameters::default(),
        )
        .unwrap();
        assert!(matches!(
            simulate_reduction(&big, 0, 1.0),
            Err(MarblesError::MonteCarloCap { .. })
        ));
        assert!(matches!(
            simulate_reduction(&spec(2, 0.5), 0, 0.0),
            Err(MarblesError::BadTmax(_))
        ));
        assert!(reduction_time_stats(&spec(2, 0.5), 99, 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = simulate_batch(&spec(3, 0.5), 0, 1.0, 2).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("seed_index,total_reduction_time,final_k_in,unresolved_count")
        );
        assert_eq!(lines.count(), 2);
    }
}
