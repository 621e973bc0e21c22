//! Randomized search for a model that is conserving, ideal and
//! orthogonal-outcome while `[Gamma_S, M] != 0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    additive, chain_identity_residual, commutator_obstruction, conservation_residual, cyclic_shift,
    haar_unitary, outcome_projections, random_hermitian, OperatorMatrix, WAYModel, WayError,
    MIN_FIDELITY, PRECONDITION_TOLERANCE,
};

/// Obstruction above which a conserving, ideal, orthogonal model would
/// contradict the theorem.
pub const OBSTRUCTION_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct WitnessSearch {
    pub tested: usize,
    pub conserving: usize,
    pub ideal: usize,
    pub orthogonal: usize,
    pub all_three: usize,
    /// Indices of models that are all three and have a commutator above
    /// [`OBSTRUCTION_THRESHOLD`].
    pub counterexamples: Vec<usize>,
    pub max_obstruction_all_three: f64,
    /// Models meeting the chain preconditions.
    pub chain_checked: usize,
    pub max_chain_residual: f64,
}

fn random_unit<R: Rng>(n: usize, rng: &mut R) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|c| c / norm).collect()
}

fn basis_state(n: usize, k: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    v[k] = Complex64::new(1.0, 0.0);
    v
}

fn rotated_diagonal(w: &OperatorMatrix, values: &[f64]) -> OperatorMatrix {
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    OperatorMatrix(w.matrix() * d * w.matrix().adjoint()).hermitian_part()
}

/// A Hermitian operator with small integer eigenvalues, so that sums of
/// two such operators have degenerate spectra.
fn integer_spectrum<R: Rng>(n: usize, rng: &mut R) -> OperatorMatrix {
    let w = haar_unitary(n, rng);
    let values: Vec<f64> = (0..n)
        .map(|_| f64::from(rng.random_range(-2i32..=2)))
        .collect();
    rotated_diagonal(&w, &values)
}

/// `exp(-i H)` for a random `H` commuting with `gamma`: random Hermitian
/// blocks on each eigenspace.
fn conserving_unitary<R: Rng>(
    gamma: &OperatorMatrix,
    rng: &mut R,
) -> Result<OperatorMatrix, WayError> {
    let (values, v) = gamma.eigh();
    let n = values.len();
    let scale = values.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end] - values[start] < 1e-9 * scale {
            end += 1;
        }
        let block = random_hermitian(end - start, rng);
        h.view_mut((start, start), (end - start, end - start))
            .copy_from(block.matrix());
        start = end;
    }
    let h = OperatorMatrix(&v * h * v.adjoint()).hermitian_part();
    h.exp_i(1.0)
}

fn distinct_values<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|k| k as f64 + 0.1 + 0.8 * rng.random::<f64>())
        .collect()
}

fn pick_dims<R: Rng>(max_dim: usize, rng: &mut R) -> (usize, usize) {
    let ds = rng.random_range(2..=4usize.min(max_dim / 2));
    let da_max = (max_dim / ds).clamp(ds, 8);
    (ds, rng.random_range(ds..=da_max))
}

fn build(index: usize, seed: u64, max_dim: usize) -> Result<WAYModel, WayError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let (ds, da) = pick_dims(max_dim, &mut rng);
    match index % 4 {
        // generic conserving coupling
        0 => {
            let m = random_hermitian(ds, &mut rng);
            let gs = integer_spectrum(ds, &mut rng);
            let ga = integer_spectrum(da, &mut rng);
            let u = conserving_unitary(&additive(&gs, &ga), &mut rng)?;
            let ready = random_unit(da, &mut rng);
            WAYModel::new(m, gs, ga, u, ready)
        }
        // controlled shift of a cyclic pointer, with Gamma_A a function of
        // the shift and Gamma_S diagonal, generic or nearly diagonal
        1 => {
            let w = haar_unitary(ds, &mut rng);
            let m = rotated_diagonal(&w, &distinct_values(ds, &mut rng));
            let x = cyclic_shift(da);
            let mut u = OperatorMatrix::zeros(ds * da);
            let mut shift = OperatorMatrix::identity(da);
            for k in 0..ds {
                let wk = w.matrix().column(k).into_owned();
                let proj = OperatorMatrix(&wk * wk.adjoint());
                u = &u + &proj.kron(&shift);
                shift = &x * &shift;
            }
            let fourier = DMatrix::from_fn(da, da, |r, c| {
                let phase = std::f64::consts::TAU * (r * c) as f64 / da as f64;
                Complex64::from_polar(1.0 / (da as f64).sqrt(), phase)
            });
            let ga = rotated_diagonal(
                &OperatorMatrix(fourier),
                &(0..da).map(|_| rng.random::<f64>()).collect::<Vec<_>>(),
            );
            let diag = rotated_diagonal(
                &w,
                &(0..ds).map(|_| rng.random::<f64>()).collect::<Vec<_>>(),
            );
            let gs = match rng.random_range(0..3) {
                0 => diag,
                1 => random_hermitian(ds, &mut rng),
                _ => {
                    let eps = 10f64.powf(-rng.random_range(4.0..10.0));
                    let noise = random_hermitian(ds, &mut rng);
                    OperatorMatrix(diag.matrix() + noise.matrix() * Complex64::new(eps, 0.0))
                }
            };
            let ready = if rng.random::<bool>() {
                basis_state(da, 0)
            } else {
                random_unit(da, &mut rng)
            };
            WAYModel::new(m, gs, ga, u, ready)
        }
        // apparatus-only coupling: ideal and conserving, uninformative
        2 => {
            let m = random_hermitian(ds, &mut rng);
            let gs = random_hermitian(ds, &mut rng);
            let ga = integer_spectrum(da, &mut rng);
            let v = conserving_unitary(&ga, &mut rng)?;
            let u = OperatorMatrix::identity(ds).kron(&v);
            let ready = random_unit(da, &mut rng);
            WAYModel::new(m, gs, ga, u, ready)
        }
        _ => {
            let m = random_hermitian(ds, &mut rng);
            let gs = random_hermitian(ds, &mut rng);
            let ga = random_hermitian(da, &mut rng);
            let u = haar_unitary(ds * da, &mut rng);
            let ready = random_unit(da, &mut rng);
            WAYModel::new(m, gs, ga, u, ready)
        }
    }
}

#[derive(Default)]
struct Verdict {
    conserving: bool,
    ideal: bool,
    orthogonal: bool,
    obstruction: f64,
    chain: Option<f64>,
}

fn judge(model: &WAYModel) -> Result<Verdict, WayError> {
    let conserving =
        conservation_residual(model.u(), &model.total_gamma())? < PRECONDITION_TOLERANCE;
    let outcomes = outcome_projections(model)?;
    let ideal = outcomes
        .iter()
        .all(|o| (o.fidelity - 1.0).abs() < PRECONDITION_TOLERANCE);
    let orthogonal = outcomes.iter().all(|o| o.fidelity > MIN_FIDELITY) && {
        let states: Vec<_> = outcomes
            .iter()
            .map(|o| &o.apparatus_state / Complex64::new(o.fidelity.sqrt(), 0.0))
            .collect();
        (0..states.len())
            .all(|a| (0..a).all(|b| states[a].dotc(&states[b]).norm() < PRECONDITION_TOLERANCE))
    };
    let obstruction = commutator_obstruction(model.m(), model.gamma_s())?;
    let mut chain = None;
    if conserving && ideal {
        let n = model.dim_s();
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                if let Some(r) = chain_identity_residual(model, a, b)?.residual() {
                    worst = worst.max(r);
                }
            }
        }
        chain = Some(worst);
    }
    Ok(Verdict {
        conserving,
        ideal,
        orthogonal,
        obstruction,
        chain,
    })
}

/// Builds `count` random models (generic conserving couplings, controlled
/// shifts, apparatus-only couplings and Haar couplings, in rotation) with
/// `dim_s * dim_a <= max_dim`, and tallies which properties each has.
pub fn witness_search(count: usize, seed: u64, max_dim: usize) -> Result<WitnessSearch, WayError> {
    if max_dim < 4 {
        return Err(WayError::Domain(format!(
            "max_dim must be >= 4, got {max_dim}"
        )));
    }
    let verdicts: Vec<Verdict> = (0..count)
        .into_par_iter()
        .map(|i| build(i, seed, max_dim).and_then(|m| judge(&m)))
        .collect::<Result<_, _>>()?;
    let mut out = WitnessSearch {
        tested: count,
        ..WitnessSearch::default()
    };
    for (i, v) in verdicts.iter().enumerate() {
        out.conserving += usize::from(v.conserving);
        out.ideal += usize::from(v.ideal);
        out.orthogonal += usize::from(v.orthogonal);
        if v.conserving && v.ideal && v.orthogonal {
            out.all_three += 1;
            out.max_obstruction_all_three = out.max_obstruction_all_three.max(v.obstruction);
            if v.obstruction > OBSTRUCTION_THRESHOLD {
                out.counterexamples.push(i);
            }
        }
        if let Some(r) = v.chain {
            out.chain_checked += 1;
            out.max_chain_residual = out.max_chain_residual.max(r);
        }
    }
    Ok(out)
}
