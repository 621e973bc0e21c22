//! Best conserving measurement of a spin-1/2 `S_z` by a spin-`j` apparatus
//! with `Gamma = S_x (x) 1 + 1 (x) J_x`.
//!
//! In the joint eigenbasis `|sigma, mu>` of `S_x` and `J_x` the conserved
//! quantity is `sigma + mu`, so its commutant is block diagonal: a `U(2)`
//! block on each pair `{|+, mu>, |-, mu + 1>}` and a phase on the two
//! extreme states. The family is parameterized by those blocks plus the
//! ready state and searched with Nelder–Mead.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{spin_operators, OperatorMatrix, WAYModel, WayError};

const MAX_J: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerStatus {
    Converged,
    BudgetExhausted,
    Failed,
}

impl OptimizerStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerStatus::Converged => "converged",
            OptimizerStatus::BudgetExhausted => "budget_exhausted",
            OptimizerStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub restarts: usize,
    /// Objective evaluations per restart; `None` scales with the number of
    /// parameters.
    pub max_evals: Option<usize>,
    pub seed: u64,
    /// Simplex spread in objective value that counts as converged.
    pub ftol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            restarts: 20,
            max_evals: None,
            seed: 0,
            ftol: 1e-13,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub j: f64,
    /// Apparatus dimension `2j + 1`.
    pub dim: usize,
    /// `<A0| J_x^2 |A0>`.
    pub gamma2_mean: f64,
    /// `max(1 - min fidelity, |<A_up|A_down>|)`.
    pub epsilon: f64,
    pub min_fidelity: f64,
    pub outcome_overlap: f64,
    pub optimizer_status: OptimizerStatus,
    pub restarts_converged: usize,
    pub evaluations: usize,
    #[serde(skip)]
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln epsilon` against `ln gamma2_mean`; a
    /// diagnostic only.
    pub loglog_slope: Option<f64>,
    pub epsilon_note: &'static str,
}

impl SweepTable {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "dim", "gamma2_mean", "epsilon", "optimizer_status"])?;
        for r in &self.rows {
            w.write_record([
                r.j.to_string(),
                r.dim.to_string(),
                r.gamma2_mean.to_string(),
                r.epsilon.to_string(),
                r.optimizer_status.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Eval {
    epsilon: f64,
    min_fidelity: f64,
    overlap: f64,
    gamma2: f64,
}

fn n_params(da: usize) -> usize {
    6 * da - 2
}

fn cis(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, x)
}

/// Layout: bottom phase, top phase, `4 (da - 1)` block angles
/// `(phi, theta, alpha, beta)`, then `2 da` ready-state reals.
fn evaluate(da: usize, p: &[f64]) -> Eval {
    const WORST: Eval = Eval {
        epsilon: 1.0,
        min_fidelity: 0.0,
        overlap: 1.0,
        gamma2: f64::NAN,
    };
    let (phases, rest) = p.split_at(2);
    let (blocks, ready) = rest.split_at(4 * (da - 1));
    let a: Vec<Complex64> = ready
        .chunks(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    let norm2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
    if !(norm2 > 0.0 && norm2.is_finite()) {
        return WORST;
    }
    let s = FRAC_1_SQRT_2;
    // x-basis outputs for input |up>: (s a, s a); for |down>: (s a, -s a)
    let mut up_plus = vec![Complex64::new(0.0, 0.0); da];
    let mut up_minus = up_plus.clone();
    let mut dn_plus = up_plus.clone();
    let mut dn_minus = up_plus.clone();
    let bottom = cis(phases[0]);
    up_minus[0] = bottom * s * a[0];
    dn_minus[0] = -bottom * s * a[0];
    let top = cis(phases[1]);
    up_plus[da - 1] = top * s * a[da - 1];
    dn_plus[da - 1] = top * s * a[da - 1];
    for (i, b) in blocks.chunks(4).enumerate() {
        let (phi, theta, alpha, beta) = (b[0], b[1], b[2], b[3]);
        let (sin, cos) = theta.sin_cos();
        let b00 = cis(phi + alpha) * cos;
        let b01 = cis(phi + beta) * sin;
        let b10 = -cis(phi - beta) * sin;
        let b11 = cis(phi - alpha) * cos;
        let (x, y) = (s * a[i], s * a[i + 1]);
        up_plus[i] = b00 * x + b01 * y;
        up_minus[i + 1] = b10 * x + b11 * y;
        dn_plus[i] = b00 * x - b01 * y;
        dn_minus[i + 1] = b10 * x - b11 * y;
    }
    let (mut f_up, mut f_dn, mut cross) = (0.0, 0.0, Complex64::new(0.0, 0.0));
    for i in 0..da {
        let au = (up_plus[i] + up_minus[i]) * s;
        let ad = (dn_plus[i] - dn_minus[i]) * s;
        f_up += au.norm_sqr();
        f_dn += ad.norm_sqr();
        cross += au.conj() * ad;
    }
    let j = (da - 1) as f64 / 2.0;
    let gamma2 = a
        .iter()
        .enumerate()
        .map(|(i, c)| c.norm_sqr() * (i as f64 - j).powi(2))
        .sum::<f64>()
        / norm2;
    let min_fidelity = f_up.min(f_dn) / norm2;
    if !(min_fidelity > 0.0) {
        return Eval { gamma2, ..WORST };
    }
    let overlap = cross.norm() / (f_up * f_dn).sqrt();
    Eval {
        epsilon: (1.0 - min_fidelity).max(overlap),
        min_fidelity,
        overlap,
        gamma2,
    }
}

/// Maps a solution for apparatus dimension `da` to one for `da + 1` with
/// the same fidelities and overlap: `mu -> mu + 1/2` keeps every
/// conserved-quantity sector intact.
fn embed(da: usize, p: &[f64]) -> Vec<f64> {
    let (phases, rest) = p.split_at(2);
    let (blocks, ready) = rest.split_at(4 * (da - 1));
    let mut out = Vec::with_capacity(n_params(da + 1));
    out.extend([0.0, phases[1]]);
    let half = phases[0] / 2.0;
    out.extend([half, 0.0, -half, 0.0]);
    out.extend_from_slice(blocks);
    out.extend([0.0, 0.0]);
    out.extend_from_slice(ready);
    out
}

fn random_start(da: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n_angles = 2 + 4 * (da - 1);
    let mut p: Vec<f64> = (0..n_angles).map(|_| rng.random::<f64>() * TAU).collect();
    p.extend((0..2 * da).map(|_| rng.sample::<f64, _>(StandardNormal)));
    p
}

fn steps(da: usize) -> Vec<f64> {
    let n_angles = 2 + 4 * (da - 1);
    let mut s = vec![0.3; n_angles];
    s.extend(std::iter::repeat(0.3 / (da as f64).sqrt()).take(2 * da));
    s
}

/// Rescales the ready-state part to unit norm; the objective is invariant.
fn normalize_ready(da: usize, p: &mut [f64]) {
    let ready = &mut p[2 + 4 * (da - 1)..];
    let norm = ready.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        ready.iter_mut().for_each(|x| *x /= norm);
    }
}

struct NmResult {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    converged: bool,
}

/// Adaptive Nelder–Mead (dimension-dependent coefficients).
fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    max_evals: usize,
    ftol: f64,
) -> NmResult {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    let mut evals = n + 1;
    let mut centroid = vec![0.0; n];
    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + t * (ci - wi)).collect()
    };
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order
            .iter()
            .map(|&i| std::mem::take(&mut simplex[i]))
            .collect();
        values = order.iter().map(|&i| values[i]).collect();
        let (best, worst) = (values[0], values[n]);
        if !best.is_finite() {
            return NmResult {
                x: simplex.swap_remove(0),
                f: best,
                evals,
                converged: false,
            };
        }
        if worst - best <= ftol {
            return NmResult {
                x: simplex.swap_remove(0),
                f: best,
                evals,
                converged: true,
            };
        }
        if evals >= max_evals {
            return NmResult {
                x: simplex.swap_remove(0),
                f: best,
                evals,
                converged: false,
            };
        }
        centroid.iter_mut().for_each(|c| *c = 0.0);
        for x in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let xr = point(&centroid, &simplex[n], alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < best {
            let xe = point(&centroid, &simplex[n], alpha * gamma);
            let fe = f(&xe);
            evals += 1;
            (simplex[n], values[n]) = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < values[n - 1] {
            (simplex[n], values[n]) = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = point(&centroid, &simplex[n], alpha * rho);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = point(&centroid, &simplex[n], -rho);
            let fc = f(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < fr.min(worst) {
            (simplex[n], values[n]) = (xc, fc);
            continue;
        }
        for i in 1..=n {
            let x: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, xi)| b + sigma * (xi - b))
                .collect();
            values[i] = f(&x);
            simplex[i] = x;
        }
        evals += n;
    }
}

struct RestartResult {
    x: Vec<f64>,
    f: f64,
    evals: usize,
    status: OptimizerStatus,
}

/// Repeated Nelder–Mead from `x0`, rebuilding the simplex around the best
/// point until a rebuild no longer improves it or the budget runs out.
fn optimize(da: usize, x0: Vec<f64>, max_evals: usize, ftol: f64) -> RestartResult {
    let objective = |p: &[f64]| evaluate(da, p).epsilon;
    let step = steps(da);
    let mut x = x0;
    normalize_ready(da, &mut x);
    let mut fx = objective(&x);
    let mut evals = 1;
    loop {
        let r = nelder_mead(objective, &x, &step, max_evals.saturating_sub(evals), ftol);
        evals += r.evals;
        let improved = r.f < fx - ftol;
        if r.f <= fx {
            (x, fx) = (r.x, r.f);
            normalize_ready(da, &mut x);
        }
        let status = if !fx.is_finite() {
            Some(OptimizerStatus::Failed)
        } else if evals >= max_evals {
            Some(OptimizerStatus::BudgetExhausted)
        } else if r.converged && !improved {
            Some(OptimizerStatus::Converged)
        } else {
            None
        };
        if let Some(status) = status {
            return RestartResult {
                x,
                f: fx,
                evals,
                status,
            };
        }
    }
}

fn check_j(j: f64) -> Result<usize, WayError> {
    let two_j = 2.0 * j;
    if !(two_j >= 0.0 && two_j.fract() == 0.0 && j <= MAX_J) {
        return Err(WayError::BadSpin(j));
    }
    Ok(two_j as usize)
}

/// Minimizes `epsilon` over the conserving family for each `j`, in order.
/// Restart 0 for each `j` starts from the previous row's solution embedded
/// in the larger apparatus, so `epsilon` never increases along an
/// ascending list. The reported value is achieved, not proven minimal.
pub fn nonideality_sweep(j_values: &[f64], options: &SweepOptions) -> Result<SweepTable, WayError> {
    if options.restarts == 0 {
        return Err(WayError::Domain("at least one restart is needed".into()));
    }
    let two_js = j_values
        .iter()
        .map(|&j| check_j(j))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<SweepRow> = Vec::with_capacity(j_values.len());
    let mut previous: Option<(usize, Vec<f64>)> = None;
    for (&j, &two_j) in j_values.iter().zip(&two_js) {
        let da = two_j + 1;
        let budget = options.max_evals.unwrap_or(400 * n_params(da) + 2000);
        let warm = previous.as_ref().and_then(|(prev_da, p)| {
            (*prev_da <= da).then(|| (*prev_da..da).fold(p.clone(), |p, d| embed(d, &p)))
        });
        let results: Vec<RestartResult> = (0..options.restarts)
            .into_par_iter()
            .map(|r| {
                let start = match (&warm, r) {
                    (Some(w), 0) => w.clone(),
                    _ => {
                        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
                        rng.set_stream(((two_j as u64) << 32) | r as u64);
                        random_start(da, &mut rng)
                    }
                };
                optimize(da, start, budget, options.ftol)
            })
            .collect();
        let restarts_converged = results
            .iter()
            .filter(|r| r.status == OptimizerStatus::Converged)
            .count();
        let evaluations = results.iter().map(|r| r.evals).sum();
        let best = results
            .into_iter()
            .min_by(|a, b| a.f.total_cmp(&b.f))
            .expect("restarts > 0");
        let e = evaluate(da, &best.x);
        rows.push(SweepRow {
            j,
            dim: da,
            gamma2_mean: e.gamma2,
            epsilon: e.epsilon,
            min_fidelity: e.min_fidelity,
            outcome_overlap: e.overlap,
            optimizer_status: best.status,
            restarts_converged,
            evaluations,
            params: best.x.clone(),
        });
        previous = Some((da, best.x));
    }
    Ok(SweepTable {
        loglog_slope: loglog_slope(&rows),
        rows,
        epsilon_note: "achieved, not proven minimal",
    })
}

fn loglog_slope(rows: &[SweepRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.gamma2_mean > 0.0 && r.epsilon > 0.0)
        .map(|r| (r.gamma2_mean.ln(), r.epsilon.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// The full model on `S (x) A` (bases `S_z` and `J_z`) for a sweep row's
/// parameters: `M = S_z`, `Gamma_S = S_x`, `Gamma_A = J_x`.
pub fn sweep_model(j: f64, params: &[f64]) -> Result<WAYModel, WayError> {
    let da = check_j(j)? + 1;
    if params.len() != n_params(da) {
        return Err(WayError::DimensionMismatch {
            expected: n_params(da),
            got: params.len(),
        });
    }
    let [sx, _, sz] = spin_operators(0.5)?;
    let [jx, _, _] = spin_operators(j)?;
    let (_, jvec) = jx.eigh();
    let dim = 2 * da;
    let s = FRAC_1_SQRT_2;
    let xvec = [[s, s], [s, -s]];
    // column sigma * da + i is |sigma_x> (x) |mu_i>
    let v = DMatrix::from_fn(dim, dim, |row, col| {
        let (sig, i) = (col / da, col % da);
        xvec[sig][row / da] * jvec[(row % da, i)]
    });
    let mut ub = DMatrix::<Complex64>::zeros(dim, dim);
    ub[(da, da)] = cis(params[0]);
    ub[(da - 1, da - 1)] = cis(params[1]);
    for (i, b) in params[2..2 + 4 * (da - 1)].chunks(4).enumerate() {
        let (phi, theta, alpha, beta) = (b[0], b[1], b[2], b[3]);
        let (sin, cos) = theta.sin_cos();
        let (p, m) = (i, da + i + 1);
        ub[(p, p)] = cis(phi + alpha) * cos;
        ub[(p, m)] = cis(phi + beta) * sin;
        ub[(m, p)] = -cis(phi - beta) * sin;
        ub[(m, m)] = cis(phi - alpha) * cos;
    }
    let u = OperatorMatrix::new(&v * ub * v.adjoint())?;
    let ready = &params[2 + 4 * (da - 1)..];
    let a: Vec<Complex64> = ready
        .chunks(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    let norm = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let ready_state = (0..da)
        .map(|row| (0..da).map(|i| a[i] / norm * jvec[(row, i)]).sum())
        .collect();
    WAYModel::new(sz, sx, jx, u, ready_state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::way::{conservation_residual, outcome_states};

    #[test]
    fn trivial_apparatus_is_maximally_nonideal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let p = random_start(1, &mut rng);
            assert!((evaluate(1, &p).epsilon - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_preserves_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for da in 1..8 {
            let p = random_start(da, &mut rng);
            let (a, b) = (evaluate(da, &p), evaluate(da + 1, &embed(da, &p)));
            assert!((a.epsilon - b.epsilon).abs() < 1e-15);
            assert!((a.min_fidelity - b.min_fidelity).abs() < 1e-15);
        }
    }

    #[test]
    fn fast_objective_matches_full_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for two_j in 1..6 {
            let j = two_j as f64 / 2.0;
            let da = two_j + 1;
            let p = random_start(da, &mut rng);
            let e = evaluate(da, &p);
            let model = sweep_model(j, &p).unwrap();
            assert!(conservation_residual(model.u(), &model.total_gamma()).unwrap() < 1e-12);
            let out = outcome_states(&model).unwrap();
            let fmin = out.iter().map(|o| o.fidelity).fold(1.0, f64::min);
            let ov = out[0].apparatus_state.dotc(&out[1].apparatus_state).norm();
            assert!((fmin - e.min_fidelity).abs() < 1e-12);
            assert!((ov - e.overlap).abs() < 1e-10);
            let jx = spin_operators(j).unwrap()[0].clone();
            let g2 = (&jx * &jx).matrix() * model.ready_state();
            assert!((model.ready_state().dotc(&g2).re - e.gamma2).abs() < 1e-10);
        }
    }

    #[test]
    fn small_sweep_is_positive_and_nonincreasing() {
        let options = SweepOptions {
            restarts: 4,
            ..SweepOptions::default()
        };
        let table = nonideality_sweep(&[0.0, 0.5, 1.0, 1.5], &options).unwrap();
        assert!((table.rows[0].epsilon - 1.0).abs() < 1e-12);
        for w in table.rows.windows(2) {
            assert!(w[1].epsilon <= w[0].epsilon + 1e-9);
        }
        assert!(table.rows.iter().all(|r| r.epsilon > 0.0));
        assert!(table.rows[1].epsilon < 0.5);
    }
}
