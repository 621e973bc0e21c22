use std::f64::consts::FRAC_1_SQRT_2;

use grw_core::marbles::{
    anomaly_threshold_n, count_distribution, max_tau_for_n, prob_all_in, prob_not_all_in,
    reduction_time_stats, simulate_batch, EnsembleSpec, GrwParameters, MarbleAmplitudes,
    MarblesError, MONTE_CARLO_MAX_N,
};
use grw_core::pointer::{
    distinguishability_report, evolve_free, gaussian_pointer, gaussian_tail_weight,
    measure_superposition, tail_decompose, GridSpec, GridWavefunction, MeasurementCoupling,
};
use grw_core::qmath::{Count, LogProb};
use grw_core::way::{
    chain_identity_residual, commutator_obstruction, conservation_residual, controlled_shift_model,
    nonideality_sweep, outcome_states, spin_operators, witness_search, OperatorMatrix,
    OptimizerStatus, SweepOptions, WAYModel,
};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{parse_bool, parse_j_list};
use crate::output::{ext_json, prob_json, Report, Table};
use crate::{CliError, RunConfig};

/// Shortest round-trip form, with an exponent for small and large values.
fn num(x: f64) -> String {
    if x.is_finite() {
        serde_json::Number::from_f64(x).map_or_else(|| x.to_string(), |n| n.to_string())
    } else {
        x.to_string()
    }
}

fn count(cfg: &RunConfig, key: &str) -> Result<Option<Count>, CliError> {
    cfg.get::<Count>(key)
}

/// A whole number that may be written as `1e5`.
fn whole(cfg: &RunConfig, key: &str, default: u64) -> Result<u64, CliError> {
    match count(cfg, key)? {
        None => Ok(default),
        Some(c) => c
            .as_u64()
            .ok_or_else(|| cfg.invalid(key, format!("{c} is too large"))),
    }
}

fn amplitudes(cfg: &RunConfig) -> Result<MarbleAmplitudes, CliError> {
    let which = cfg.exclusive(&["log10_b2", "b2", "a2"])?;
    let wrap = |key: &str, r: Result<MarbleAmplitudes, MarblesError>| {
        r.map_err(|e| cfg.invalid(key, e.to_string()))
    };
    match which {
        None => Ok(MarbleAmplitudes::default()),
        Some("log10_b2") => {
            let l: f64 = cfg.get("log10_b2")?.unwrap_or_default();
            wrap("log10_b2", MarbleAmplitudes::from_log10_b2(l))
        }
        Some("b2") => {
            let b: f64 = cfg.get("b2")?.unwrap_or_default();
            wrap("b2", MarbleAmplitudes::from_real_b2(b))
        }
        Some(_) => {
            let a: f64 = cfg.get("a2")?.unwrap_or_default();
            wrap("a2", MarbleAmplitudes::from_real_a2(a))
        }
    }
}

fn ensemble(cfg: &RunConfig) -> Result<EnsembleSpec, CliError> {
    let n = count(cfg, "n")?.ok_or_else(|| cfg.invalid("n", "required"))?;
    let amps = amplitudes(cfg)?;
    let grw = match cfg.get::<f64>("rate")? {
        Some(rate) => {
            if let Some(k) = cfg.exclusive(&["lambda", "nucleons"])? {
                return Err(cfg.invalid(k, "conflicts with `rate`"));
            }
            GrwParameters::with_marble_rate(rate).map_err(|e| cfg.invalid("rate", e.to_string()))?
        }
        None => {
            let d = GrwParameters::default();
            GrwParameters::new(
                cfg.get_or("lambda", d.lambda_per_nucleon)?,
                cfg.get_or("nucleons", d.nucleons_per_marble)?,
                d.localization_width,
            )?
        }
    };
    Ok(EnsembleSpec::new(n, amps, grw)?)
}

/// A size-cap refusal becomes an `incomplete` entry; other errors stop
/// the run.
fn skippable<T>(
    r: Result<T, MarblesError>,
    what: &str,
    incomplete: &mut Vec<String>,
) -> Result<Option<T>, CliError> {
    match r {
        Ok(x) => Ok(Some(x)),
        Err(e @ (MarblesError::MonteCarloCap { .. } | MarblesError::MemoryGuard { .. })) => {
            incomplete.push(format!("{what}: {e}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Collapse probabilities for `n` marbles, the largest consistent `tau`,
/// and the anomaly threshold for a given `tau`.
pub fn run_anomaly(cfg: &RunConfig) -> Result<Report, CliError> {
    let spec = ensemble(cfg)?;
    let b2 = spec.amplitudes.b2();
    let tau = match cfg.exclusive(&["tau", "log10_tau"])? {
        None => None,
        Some("tau") => Some(LogProb::from_real(cfg.get("tau")?.unwrap_or_default())),
        Some(_) => Some(LogProb::from_log10(
            cfg.get("log10_tau")?.unwrap_or_default(),
        )),
    }
    .transpose()
    .map_err(|e| cfg.invalid("tau", e.to_string()))?;

    let max_tau = max_tau_for_n(spec.n.get(), b2)?;
    let mut max_tau_json = prob_json(max_tau);
    if let (Some(t), Some(b)) = (max_tau.log10(), b2.log10()) {
        max_tau_json["log10_over_b2"] = json!(t - b);
    }
    let mut results = json!({
        "n": spec.n,
        "a2": prob_json(spec.amplitudes.a2()),
        "b2": prob_json(b2),
        "prob_all_in": prob_json(prob_all_in(&spec)?),
        "prob_not_all_in": prob_json(prob_not_all_in(&spec)?),
        "max_tau_for_n": max_tau_json,
    });
    if let Some(tau) = tau {
        results["tau"] = prob_json(tau);
        results["anomaly_threshold_n"] = if b2.is_zero() {
            json!({ "undefined": "b2 = 0: no ensemble ever has a marble outside" })
        } else {
            ext_json(anomaly_threshold_n(tau, b2)?)
        };
    }
    Ok(Report {
        results,
        table: None,
        incomplete: Vec::new(),
    })
}

/// Monte Carlo of the hit process, reduction-time statistics and, on
/// request, the exact distribution of the in-box count.
pub fn run_collapse(cfg: &RunConfig) -> Result<Report, CliError> {
    let spec = ensemble(cfg)?;
    let t_max: f64 = cfg.get_or("t_max", 1.0)?;
    let small = spec.n.as_u64().filter(|&n| n <= MONTE_CARLO_MAX_N);
    let trajectories = whole(cfg, "trajectories", if small.is_some() { 1000 } else { 0 })?;
    let rate = spec.grw.marble_rate();
    let mut results = json!({
        "n": spec.n,
        "a2": prob_json(spec.amplitudes.a2()),
        "b2": prob_json(spec.amplitudes.b2()),
        "marble_rate": rate,
        "mean_first_hit_time": 1.0 / rate,
        "t_max": t_max,
        "prob_all_in": prob_json(prob_all_in(&spec)?),
        "prob_not_all_in": prob_json(prob_not_all_in(&spec)?),
    });
    let mut table = None;
    let mut incomplete = Vec::new();

    let batch = if trajectories > 0 {
        skippable(
            simulate_batch(&spec, cfg.seed, t_max, trajectories),
            "trajectories",
            &mut incomplete,
        )?
    } else {
        None
    };
    if let Some(rows) = batch {
        let n = spec.n.as_u64().unwrap_or(0);
        let count = rows.len() as f64;
        let times: Vec<f64> = rows.iter().map(|r| r.total_reduction_time).collect();
        let mean = times.iter().sum::<f64>() / count;
        let var = if rows.len() > 1 {
            times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (count - 1.0)
        } else {
            0.0
        };
        let mut summary = json!({
            "count": trajectories,
            "mean_total_reduction_time": mean,
            "std_error": (var / count).sqrt(),
            "mean_final_k_in": rows.iter().map(|r| r.final_k_in as f64).sum::<f64>() / count,
            "trajectories_with_unresolved": rows.iter().filter(|r| r.unresolved_count > 0).count(),
            "unresolved_marbles": rows.iter().map(|r| r.unresolved_count).sum::<u64>(),
            "first": {
                "total_reduction_time": rows[0].total_reduction_time,
                "final_k_in": rows[0].final_k_in,
                "unresolved_count": rows[0].unresolved_count,
            },
        });
        // the exact law applies only when every marble resolved
        let resolved = rows.iter().all(|r| r.unresolved_count == 0);
        if n <= 10_000 && resolved {
            let mut hist = vec![0u64; n as usize + 1];
            for r in &rows {
                hist[r.final_k_in as usize] += 1;
            }
            let exact = count_distribution(&spec)?;
            let tv = 0.5
                * hist
                    .iter()
                    .zip(&exact)
                    .map(|(&h, p)| (h as f64 / count - p.to_real()).abs())
                    .sum::<f64>();
            summary["k_in_histogram"] = json!(hist);
            summary["k_in_total_variation"] = json!(tv);
        }
        results["trajectories"] = summary;
        let mut t = Table::new(&[
            "seed_index",
            "total_reduction_time",
            "final_k_in",
            "unresolved_count",
        ]);
        for r in &rows {
            t.push(vec![
                r.seed_index.to_string(),
                num(r.total_reduction_time),
                r.final_k_in.to_string(),
                r.unresolved_count.to_string(),
            ]);
        }
        table = Some(t);
    }

    if let Some(samples) = count(cfg, "stats_samples")? {
        let samples = samples
            .as_u64()
            .ok_or_else(|| cfg.invalid("stats_samples", "too large"))?;
        let stats = skippable(
            reduction_time_stats(&spec, samples, cfg.seed),
            "stats_samples",
            &mut incomplete,
        )?;
        if let Some(s) = stats {
            let mut stats = json!({
                "samples": s.samples,
                "mean": s.mean,
                "std_error": s.std_error,
                "q50": s.q50,
                "q99": s.q99,
            });
            if let Some(n) = small {
                // E[max of n Exp(rate)] = H_n / rate
                let harmonic: f64 = (1..=n).rev().map(|k| 1.0 / k as f64).sum();
                let oracle = harmonic / rate;
                stats["harmonic_mean"] = json!(oracle);
                stats["deviation_in_std_errors"] = json!((s.mean - oracle).abs() / s.std_error);
            }
            results["reduction_time"] = stats;
        }
    }

    if let Some(p) = cfg.raw("distribution") {
        if parse_bool(&p.value).map_err(|m| cfg.invalid("distribution", m))? {
            let d = skippable(count_distribution(&spec), "distribution", &mut incomplete)?;
            if let Some(d) = d {
                results["distribution_log10"] =
                    json!(d.iter().map(|p| p.log10()).collect::<Vec<_>>());
            }
        }
    }

    Ok(Report {
        results,
        table,
        incomplete,
    })
}

fn moments(psi: &GridWavefunction) -> Value {
    json!({
        "norm": psi.norm_squared(),
        "mean_position": psi.mean_position(),
        "variance": psi.position_variance(),
        "edge_ratio": psi.edge_ratio(),
    })
}

fn tail_json(psi: &GridWavefunction, d: f64) -> Result<Value, CliError> {
    let t = tail_decompose(psi, d)?;
    Ok(json!({
        "n_in": prob_json(t.n_in),
        "n_out": prob_json(t.n_out),
        "out_state_present": t.out_state.is_some(),
    }))
}

/// A Gaussian pointer coupled to an equal superposition of two
/// eigenvalues, with optional free spreading and tail split about `x = 0`.
pub fn run_pointer(cfg: &RunConfig) -> Result<Report, CliError> {
    let delta: f64 = cfg.get_or("delta", 1.0)?;
    let center: f64 = cfg.get_or("center", 0.0)?;
    let half_width: f64 = cfg.get_or("half_width", 64.0)?;
    let points = whole(cfg, "points", 4096)?;
    let mass: f64 = cfg.get_or("mass", 1.0)?;
    let hbar: f64 = cfg.get_or("hbar", 1.0)?;
    let coupling = MeasurementCoupling::new(
        cfg.get_or("gamma", 1.0)?,
        cfg.get_or("omega1", 0.0)?,
        cfg.get_or("omega2", 1.0)?,
        cfg.get_or("duration", 1.0)?,
    )?;
    let grid = GridSpec::cell_centered(half_width, points as usize)?;
    let psi = gaussian_pointer(delta, center, &grid, mass, hbar)?;
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let state = measure_superposition(&psi, &coupling, h, h)?;

    let mut branches = Vec::new();
    for b in &state.branches {
        let shift = coupling.shift(b.omega);
        let analytic = gaussian_pointer(delta, center + shift, &grid, mass, hbar)
            .ok()
            .map(|g| b.pointer.l2_distance(&g))
            .transpose()?;
        let mut m = moments(&b.pointer);
        m["omega"] = json!(b.omega);
        m["shift"] = json!(shift);
        m["l2_vs_initial"] = json!(b.pointer.l2_distance(&psi)?);
        m["l2_vs_shifted_gaussian"] = json!(analytic);
        branches.push(m);
    }
    let o = state.pointer_overlap(0, 1)?;
    let mut results = json!({
        "grid": { "x_min": grid.x_min, "x_max": grid.x_max(), "dx": grid.dx, "points": points },
        "coupling": coupling,
        "initial": moments(&psi),
        "branches": branches,
        "pointer_overlap": { "re": o.re, "im": o.im, "abs": o.norm() },
        "coherence_abs": state.coherence(0, 1)?.norm(),
        "distinguishability": distinguishability_report(&coupling, delta)?,
    });

    let mut table = Table::new(&["x", "density_initial", "density_branch0", "density_branch1"]);
    let free = match cfg.get::<f64>("t_free")? {
        Some(t) => {
            let out = evolve_free(&psi, t)?;
            let spread = hbar * t / (2.0 * mass * delta * delta);
            let want = delta * delta * (1.0 + spread * spread);
            let mut m = moments(&out);
            m["t"] = json!(t);
            m["analytic_variance"] = json!(want);
            m["variance_relative_error"] = json!((out.position_variance() - want).abs() / want);
            results["free"] = m;
            table.header.push("density_free".into());
            Some(out)
        }
        None => None,
    };

    if let Some(d) = cfg.get::<f64>("d_tail")? {
        let mut tail = tail_json(&psi, d)?;
        let analytic = gaussian_tail_weight(delta, d)?;
        tail["d"] = json!(d);
        tail["analytic_n_out"] = prob_json(analytic);
        let got = tail_decompose(&psi, d)?.n_out;
        if let (Some(g), Some(a)) = (got.log10(), analytic.log10()) {
            tail["log10_n_out_error"] = json!(g - a);
        }
        if let Some(f) = &free {
            tail["after_free"] = tail_json(f, d)?;
        }
        results["tail"] = tail;
    }

    let densities: Vec<Vec<f64>> = [Some(&psi), Some(&state.branches[0].pointer)]
        .into_iter()
        .chain([Some(&state.branches[1].pointer), free.as_ref()])
        .flatten()
        .map(|w| w.density().collect())
        .collect();
    for (i, x) in grid.points().enumerate() {
        let mut row = vec![num(x)];
        row.extend(densities.iter().map(|d| num(d[i])));
        table.push(row);
    }

    Ok(Report {
        results,
        table: Some(table),
        incomplete: Vec::new(),
    })
}

fn chain_all_pairs(model: &WAYModel) -> Result<Value, CliError> {
    let n = model.dim_s();
    let mut worst: Option<f64> = None;
    let mut unmet = 0usize;
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let r = chain_identity_residual(model, a, b)?;
            match r.residual() {
                Some(x) => worst = Some(worst.map_or(x, |w| w.max(x))),
                None => unmet += 1,
            }
            if n <= 4 {
                let mut v = serde_json::to_value(&r)?;
                v["m"] = json!(a);
                v["m_prime"] = json!(b);
                pairs.push(v);
            }
        }
    }
    let mut out = json!({
        "max_residual": worst,
        "pairs_with_unmet_preconditions": unmet,
    });
    if !pairs.is_empty() {
        out["pairs"] = json!(pairs);
    }
    Ok(out)
}

fn model_json(model: &WAYModel) -> Result<Value, CliError> {
    let fidelities: Value = match outcome_states(model) {
        Ok(o) => json!(o.iter().map(|x| x.fidelity).collect::<Vec<_>>()),
        Err(e) => json!({ "error": e.to_string() }),
    };
    Ok(json!({
        "dim_s": model.dim_s(),
        "dim_a": model.dim_a(),
        "conservation_residual": conservation_residual(model.u(), &model.total_gamma())?,
        "commutator_obstruction": commutator_obstruction(model.m(), model.gamma_s())?,
        "outcome_fidelities": fidelities,
        "chain": chain_all_pairs(model)?,
    }))
}

/// Fixed checks of the conservation-law obstruction, an optional
/// user-supplied model, a randomized witness search and the nonideality
/// sweep over apparatus size.
pub fn run_way(cfg: &RunConfig) -> Result<Report, CliError> {
    let [sx, _, sz] = spin_operators(0.5)?;
    let pauli_x = OperatorMatrix::new(sx.matrix() * Complex64::new(2.0, 0.0))?;
    let [jx, ..] = spin_operators(1.0)?;
    let ket = |n: usize, k: usize| {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        v[k] = Complex64::new(1.0, 0.0);
        v
    };
    let zero_gamma = WAYModel::new(
        sz.clone(),
        OperatorMatrix::zeros(2),
        OperatorMatrix::zeros(3),
        OperatorMatrix::identity(2).kron(&jx.exp_i(0.8)?),
        ket(3, 1),
    )?;
    let shift_dim = whole(cfg, "shift_dim", 8)? as usize;
    let mut results = json!({
        "obstruction": {
            "s_z_vs_s_x": commutator_obstruction(&sz, &sx)?,
            "s_z_vs_pauli_x": commutator_obstruction(&sz, &pauli_x)?,
        },
        "zero_gamma_model": model_json(&zero_gamma)?,
        "controlled_shift_model": model_json(&controlled_shift_model(shift_dim)?)?,
    });
    let mut incomplete = Vec::new();

    if let Some(p) = cfg.raw("model") {
        let text = std::fs::read_to_string(&p.value)
            .map_err(|e| cfg.invalid("model", format!("{}: {e}", p.value)))?;
        let model: WAYModel = serde_json::from_str(&text)
            .map_err(|e| cfg.invalid("model", format!("{}: {e}", p.value)))?;
        let m = model_json(&model)?;
        let unmet = m["chain"]["pairs_with_unmet_preconditions"]
            .as_u64()
            .unwrap_or(0);
        if unmet > 0 {
            incomplete.push(format!(
                "model: chain identity not evaluated for {unmet} eigenvalue pairs (coupling not ideal and conserving)"
            ));
        }
        results["model"] = m;
    }

    let models = whole(cfg, "search_models", 1000)? as usize;
    if models > 0 {
        let max_dim = whole(cfg, "search_max_dim", 64)? as usize;
        results["search"] = serde_json::to_value(witness_search(models, cfg.seed, max_dim)?)?;
    }

    let j_text = cfg.raw("sweep_j").map_or("0.5..2", |p| p.value.as_str());
    if j_text != "none" {
        let js = parse_j_list(j_text).map_err(|m| cfg.invalid("sweep_j", m))?;
        let options = SweepOptions {
            restarts: whole(cfg, "restarts", 20)? as usize,
            max_evals: count(cfg, "max_evals")?
                .map(|c| {
                    c.as_u64()
                        .map(|x| x as usize)
                        .ok_or_else(|| cfg.invalid("max_evals", "too large"))
                })
                .transpose()?,
            seed: cfg.seed,
            ..SweepOptions::default()
        };
        let sweep = nonideality_sweep(&js, &options)?;
        let mut t = Table::new(&["j", "dim", "gamma2_mean", "epsilon", "optimizer_status"]);
        for r in &sweep.rows {
            if r.optimizer_status == OptimizerStatus::Failed {
                incomplete.push(format!("sweep j = {}: optimizer failed", r.j));
            }
            t.push(vec![
                num(r.j),
                r.dim.to_string(),
                num(r.gamma2_mean),
                num(r.epsilon),
                r.optimizer_status.as_str().to_string(),
            ]);
        }
        let eps: Vec<f64> = sweep.rows.iter().map(|r| r.epsilon).collect();
        let mut s = serde_json::to_value(&sweep)?;
        s["all_positive"] = json!(eps.iter().all(|&e| e > 0.0));
        s["nonincreasing"] = json!(eps.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        results["sweep"] = s;
        return Ok(Report {
            results,
            table: Some(t),
            incomplete,
        });
    }
    Ok(Report {
        results,
        table: None,
        incomplete,
    })
}
