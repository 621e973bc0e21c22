use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use serde::Serialize;

use super::{GridWavefunction, MeasurementCoupling, PointerError};
use crate::qmath::{log10_erfc, LogProb, LOG10_E};

/// Pieces lighter than this are returned as absent; their weight is still
/// reported.
pub const DEGENERATE_WEIGHT: f64 = 1e-300;

/// `psi = sqrt(N_in) |in> + sqrt(N_out) |out>` for the interval `(-D, D)`.
///
/// Both pieces keep the pointwise phase of `psi`. A piece whose weight is
/// below [`DEGENERATE_WEIGHT`] is `None`. Pieces are exempt from the
/// boundary check: the outer piece lives at the edges by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TailDecomposition {
    pub d: f64,
    pub n_in: LogProb,
    pub n_out: LogProb,
    pub in_state: Option<GridWavefunction>,
    pub out_state: Option<GridWavefunction>,
}

/// The weights of a [`TailDecomposition`], for JSON output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailReport {
    pub d: f64,
    pub n_in: LogProb,
    pub n_out: LogProb,
    pub n_out_magnitude: String,
}

impl TailDecomposition {
    /// `sqrt(N_in) in + sqrt(N_out) out`, with an absent piece taken as zero.
    pub fn reconstruct(&self) -> GridWavefunction {
        let base = self
            .in_state
            .as_ref()
            .or(self.out_state.as_ref())
            .expect("at least one piece carries weight >= 1/2");
        let mut out = vec![Complex64::new(0.0, 0.0); base.grid.n];
        for (piece, w) in [(&self.in_state, self.n_in), (&self.out_state, self.n_out)] {
            if let Some(p) = piece {
                let s = w.to_real().sqrt();
                for (o, a) in out.iter_mut().zip(&p.amplitudes) {
                    *o += a * s;
                }
            }
        }
        base.with_amplitudes(out)
    }

    pub fn report(&self) -> TailReport {
        TailReport {
            d: self.d,
            n_in: self.n_in,
            n_out: self.n_out,
            n_out_magnitude: self.n_out.order_of_magnitude(),
        }
    }
}

/// `ln sum exp(x)`; `None` when empty.
fn log_sum_exp(values: &[f64]) -> Option<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    Some(max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Splits `psi` by the indicator of `(-D, D)`. Weights are summed in log
/// space cell by cell, so an outer weight far below the `f64` range is
/// still reported.
pub fn tail_decompose(psi: &GridWavefunction, d: f64) -> Result<TailDecomposition, PointerError> {
    let grid = psi.grid;
    let reach = grid.x_min.abs().max(grid.x_max().abs());
    if !(d.is_finite() && d > 0.0 && d <= reach) {
        return Err(PointerError::Domain(format!(
            "D must lie in (0, {reach}], got {d}"
        )));
    }
    let inside: Vec<bool> = grid.points().map(|x| x.abs() < d).collect();
    let (mut ln_in, mut ln_out) = (Vec::new(), Vec::new());
    for (a, &is_in) in psi.amplitudes.iter().zip(&inside) {
        let r = a.norm();
        if r > 0.0 {
            let l = 2.0 * r.ln();
            if is_in {
                ln_in.push(l);
            } else {
                ln_out.push(l);
            }
        }
    }
    let ln_in = log_sum_exp(&ln_in);
    let ln_out = log_sum_exp(&ln_out);
    let total = match (ln_in, ln_out) {
        (Some(a), Some(b)) => log_sum_exp(&[a, b]).unwrap(),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Err(PointerError::Domain("wavefunction is zero".into())),
    };
    let weight = |l: Option<f64>| -> Result<LogProb, PointerError> {
        match l {
            None => Ok(LogProb::ZERO),
            Some(l) => LogProb::from_ln((l - total).min(0.0))
                .map_err(|e| PointerError::Domain(e.to_string())),
        }
    };
    let n_in = weight(ln_in)?;
    let n_out = weight(ln_out)?;
    let piece = |keep: bool, w: LogProb| -> Option<GridWavefunction> {
        let lin = w.to_real();
        if lin < DEGENERATE_WEIGHT {
            return None;
        }
        let sum: f64 = psi
            .amplitudes
            .iter()
            .zip(&inside)
            .filter(|(_, &i)| i == keep)
            .map(|(a, _)| a.norm_sqr())
            .sum::<f64>()
            * grid.dx;
        let scale = sum.sqrt().recip();
        let amps = psi
            .amplitudes
            .iter()
            .zip(&inside)
            .map(|(a, &i)| {
                if i == keep {
                    a * scale
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        Some(psi.with_amplitudes(amps))
    };
    Ok(TailDecomposition {
        d,
        in_state: piece(true, n_in),
        out_state: piece(false, n_out),
        n_in,
        n_out,
    })
}

/// `P(|X - center| >= D)` for the Gaussian pointer of width `delta`,
/// `erfc(D / (sqrt(2) delta))`. Never exact zero for finite `D`.
pub fn gaussian_tail_weight(delta: f64, d: f64) -> Result<LogProb, PointerError> {
    if !(delta > 0.0 && d >= 0.0 && d.is_finite()) {
        return Err(PointerError::Domain(format!(
            "need delta > 0 and finite D >= 0, got {delta}, {d}"
        )));
    }
    LogProb::from_log10(log10_erfc(d / (SQRT_2 * delta)))
        .map_err(|e| PointerError::Domain(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistinguishabilityReport {
    /// `gamma (omega2 - omega1) T`.
    pub shift: f64,
    /// `shift / delta`.
    pub ratio: f64,
    /// `log10 exp(-shift^2 / (8 delta^2))`.
    pub overlap_log10: f64,
    /// The same overlap in linear form; underflows to 0 past `ratio ~ 75`.
    pub overlap: f64,
}

/// Separation of the two outcome pointers and the overlap of the
/// corresponding Gaussians.
pub fn distinguishability_report(
    coupling: &MeasurementCoupling,
    delta: f64,
) -> Result<DistinguishabilityReport, PointerError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(PointerError::Domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let shift = coupling.separation();
    let ratio = shift / delta;
    let ln_overlap = -ratio * ratio / 8.0;
    Ok(DistinguishabilityReport {
        shift,
        ratio,
        overlap_log10: ln_overlap * LOG10_E,
        overlap: ln_overlap.exp(),
    })
}
