//! A von Neumann pointer on a uniform 1-D grid.
//!
//! The pointer's centre-of-mass wavefunction starts as a Gaussian of width
//! `delta`. Coupling to a micro-observable with eigenvalue `omega` through
//! `H = -gamma Omega P` translates it rigidly by `gamma omega T`; free
//! evolution spreads it. [`tail_decompose`] splits a state into the parts
//! inside and outside an interval `(-D, D)`, and the outside weight is
//! carried as a [`LogProb`](crate::qmath::LogProb) so it never rounds to
//! zero.
//!
//! Units are explicit: every wavefunction carries its own `mass` and `hbar`.

mod evolve;
mod tails;

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub use evolve::{
    evolve_free, evolve_measurement, measure_superposition, Branch, EntangledState,
    MeasurementCoupling,
};
pub use tails::{
    distinguishability_report, gaussian_tail_weight, tail_decompose, DistinguishabilityReport,
    TailDecomposition, TailReport, DEGENERATE_WEIGHT,
};

/// Edge density allowed relative to the peak density.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;
/// Allowed deviation of `sum |psi|^2 dx` from 1.
pub const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointerError {
    #[error("grid [{x_min}, {x_max}] does not span centre +- 12 delta = [{need_min}, {need_max}]")]
    GridTooSmall {
        x_min: f64,
        x_max: f64,
        need_min: f64,
        need_max: f64,
    },
    #[error("grid spacing {dx} is coarser than delta / 4 = {limit}")]
    Resolution { dx: f64, limit: f64 },
    #[error("edge density is {ratio:.3e} of the peak (limit 1e-12); {hint}")]
    BoundaryViolation { ratio: f64, hint: String },
    #[error("shift of {shift} moves the support [{lo}, {hi}] past the grid edge")]
    SupportEscape { shift: f64, lo: f64, hi: f64 },
    #[error("wavefunctions live on different grids")]
    GridMismatch,
    #[error("{0}")]
    Domain(String),
}

/// Cell centres `x_min + i dx`, `i = 0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub dx: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, dx: f64, n: usize) -> Result<GridSpec, PointerError> {
        if !(x_min.is_finite() && dx.is_finite() && dx > 0.0) || n < 2 {
            return Err(PointerError::Domain(format!(
                "bad grid: x_min = {x_min}, dx = {dx}, n = {n}"
            )));
        }
        Ok(GridSpec { x_min, dx, n })
    }

    /// `n` cells tiling `[-half_width, half_width]`, sampled at the cell
    /// centres. Cell edges fall on multiples of `dx`, so an interval
    /// `(-D, D)` with `D` a multiple of `dx` contains whole cells only.
    pub fn cell_centered(half_width: f64, n: usize) -> Result<GridSpec, PointerError> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(PointerError::Domain(format!("bad half width {half_width}")));
        }
        let dx = 2.0 * half_width / n as f64;
        GridSpec::new(-half_width + 0.5 * dx, dx, n)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.x(i))
    }

    /// Wavenumber of FFT bin `j`; the Nyquist bin gets `-pi / dx`.
    fn wavenumber(&self, j: usize) -> f64 {
        let n = self.n as isize;
        let j = j as isize;
        let signed = if j < (n + 1) / 2 { j } else { j - n };
        2.0 * std::f64::consts::PI * signed as f64 / (n as f64 * self.dx)
    }
}

/// Complex amplitudes on a grid, normalized so that `sum |psi|^2 dx = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWavefunction {
    grid: GridSpec,
    amplitudes: Vec<Complex64>,
    mass: f64,
    hbar: f64,
}

impl GridWavefunction {
    /// Normalizes `amplitudes` and checks the boundary invariant.
    pub fn new(
        grid: GridSpec,
        amplitudes: Vec<Complex64>,
        mass: f64,
        hbar: f64,
    ) -> Result<GridWavefunction, PointerError> {
        let mut psi = GridWavefunction::unchecked(grid, amplitudes, mass, hbar)?;
        let norm = psi.norm_squared();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(PointerError::Domain("wavefunction has zero norm".into()));
        }
        let scale = norm.sqrt().recip();
        psi.amplitudes.iter_mut().for_each(|a| *a *= scale);
        psi.check_boundary("enlarge the grid")?;
        Ok(psi)
    }

    /// No normalization or boundary check.
    pub(crate) fn unchecked(
        grid: GridSpec,
        amplitudes: Vec<Complex64>,
        mass: f64,
        hbar: f64,
    ) -> Result<GridWavefunction, PointerError> {
        if amplitudes.len() != grid.n {
            return Err(PointerError::Domain(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.n
            )));
        }
        for (name, v) in [("mass", mass), ("hbar", hbar)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PointerError::Domain(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(GridWavefunction {
            grid,
            amplitudes,
            mass,
            hbar,
        })
    }

    pub(crate) fn with_amplitudes(&self, amplitudes: Vec<Complex64>) -> GridWavefunction {
        GridWavefunction {
            amplitudes,
            ..*self
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn density(&self) -> impl Iterator<Item = f64> + '_ {
        self.amplitudes.iter().map(|a| a.norm_sqr())
    }

    /// `sum |psi|^2 dx`.
    pub fn norm_squared(&self) -> f64 {
        self.density().sum::<f64>() * self.grid.dx
    }

    pub fn mean_position(&self) -> f64 {
        self.grid
            .points()
            .zip(self.density())
            .map(|(x, d)| x * d)
            .sum::<f64>()
            * self.grid.dx
            / self.norm_squared()
    }

    pub fn position_variance(&self) -> f64 {
        let mean = self.mean_position();
        self.grid
            .points()
            .zip(self.density())
            .map(|(x, d)| (x - mean).powi(2) * d)
            .sum::<f64>()
            * self.grid.dx
            / self.norm_squared()
    }

    /// Edge density divided by peak density.
    pub fn edge_ratio(&self) -> f64 {
        let peak = self.density().fold(0.0, f64::max);
        let edge = self.amplitudes[0]
            .norm_sqr()
            .max(self.amplitudes[self.grid.n - 1].norm_sqr());
        if peak == 0.0 {
            0.0
        } else {
            edge / peak
        }
    }

    pub(crate) fn check_boundary(&self, hint: &str) -> Result<(), PointerError> {
        let ratio = self.edge_ratio();
        if ratio < BOUNDARY_TOLERANCE {
            Ok(())
        } else {
            Err(PointerError::BoundaryViolation {
                ratio,
                hint: hint.to_string(),
            })
        }
    }

    /// `sqrt(sum |a - b|^2 dx)`.
    pub fn l2_distance(&self, other: &GridWavefunction) -> Result<f64, PointerError> {
        self.same_grid(other)?;
        let s: f64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.dx).sqrt())
    }

    fn same_grid(&self, other: &GridWavefunction) -> Result<(), PointerError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(PointerError::GridMismatch)
        }
    }

    /// CSV with columns `x,re,im,density`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        #[derive(Serialize)]
        struct Row {
            x: f64,
            re: f64,
            im: f64,
            density: f64,
        }
        let mut w = csv::Writer::from_writer(out);
        for (x, a) in self.grid.points().zip(&self.amplitudes) {
            w.serialize(Row {
                x,
                re: a.re,
                im: a.im,
                density: a.norm_sqr(),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `<psi1|psi2> = sum conj(psi1) psi2 dx`.
pub fn overlap(
    psi1: &GridWavefunction,
    psi2: &GridWavefunction,
) -> Result<Complex64, PointerError> {
    psi1.same_grid(psi2)?;
    let s: Complex64 = psi1
        .amplitudes
        .iter()
        .zip(&psi2.amplitudes)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(s * psi1.grid.dx)
}

/// `(delta sqrt(2 pi))^(-1/2) exp(-(x - center)^2 / (4 delta^2))`, sampled
/// and renormalized on the grid.
pub fn gaussian_pointer(
    delta: f64,
    center: f64,
    grid: &GridSpec,
    mass: f64,
    hbar: f64,
) -> Result<GridWavefunction, PointerError> {
    if !(delta.is_finite() && delta > 0.0 && center.is_finite()) {
        return Err(PointerError::Domain(format!(
            "need delta > 0 and a finite centre, got delta = {delta}, centre = {center}"
        )));
    }
    let (need_min, need_max) = (center - 12.0 * delta, center + 12.0 * delta);
    if grid.x_min > need_min || grid.x_max() < need_max {
        return Err(PointerError::GridTooSmall {
            x_min: grid.x_min,
            x_max: grid.x_max(),
            need_min,
            need_max,
        });
    }
    if grid.dx > delta / 4.0 {
        return Err(PointerError::Resolution {
            dx: grid.dx,
            limit: delta / 4.0,
        });
    }
    let scale = (delta * (2.0 * std::f64::consts::PI).sqrt()).sqrt().recip();
    let amplitudes = grid
        .points()
        .map(|x| {
            let z = (x - center) / delta;
            Complex64::new(scale * (-0.25 * z * z).exp(), 0.0)
        })
        .collect();
    GridWavefunction::new(*grid, amplitudes, mass, hbar)
}
