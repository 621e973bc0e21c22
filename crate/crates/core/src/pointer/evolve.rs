use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use super::{overlap, GridWavefunction, PointerError, BOUNDARY_TOLERANCE};

/// `H = -gamma Omega P` switched on for a time `duration`; `omega1` and
/// `omega2` are the two eigenvalues of `Omega` being discriminated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasurementCoupling {
    pub gamma: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub duration: f64,
}

impl MeasurementCoupling {
    pub fn new(gamma: f64, omega1: f64, omega2: f64, duration: f64) -> Result<Self, PointerError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(PointerError::Domain(format!(
                "T must be positive, got {duration}"
            )));
        }
        if !(gamma.is_finite() && omega1.is_finite() && omega2.is_finite()) {
            return Err(PointerError::Domain(
                "gamma and omegas must be finite".into(),
            ));
        }
        Ok(MeasurementCoupling {
            gamma,
            omega1,
            omega2,
            duration,
        })
    }

    /// Pointer displacement `gamma omega T` for eigenvalue `omega`.
    pub fn shift(&self, omega: f64) -> f64 {
        self.gamma * omega * self.duration
    }

    /// `gamma (omega2 - omega1) T`.
    pub fn separation(&self) -> f64 {
        self.shift(self.omega2) - self.shift(self.omega1)
    }
}

/// Applies `multiplier(k)` to the spectrum. `nyquist` is used instead at
/// the Nyquist bin of even grids.
fn spectral(
    psi: &GridWavefunction,
    multiplier: impl Fn(f64) -> Complex64,
    nyquist: impl Fn(f64) -> Complex64,
) -> Vec<Complex64> {
    let n = psi.grid.n;
    let mut planner = FftPlanner::new();
    let mut buf = psi.amplitudes.clone();
    planner.plan_fft_forward(n).process(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        let k = psi.grid.wavenumber(j);
        *c *= if n % 2 == 0 && j == n / 2 {
            nyquist(k)
        } else {
            multiplier(k)
        };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// `psi(x - shift)`. Whole cells are moved by an exact index roll; the
/// remaining fraction of a cell by the phase `exp(-i k s)`.
fn translate(psi: &GridWavefunction, shift: f64) -> Result<GridWavefunction, PointerError> {
    if shift == 0.0 {
        return Ok(psi.clone());
    }
    let grid = psi.grid;
    let cells = shift / grid.dx;
    let density: Vec<f64> = psi.density().collect();
    let floor = BOUNDARY_TOLERANCE * density.iter().copied().fold(0.0, f64::max);
    let lo = density.iter().position(|&d| d >= floor).unwrap_or(0);
    let hi = density
        .iter()
        .rposition(|&d| d >= floor)
        .unwrap_or(grid.n - 1);
    if !(lo as f64 + cells >= 1.0 && hi as f64 + cells <= (grid.n - 2) as f64) {
        return Err(PointerError::SupportEscape {
            shift,
            lo: grid.x(lo),
            hi: grid.x(hi),
        });
    }
    let whole = cells.round();
    let frac = cells - whole;
    let mut rolled = psi.amplitudes.clone();
    let m = whole.abs() as usize;
    if whole > 0.0 {
        rolled.rotate_right(m);
    } else {
        rolled.rotate_left(m);
    }
    let mut out = psi.with_amplitudes(rolled);
    if frac != 0.0 {
        let s = frac * grid.dx;
        out.amplitudes = spectral(
            &out,
            |k| Complex64::from_polar(1.0, -k * s),
            |k| Complex64::new((k * s).cos(), 0.0),
        );
    }
    out.check_boundary("the shifted state reaches the grid edge; enlarge the grid")?;
    Ok(out)
}

/// Evolution under `H = -gamma Omega P` for the eigenvalue `omega`:
/// `Psi(X, T) = Psi_0(X - gamma omega T)`.
pub fn evolve_measurement(
    psi: &GridWavefunction,
    coupling: &MeasurementCoupling,
    omega: f64,
) -> Result<GridWavefunction, PointerError> {
    translate(psi, coupling.shift(omega))
}

/// Free-particle evolution for a time `t`, `exp(-i hbar k^2 t / 2m)` in the
/// momentum representation.
pub fn evolve_free(psi: &GridWavefunction, t: f64) -> Result<GridWavefunction, PointerError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(PointerError::Domain(format!(
            "t must be finite and >= 0, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(psi.clone());
    }
    let c = psi.hbar * t / (2.0 * psi.mass);
    let phase = |k: f64| Complex64::from_polar(1.0, -c * k * k);
    let out = psi.with_amplitudes(spectral(psi, phase, phase));
    let sigma = psi.position_variance().sqrt();
    let spread = sigma * (1.0 + (c / (sigma * sigma)).powi(2)).sqrt();
    let need = psi.mean_position().abs() + 8.0 * spread;
    out.check_boundary(&format!(
        "the spread state reaches the grid edge; use a half-width of at least {need:.4e}"
    ))?;
    Ok(out)
}

/// One term `c |label> (x) |pointer>` of a post-measurement state.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub label: usize,
    pub omega: f64,
    pub amplitude: Complex64,
    pub pointer: GridWavefunction,
}

/// `sum_j c_j |omega_j> (x) |Psi_j>`, kept as a list because the
/// micro-system and the pointer are separate factors.
#[derive(Clone, Debug, PartialEq)]
pub struct EntangledState {
    pub branches: Vec<Branch>,
}

impl EntangledState {
    /// `<Psi_i|Psi_j>` of the pointer states.
    pub fn pointer_overlap(&self, i: usize, j: usize) -> Result<Complex64, PointerError> {
        overlap(&self.branches[i].pointer, &self.branches[j].pointer)
    }

    /// Off-diagonal element `c_i conj(c_j) <Psi_j|Psi_i>` of the reduced
    /// density matrix of the micro-system.
    pub fn coherence(&self, i: usize, j: usize) -> Result<Complex64, PointerError> {
        let (bi, bj) = (&self.branches[i], &self.branches[j]);
        Ok(bi.amplitude * bj.amplitude.conj() * overlap(&bj.pointer, &bi.pointer)?)
    }
}

/// Couples `psi0` to the superposition `c1 |omega1> + c2 |omega2>`.
pub fn measure_superposition(
    psi0: &GridWavefunction,
    coupling: &MeasurementCoupling,
    c1: Complex64,
    c2: Complex64,
) -> Result<EntangledState, PointerError> {
    let norm = c1.norm_sqr() + c2.norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(PointerError::Domain(format!(
            "|c1|^2 + |c2|^2 = {norm}, expected 1"
        )));
    }
    let branches = [(coupling.omega1, c1), (coupling.omega2, c2)]
        .into_iter()
        .enumerate()
        .map(|(label, (omega, amplitude))| {
            Ok(Branch {
                label,
                omega,
                amplitude,
                pointer: evolve_measurement(psi0, coupling, omega)?,
            })
        })
        .collect::<Result<_, PointerError>>()?;
    Ok(EntangledState { branches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::{gaussian_pointer, GridSpec};

    fn unit_gaussian(half_width: f64, n: usize, center: f64) -> GridWavefunction {
        let g = GridSpec::cell_centered(half_width, n).unwrap();
        gaussian_pointer(1.0, center, &g, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_shift_is_identity() {
        let psi = unit_gaussian(32.0, 512, 0.0);
        let c = MeasurementCoupling::new(1.0, 0.0, 1.0, 1.0).unwrap();
        let out = evolve_measurement(&psi, &c, 0.0).unwrap();
        assert!(out.l2_distance(&psi).unwrap() < 1e-12);
    }

    #[test]
    fn shift_by_six() {
        let psi = unit_gaussian(32.0, 1024, 0.0);
        let c = MeasurementCoupling::new(1.0, 0.0, 2.0, 3.0).unwrap();
        let out = evolve_measurement(&psi, &c, 2.0).unwrap();
        let want = unit_gaussian(32.0, 1024, 6.0);
        assert!(out.l2_distance(&want).unwrap() < 1e-8);
        assert!((out.mean_position() - 6.0).abs() < 1e-10);
    }

    #[test]
    fn fractional_and_negative_shifts() {
        let psi = unit_gaussian(32.0, 1024, 0.0);
        for s in [0.013, -0.37, 3.3333, -7.71] {
            let c = MeasurementCoupling::new(s, 0.0, 1.0, 1.0).unwrap();
            let out = evolve_measurement(&psi, &c, 1.0).unwrap();
            let want = unit_gaussian(32.0, 1024, s);
            assert!(out.l2_distance(&want).unwrap() < 1e-12, "{s}");
            assert!((out.norm_squared() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn escaping_support_is_an_error() {
        let psi = unit_gaussian(16.0, 256, 0.0);
        let c = MeasurementCoupling::new(1.0, 0.0, 1.0, 10.0).unwrap();
        assert!(matches!(
            evolve_measurement(&psi, &c, 1.0),
            Err(PointerError::SupportEscape { .. })
        ));
        // a full period would wrap back onto itself; still refused
        let c = MeasurementCoupling::new(1.0, 0.0, 1.0, 32.0).unwrap();
        assert!(evolve_measurement(&psi, &c, 1.0).is_err());
    }

    #[test]
    fn free_spreading_of_unit_gaussian() {
        let psi = unit_gaussian(64.0, 2048, 0.0);
        assert_eq!(evolve_free(&psi, 0.0).unwrap(), psi);
        let out = evolve_free(&psi, 2.0).unwrap();
        assert!((out.position_variance() - 2.0).abs() < 1e-9);
        assert!((out.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_spreading_off_the_grid_is_an_error() {
        let psi = unit_gaussian(16.0, 512, 0.0);
        let err = evolve_free(&psi, 40.0).unwrap_err();
        assert!(matches!(err, PointerError::BoundaryViolation { .. }));
        assert!(err.to_string().contains("half-width"));
    }

    #[test]
    fn superposition_branches() {
        let psi = unit_gaussian(32.0, 1024, 0.0);
        let c = MeasurementCoupling::new(1.0, -2.0, 2.0, 1.0).unwrap();
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let state = measure_superposition(&psi, &c, h, h).unwrap();
        assert!((state.branches[0].pointer.mean_position() + 2.0).abs() < 1e-10);
        // separation 4: e^-2
        let o = state.pointer_overlap(0, 1).unwrap();
        assert!((o.re - (-2.0f64).exp()).abs() < 1e-12);
        assert!((state.coherence(0, 1).unwrap().re - 0.5 * (-2.0f64).exp()).abs() < 1e-12);
        assert!(measure_superposition(&psi, &c, h, Complex64::new(1.0, 0.0)).is_err());
    }
}
