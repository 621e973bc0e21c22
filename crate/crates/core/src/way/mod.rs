//! Finite-dimensional checks of the Wigner–Araki–Yanase limitation.
//!
//! A system `S` with observable `M` is measured by an apparatus `A` through
//! a unitary `U` on `S (x) A` that conserves an additive quantity
//! `Gamma = Gamma_S (x) 1 + 1 (x) Gamma_A`. If the measurement is ideal,
//! `U |m>|A0> = |m>|A_m>`, and the `|A_m>` are mutually orthogonal, then
//! `[Gamma_S, M] = 0`. This module computes the residuals that witness
//! each step, and [`nonideality_sweep`] measures how far from ideal the
//! best conserving measurement of a spin-1/2 `S_z` can get as the
//! apparatus spin grows.
//!
//! Conventions: `hbar = 1`, `S_k = sigma_k / 2`, and product vectors are
//! indexed `s * dim_a + a`.

mod search;
mod sweep;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use search::{witness_search, WitnessSearch};
pub use sweep::{
    nonideality_sweep, sweep_model, OptimizerStatus, SweepOptions, SweepRow, SweepTable,
};

/// Hermiticity and unitarity residuals allowed after construction.
pub const STRUCTURE_TOLERANCE: f64 = 1e-12;
/// Residuals under which a model counts as conserving, ideal or orthogonal.
pub const PRECONDITION_TOLERANCE: f64 = 1e-9;
/// Projections lighter than this are the distorting regime.
pub const MIN_FIDELITY: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WayError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has a non-finite entry")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{what} is not Hermitian (residual {residual:.3e})")]
    NotHermitian { what: &'static str, residual: f64 },
    #[error("U is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },
    #[error("ready state has norm {norm}, expected 1")]
    NotNormalized { norm: f64 },
    #[error("M is degenerate (eigenvalue gap {gap:.3e})")]
    Degenerate { gap: f64 },
    #[error("outcome {index} has fidelity {fidelity:.3e}: the measurement is distorting")]
    Distorting { index: usize, fidelity: f64 },
    #[error("outcome index {index} out of range for {count} outcomes")]
    OutcomeIndex { index: usize, count: usize },
    #[error("j must be a non-negative half-integer, got {0}")]
    BadSpin(f64),
    #[error("{0}")]
    Domain(String),
}

/// A dense complex square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix(DMatrix<Complex64>);

impl OperatorMatrix {
    pub fn new(m: DMatrix<Complex64>) -> Result<Self, WayError> {
        if m.nrows() != m.ncols() {
            return Err(WayError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(WayError::NonFinite);
        }
        Ok(OperatorMatrix(m))
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self, WayError> {
        if entries.len() != dim * dim {
            return Err(WayError::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_iterator(
            dim,
            dim,
            entries.iter().map(|&x| Complex64::new(x, 0.0)),
        ))
    }

    pub fn identity(dim: usize) -> Self {
        OperatorMatrix(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        OperatorMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix(self.0.adjoint())
    }

    pub fn kron(&self, other: &OperatorMatrix) -> Self {
        OperatorMatrix(self.0.kronecker(&other.0))
    }

    fn check_dim(&self, other: &OperatorMatrix) -> Result<(), WayError> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(WayError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            })
        }
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &OperatorMatrix) -> Result<Self, WayError> {
        self.check_dim(other)?;
        Ok(OperatorMatrix(&self.0 * &other.0 - &other.0 * &self.0))
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.0.singular_values_unordered().max()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        OperatorMatrix(&self.0 - self.0.adjoint()).operator_norm()
    }

    pub fn unitarity_residual(&self) -> f64 {
        let n = self.dim();
        OperatorMatrix(self.0.adjoint() * &self.0 - DMatrix::identity(n, n)).operator_norm()
    }

    /// `(self + self^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        OperatorMatrix((&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0))
    }

    /// Eigenvalues in ascending order with eigenvectors as columns. Only the
    /// Hermitian part is used.
    pub fn eigh(&self) -> (Vec<f64>, DMatrix<Complex64>) {
        let e = SymmetricEigen::new(self.hermitian_part().0);
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
        let values = order.iter().map(|&i| e.eigenvalues[i]).collect();
        let vectors =
            DMatrix::from_fn(self.dim(), self.dim(), |r, c| e.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// `exp(-i t H)` for Hermitian `H = self`.
    pub fn exp_i(&self, t: f64) -> Result<Self, WayError> {
        let residual = self.hermiticity_residual();
        if residual > STRUCTURE_TOLERANCE * self.operator_norm().max(1.0) {
            return Err(WayError::NotHermitian {
                what: "generator",
                residual,
            });
        }
        let (values, v) = self.eigh();
        let phases = DMatrix::from_diagonal(&DVector::from_iterator(
            values.len(),
            values.iter().map(|&l| Complex64::from_polar(1.0, -t * l)),
        ));
        Ok(OperatorMatrix(&v * phases * v.adjoint()))
    }
}

impl std::ops::Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 * &rhs.0)
    }
}

impl std::ops::Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 + &rhs.0)
    }
}

type Pairs = Vec<[f64; 2]>;

fn to_pairs(v: impl Iterator<Item = Complex64>) -> Pairs {
    v.map(|c| [c.re, c.im]).collect()
}

fn from_pairs(v: &[[f64; 2]]) -> Vec<Complex64> {
    v.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
}

impl Serialize for OperatorMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Pairs> = self
            .0
            .row_iter()
            .map(|r| to_pairs(r.iter().copied()))
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for OperatorMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows: Vec<Pairs> = Vec::deserialize(d)?;
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(serde::de::Error::custom(format!(
                "row of length {} in a {n}x{n} matrix",
                r.len()
            )));
        }
        let flat: Vec<Complex64> = rows.iter().flat_map(|r| from_pairs(r)).collect();
        OperatorMatrix::new(DMatrix::from_row_slice(n, n, &flat)).map_err(serde::de::Error::custom)
    }
}

/// `(J_x, J_y, J_z)` for spin `j` in the `J_z` basis `m = j, j-1, ..., -j`.
pub fn spin_operators(j: f64) -> Result<[OperatorMatrix; 3], WayError> {
    let two_j = 2.0 * j;
    if !(two_j >= 0.0 && two_j.fract() == 0.0 && two_j <= 1e4) {
        return Err(WayError::BadSpin(j));
    }
    let dim = two_j as usize + 1;
    let m = |i: usize| j - i as f64;
    // <m+1| J+ |m>, row i-1, column i
    let mut plus = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 1..dim {
        let mi = m(i);
        plus[(i - 1, i)] = Complex64::new((j * (j + 1.0) - mi * (mi + 1.0)).sqrt(), 0.0);
    }
    let minus = plus.adjoint();
    let jx = (&plus + &minus) * Complex64::new(0.5, 0.0);
    let jy = (&plus - &minus) * Complex64::new(0.0, -0.5);
    let jz = DMatrix::from_diagonal(&DVector::from_fn(dim, |i, _| Complex64::new(m(i), 0.0)));
    Ok([OperatorMatrix(jx), OperatorMatrix(jy), OperatorMatrix(jz)])
}

/// A Haar-random unitary: QR of a complex Ginibre matrix with the phases
/// of `R`'s diagonal divided out.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> OperatorMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DVector::from_fn(dim, |i, _| {
        let d = r[(i, i)];
        if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        }
    });
    OperatorMatrix(q * DMatrix::from_diagonal(&phases))
}

/// A random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> OperatorMatrix {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    OperatorMatrix(g).hermitian_part()
}

/// `Gamma_S (x) 1 + 1 (x) Gamma_A`.
pub fn additive(gamma_s: &OperatorMatrix, gamma_a: &OperatorMatrix) -> OperatorMatrix {
    let (ds, da) = (gamma_s.dim(), gamma_a.dim());
    &gamma_s.kron(&OperatorMatrix::identity(da)) + &OperatorMatrix::identity(ds).kron(gamma_a)
}

/// A measurement model: observable `M` on `S`, the two parts of the
/// conserved quantity, the coupling `U` on `S (x) A` and the ready state
/// `|A0>`.
#[derive(Clone, Debug, PartialEq)]
pub struct WAYModel {
    m: OperatorMatrix,
    gamma_s: OperatorMatrix,
    gamma_a: OperatorMatrix,
    u: OperatorMatrix,
    ready_state: DVector<Complex64>,
}

impl WAYModel {
    pub fn new(
        m: OperatorMatrix,
        gamma_s: OperatorMatrix,
        gamma_a: OperatorMatrix,
        u: OperatorMatrix,
        ready_state: Vec<Complex64>,
    ) -> Result<Self, WayError> {
        let (ds, da) = (m.dim(), gamma_a.dim());
        m.check_dim(&gamma_s)?;
        if u.dim() != ds * da {
            return Err(WayError::DimensionMismatch {
                expected: ds * da,
                got: u.dim(),
            });
        }
        if ready_state.len() != da {
            return Err(WayError::DimensionMismatch {
                expected: da,
                got: ready_state.len(),
            });
        }
        for (what, op) in [("M", &m), ("Gamma_S", &gamma_s), ("Gamma_A", &gamma_a)] {
            let residual = op.hermiticity_residual();
            if residual > STRUCTURE_TOLERANCE {
                return Err(WayError::NotHermitian { what, residual });
            }
        }
        let residual = u.unitarity_residual();
        if residual > STRUCTURE_TOLERANCE {
            return Err(WayError::NotUnitary { residual });
        }
        let ready_state = DVector::from_vec(ready_state);
        let norm = ready_state.norm();
        if (norm - 1.0).abs() > STRUCTURE_TOLERANCE {
            return Err(WayError::NotNormalized { norm });
        }
        Ok(WAYModel {
            m,
            gamma_s,
            gamma_a,
            u,
            ready_state,
        })
    }

    pub fn dim_s(&self) -> usize {
        self.m.dim()
    }

    pub fn dim_a(&self) -> usize {
        self.gamma_a.dim()
    }

    pub fn m(&self) -> &OperatorMatrix {
        &self.m
    }

    pub fn gamma_s(&self) -> &OperatorMatrix {
        &self.gamma_s
    }

    pub fn gamma_a(&self) -> &OperatorMatrix {
        &self.gamma_a
    }

    pub fn u(&self) -> &OperatorMatrix {
        &self.u
    }

    pub fn ready_state(&self) -> &DVector<Complex64> {
        &self.ready_state
    }

    pub fn total_gamma(&self) -> OperatorMatrix {
        additive(&self.gamma_s, &self.gamma_a)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    dim_s: usize,
    dim_a: usize,
    m: OperatorMatrix,
    gamma_s: OperatorMatrix,
    gamma_a: OperatorMatrix,
    u: OperatorMatrix,
    ready_state: Pairs,
}

impl Serialize for WAYModel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ModelJson {
            dim_s: self.dim_s(),
            dim_a: self.dim_a(),
            m: self.m.clone(),
            gamma_s: self.gamma_s.clone(),
            gamma_a: self.gamma_a.clone(),
            u: self.u.clone(),
            ready_state: to_pairs(self.ready_state.iter().copied()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WAYModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = ModelJson::deserialize(d)?;
        if j.m.dim() != j.dim_s || j.gamma_a.dim() != j.dim_a {
            return Err(serde::de::Error::custom(format!(
                "declared dimensions {}x{} do not match the matrices",
                j.dim_s, j.dim_a
            )));
        }
        WAYModel::new(j.m, j.gamma_s, j.gamma_a, j.u, from_pairs(&j.ready_state))
            .map_err(serde::de::Error::custom)
    }
}

/// `|| U^dagger Gamma U - Gamma ||`.
pub fn conservation_residual(u: &OperatorMatrix, gamma: &OperatorMatrix) -> Result<f64, WayError> {
    u.check_dim(gamma)?;
    Ok(OperatorMatrix(u.0.adjoint() * &gamma.0 * &u.0 - &gamma.0).operator_norm())
}

/// `|| [Gamma_S, M] ||`.
pub fn commutator_obstruction(
    m: &OperatorMatrix,
    gamma_s: &OperatorMatrix,
) -> Result<f64, WayError> {
    Ok(gamma_s.commutator(m)?.operator_norm())
}

/// What `U` does to one eigenstate `|m>` of `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub eigenvalue: f64,
    pub eigenvector: DVector<Complex64>,
    /// Normalized `(<m| (x) 1) U |m>|A0>`.
    pub apparatus_state: DVector<Complex64>,
    /// Squared norm of that projection; 1 for a non-distorting coupling.
    pub fidelity: f64,
}

/// Eigenvectors of `M` in ascending eigenvalue order, rejecting
/// degenerate spectra.
fn eigenbasis(m: &OperatorMatrix) -> Result<(Vec<f64>, DMatrix<Complex64>), WayError> {
    let (values, vectors) = m.eigh();
    let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let gap = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if gap < PRECONDITION_TOLERANCE * scale {
        return Err(WayError::Degenerate { gap });
    }
    Ok((values, vectors))
}

fn outcome_projections(model: &WAYModel) -> Result<Vec<Outcome>, WayError> {
    let (ds, da) = (model.dim_s(), model.dim_a());
    let (values, vectors) = eigenbasis(&model.m)?;
    Ok(values
        .iter()
        .enumerate()
        .map(|(k, &eigenvalue)| {
            let v = vectors.column(k).into_owned();
            let input = DVector::from_fn(ds * da, |i, _| v[i / da] * model.ready_state[i % da]);
            let w = &model.u.0 * input;
            let proj = DVector::from_fn(da, |a, _| {
                (0..ds)
                    .map(|s| v[s].conj() * w[s * da + a])
                    .sum::<Complex64>()
            });
            let fidelity = proj.norm_squared();
            Outcome {
                eigenvalue,
                eigenvector: v,
                apparatus_state: proj,
                fidelity,
            }
        })
        .collect())
}

/// `U [|m> (x) |A0>]` projected onto `|m> (x) (.)` for every eigenstate of
/// `M`.
pub fn outcome_states(model: &WAYModel) -> Result<Vec<Outcome>, WayError> {
    let mut outcomes = outcome_projections(model)?;
    for (index, o) in outcomes.iter_mut().enumerate() {
        if o.fidelity <= MIN_FIDELITY {
            return Err(WayError::Distorting {
                index,
                fidelity: o.fidelity,
            });
        }
        o.apparatus_state /= Complex64::new(o.fidelity.sqrt(), 0.0);
    }
    Ok(outcomes)
}

/// Result of [`chain_identity_residual`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainReport {
    Evaluated {
        /// `<m'| [Gamma_S, M] |m>`.
        lhs: [f64; 2],
        /// `(m - m') [<m'|m> <A_m'|Gamma_A|A_m> + <A_m'|A_m> <m'|Gamma_S|m>]`.
        rhs: [f64; 2],
        residual: f64,
    },
    PreconditionsUnmet {
        conservation_residual: f64,
        min_fidelity: f64,
    },
}

impl ChainReport {
    pub fn residual(&self) -> Option<f64> {
        match self {
            ChainReport::Evaluated { residual, .. } => Some(*residual),
            ChainReport::PreconditionsUnmet { .. } => None,
        }
    }
}

fn inner(a: &DVector<Complex64>, b: &DVector<Complex64>) -> Complex64 {
    a.dotc(b)
}

fn sandwich(a: &DVector<Complex64>, op: &OperatorMatrix, b: &DVector<Complex64>) -> Complex64 {
    a.dotc(&(&op.0 * b))
}

/// Both ends of the chain from `<m'|[Gamma_S, M]|m>` to
/// `(m - m')[<m'|m><A_m'|Gamma_A|A_m> + <A_m'|A_m><m'|Gamma_S|m>]`,
/// evaluated independently. `m` and `m_prime` index the eigenvalues of `M`
/// in ascending order. Only asserted when the coupling is ideal and
/// conserving to [`PRECONDITION_TOLERANCE`].
pub fn chain_identity_residual(
    model: &WAYModel,
    m: usize,
    m_prime: usize,
) -> Result<ChainReport, WayError> {
    let count = model.dim_s();
    for index in [m, m_prime] {
        if index >= count {
            return Err(WayError::OutcomeIndex { index, count });
        }
    }
    let conservation = conservation_residual(&model.u, &model.total_gamma())?;
    let outcomes = outcome_projections(model)?;
    let min_fidelity = outcomes
        .iter()
        .map(|o| o.fidelity)
        .fold(f64::INFINITY, f64::min);
    if conservation >= PRECONDITION_TOLERANCE
        || (1.0 - min_fidelity).abs() >= PRECONDITION_TOLERANCE
    {
        return Ok(ChainReport::PreconditionsUnmet {
            conservation_residual: conservation,
            min_fidelity,
        });
    }
    let outcomes = outcome_states(model)?;
    let (o, op) = (&outcomes[m], &outcomes[m_prime]);
    let lhs = sandwich(
        &op.eigenvector,
        &model.gamma_s.commutator(&model.m)?,
        &o.eigenvector,
    );
    let rhs = (o.eigenvalue - op.eigenvalue)
        * (inner(&op.eigenvector, &o.eigenvector)
            * sandwich(&op.apparatus_state, &model.gamma_a, &o.apparatus_state)
            + inner(&op.apparatus_state, &o.apparatus_state)
                * sandwich(&op.eigenvector, &model.gamma_s, &o.eigenvector));
    Ok(ChainReport::Evaluated {
        lhs: [lhs.re, lhs.im],
        rhs: [rhs.re, rhs.im],
        residual: (lhs - rhs).norm(),
    })
}

/// `X |k> = |k+1 mod n>`.
pub fn cyclic_shift(n: usize) -> OperatorMatrix {
    OperatorMatrix(DMatrix::from_fn(n, n, |r, c| {
        Complex64::new(if r == (c + 1) % n { 1.0 } else { 0.0 }, 0.0)
    }))
}

/// The discrete pointer momentum, `sum_k k |f_k><f_k|` over the Fourier
/// basis `f_k(x) = exp(2 pi i k x / n) / sqrt n`. Commutes with
/// [`cyclic_shift`].
pub fn pointer_momentum(n: usize) -> OperatorMatrix {
    let nf = n as f64;
    OperatorMatrix(DMatrix::from_fn(n, n, |r, c| {
        (0..n)
            .map(|k| {
                let phase = 2.0 * std::f64::consts::PI * k as f64 * (r as f64 - c as f64) / nf;
                Complex64::from_polar(k as f64 / nf, phase)
            })
            .sum()
    }))
    .hermitian_part()
}

/// A spin-1/2 `S_z` measured by a pointer of `dim_a` positions: `|up>`
/// shifts the pointer by `dim_a / 2`, `|down>` leaves it. With
/// `Gamma = S_z (x) 1 - 1 (x) P` the coupling is exactly conserving, ideal,
/// and has orthogonal outcome states.
pub fn controlled_shift_model(dim_a: usize) -> Result<WAYModel, WayError> {
    if dim_a < 2 || dim_a % 2 != 0 {
        return Err(WayError::Domain(format!(
            "dim_a must be even and >= 2, got {dim_a}"
        )));
    }
    let [_, _, sz] = spin_operators(0.5)?;
    let x = cyclic_shift(dim_a);
    let mut shift = OperatorMatrix::identity(dim_a);
    for _ in 0..dim_a / 2 {
        shift = &x * &shift;
    }
    let up = OperatorMatrix::from_real(2, &[1.0, 0.0, 0.0, 0.0])?;
    let down = OperatorMatrix::from_real(2, &[0.0, 0.0, 0.0, 1.0])?;
    let u = &up.kron(&shift) + &down.kron(&OperatorMatrix::identity(dim_a));
    let p = pointer_momentum(dim_a);
    let gamma_a = OperatorMatrix(-p.0);
    let mut ready = vec![Complex64::new(0.0, 0.0); dim_a];
    ready[0] = Complex64::new(1.0, 0.0);
    WAYModel::new(sz.clone(), sz, gamma_a, u, ready)
}
