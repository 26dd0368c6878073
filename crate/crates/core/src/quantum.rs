//! Two-qubit operators, the Pauli operator basis and process (chi) matrices.
//!
//! A process is stored as its 16x16 chi matrix in the unnormalized Pauli
//! basis `A_m = P_a (x) P_b`, `m = 4a + b`, `P in {I, X, Y, Z}`, with the first
//! factor acting on the control qubit. Unitary channels then have
//! `chi = a a^dagger` with `a_m = Tr[A_m^dagger U] / 4`, which has unit trace.

use std::f64::consts::PI;
use std::fmt;
use std::sync::LazyLock;

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
/// Operator on the two-qubit Hilbert space (4x4).
pub type Op4 = SMatrix<C64, 4, 4>;
/// Matrix on the 16-dimensional operator space (process matrices, T factors).
pub type Mat16 = SMatrix<C64, 16, 16>;
pub type Vec16 = SVector<C64, 16>;

pub const DIM: usize = 4;
pub const NUM_OPS: usize = 16;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("channel parameter {0} is outside (0, 2pi]")]
    InvalidPhi(f64),
    #[error("matrix has zero trace")]
    ZeroTrace,
    #[error("spectrum has no positive eigenvalue")]
    DegenerateSpectrum,
    #[error("expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    Dimension {
        expected: usize,
        rows: usize,
        cols: usize,
    },
}

/// Channel parameter of the controlled-phase gate, in radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ChannelParameter(f64);

impl ChannelParameter {
    pub fn new(radians: f64) -> Result<Self, QuantumError> {
        if radians.is_finite() && radians > 0.0 && radians <= 2.0 * PI + 1e-12 {
            Ok(Self(radians))
        } else {
            Err(QuantumError::InvalidPhi(radians))
        }
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

/// The 16-value phi grid used for dataset generation: fifteen multiples of
/// pi/12 plus the 2pi endpoint, sorted ascending.
pub fn phi_grid() -> Vec<ChannelParameter> {
    // in units of pi/12
    const STEPS: [u32; 16] = [2, 3, 4, 6, 8, 9, 10, 12, 14, 15, 16, 18, 20, 21, 22, 24];
    STEPS
        .iter()
        .map(|&s| ChannelParameter(f64::from(s) * PI / 12.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChiLabel {
    Theoretical,
    Noisy,
    Mle,
    Denoised,
}

impl fmt::Display for ChiLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChiLabel::Theoretical => "theoretical",
            ChiLabel::Noisy => "noisy",
            ChiLabel::Mle => "mle",
            ChiLabel::Denoised => "denoised",
        })
    }
}

impl std::str::FromStr for ChiLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "theoretical" => Ok(ChiLabel::Theoretical),
            "noisy" => Ok(ChiLabel::Noisy),
            "mle" => Ok(ChiLabel::Mle),
            "denoised" => Ok(ChiLabel::Denoised),
            other => Err(format!("unknown chi label `{other}`")),
        }
    }
}

/// A 16x16 process matrix with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessMatrix {
    pub chi: Mat16,
    pub phi: Option<ChannelParameter>,
    pub signal_ratio: Option<f64>,
    pub label: ChiLabel,
}

impl ProcessMatrix {
    pub fn new(chi: Mat16, label: ChiLabel) -> Self {
        Self {
            chi,
            phi: None,
            signal_ratio: None,
            label,
        }
    }

    pub fn with_phi(mut self, phi: ChannelParameter) -> Self {
        self.phi = Some(phi);
        self
    }

    pub fn with_signal_ratio(mut self, r: f64) -> Self {
        self.signal_ratio = Some(r);
        self
    }

    pub fn trace(&self) -> C64 {
        self.chi.trace()
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.chi)
    }

    /// Image view: `[row][col][channel]` flattened row-major with channel 0
    /// the real part and channel 1 the imaginary part (16x16x2 = 512 values).
    pub fn to_image(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(512);
        for r in 0..16 {
            for c in 0..16 {
                let z = self.chi[(r, c)];
                out.push(z.re);
                out.push(z.im);
            }
        }
        out
    }

    pub fn from_image(values: &[f64], label: ChiLabel) -> Self {
        assert_eq!(values.len(), 512, "image view holds 512 values");
        let chi = Mat16::from_fn(|r, c| {
            let k = 2 * (16 * r + c);
            C64::new(values[k], values[k + 1])
        });
        Self::new(chi, label)
    }
}

pub fn hermiticity_error<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..N {
        for j in 0..N {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitize<const N: usize>(m: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    (m + m.adjoint()).scale(0.5)
}

fn single_qubit_paulis() -> [SMatrix<C64, 2, 2>; 4] {
    [
        SMatrix::<C64, 2, 2>::new(ONE, ZERO, ZERO, ONE),
        SMatrix::<C64, 2, 2>::new(ZERO, ONE, ONE, ZERO),
        SMatrix::<C64, 2, 2>::new(ZERO, -I, I, ZERO),
        SMatrix::<C64, 2, 2>::new(ONE, ZERO, ZERO, -ONE),
    ]
}

/// Kronecker product of two single-qubit operators; `a` acts on the control
/// (most significant) qubit.
pub fn kron2(a: &SMatrix<C64, 2, 2>, b: &SMatrix<C64, 2, 2>) -> Op4 {
    Op4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// The 16 two-qubit Pauli products `A_m`, `m = 4a + b`.
#[derive(Debug, Clone)]
pub struct PauliBasis {
    ops: [Op4; 16],
    adjoints: [Op4; 16],
}

impl PauliBasis {
    pub fn new() -> Self {
        let p = single_qubit_paulis();
        let ops: [Op4; 16] = std::array::from_fn(|m| kron2(&p[m / 4], &p[m % 4]));
        let adjoints = ops.map(|a| a.adjoint());
        Self { ops, adjoints }
    }

    pub fn ops(&self) -> &[Op4; 16] {
        &self.ops
    }

    pub fn op(&self, m: usize) -> &Op4 {
        &self.ops[m]
    }

    pub fn adjoint(&self, m: usize) -> &Op4 {
        &self.adjoints[m]
    }

    /// Coefficients of `op` in this basis: `a_m = Tr[A_m^dagger op] / 4`.
    pub fn decompose(&self, op: &Op4) -> Vec16 {
        Vec16::from_fn(|m, _| (self.adjoints[m] * op).trace() / 4.0)
    }

    pub fn label(m: usize) -> &'static str {
        const NAMES: [&str; 16] = [
            "II", "IX", "IY", "IZ", "XI", "XX", "XY", "XZ", "YI", "YX", "YY", "YZ", "ZI", "ZX",
            "ZY", "ZZ",
        ];
        NAMES[m]
    }
}

impl Default for PauliBasis {
    fn default() -> Self {
        Self::new()
    }
}

static PAULI: LazyLock<PauliBasis> = LazyLock::new(PauliBasis::new);

/// Shared Pauli basis instance.
pub fn pauli() -> &'static PauliBasis {
    &PAULI
}

/// `CP(phi) = diag(1, 1, 1, exp(-i phi))`.
pub fn cp_unitary(phi: ChannelParameter) -> Op4 {
    let mut u = Op4::identity();
    u[(3, 3)] = C64::from_polar(1.0, -phi.radians());
    u
}

/// Process matrix of the ideal controlled-phase channel.
pub fn ideal_chi(phi: ChannelParameter) -> ProcessMatrix {
    let a = pauli().decompose(&cp_unitary(phi));
    let chi = a * a.adjoint();
    ProcessMatrix::new(chi, ChiLabel::Theoretical).with_phi(phi)
}

/// `sum_mn chi_mn A_m rho A_n^dagger`.
pub fn apply_chi(chi: &Mat16, rho: &Op4) -> Op4 {
    let basis = pauli();
    let mut out = Op4::zeros();
    for m in 0..NUM_OPS {
        let mut right = Op4::zeros();
        for n in 0..NUM_OPS {
            let c = chi[(m, n)];
            if c != ZERO {
                right += basis.adjoint(n) * c;
            }
        }
        if right != Op4::zeros() {
            out += basis.op(m) * rho * right;
        }
    }
    out
}

pub fn apply_channel(chi: &ProcessMatrix, rho: &Op4) -> Op4 {
    apply_chi(&chi.chi, rho)
}

/// Born probability `Tr[projector * E(rho_in)]`. Rounding-level negatives are
/// clamped to zero; values far outside `[0, 1]` are logged since noisy
/// process matrices need not be physical.
pub fn born_probability(chi: &ProcessMatrix, rho_in: &Op4, projector: &Op4) -> f64 {
    let p = (projector * apply_channel(chi, rho_in)).trace().re;
    if !(-1e-10..=1.0 + 1e-10).contains(&p) {
        log::warn!("non-physical Born probability {p} for {} chi", chi.label);
    }
    if (-1e-10..0.0).contains(&p) {
        0.0
    } else {
        p
    }
}

/// Eigendecomposition of a Hermitian matrix (input is symmetrized first).
/// Eigenvalues are returned unsorted together with the column eigenvectors.
pub fn hermitian_eigen(m: &Mat16) -> (SVector<f64, 16>, Mat16) {
    let eig = hermitize(m).symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

fn reassemble(values: &SVector<f64, 16>, vectors: &Mat16) -> Mat16 {
    let mut out = Mat16::zeros();
    for (k, &v) in values.iter().enumerate() {
        if v != 0.0 {
            let col = vectors.column(k);
            out += (col * col.adjoint()).scale(v);
        }
    }
    hermitize(&out)
}

/// Clamp negative eigenvalues to zero and restore the input trace.
pub fn psd_project(m: &ProcessMatrix) -> Result<ProcessMatrix, QuantumError> {
    let (vals, vecs) = hermitian_eigen(&m.chi);
    if vals.iter().all(|&v| v <= 0.0) {
        return Err(QuantumError::DegenerateSpectrum);
    }
    if vals.iter().all(|&v| v >= 0.0) {
        let mut out = m.clone();
        out.chi = hermitize(&m.chi);
        return Ok(out);
    }
    let clipped = vals.map(|v| v.max(0.0));
    let mut chi = reassemble(&clipped, &vecs);
    let target = m.chi.trace().re;
    let kept = clipped.sum();
    if target > 0.0 {
        chi *= C64::from(target / kept);
    }
    Ok(ProcessMatrix { chi, ..m.clone() })
}

// Eigenvalues below this fraction of the largest are treated as zero inside
// square roots; rounding noise at 1e-16 would otherwise contribute ~1e-8
// per eigenvalue.
const SQRT_REL_CUTOFF: f64 = 1e-13;

fn psd_sqrt(m: &Mat16) -> Mat16 {
    let (vals, vecs) = hermitian_eigen(m);
    let cutoff = vals.max().max(0.0) * SQRT_REL_CUTOFF;
    let roots = vals.map(|v| if v > cutoff { v.sqrt() } else { 0.0 });
    reassemble(&roots, &vecs)
}

/// Uhlmann process fidelity `(Tr sqrt(sqrt(A) B sqrt(A)))^2 / (Tr A Tr B)`
/// after projecting both arguments onto the PSD cone.
///
/// The trace is taken as the nuclear norm of `sqrt(A) sqrt(B)`, which avoids
/// squaring the spectrum (and its rounding noise) before the root.
pub fn process_fidelity(a: &ProcessMatrix, b: &ProcessMatrix) -> Result<f64, QuantumError> {
    let a = psd_project(a)?;
    let b = psd_project(b)?;
    let ta = a.chi.trace().re;
    let tb = b.chi.trace().re;
    if ta <= 0.0 || tb <= 0.0 {
        return Err(QuantumError::ZeroTrace);
    }
    let s = (psd_sqrt(&a.chi) * psd_sqrt(&b.chi)).singular_values().sum();
    Ok(s * s / (ta * tb))
}

/// Pure two-qubit density matrix from a (possibly unnormalized) state vector.
pub fn pure_state(psi: &SVector<C64, 4>) -> Op4 {
    let n = psi.norm_squared();
    (psi * psi.adjoint()) / C64::from(n)
}

/// Single-qubit states used for preparation and measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QubitState {
    Zero,
    One,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl QubitState {
    pub fn amplitudes(self) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            QubitState::Zero => [ONE, ZERO],
            QubitState::One => [ZERO, ONE],
            QubitState::Plus => [C64::from(h), C64::from(h)],
            QubitState::Minus => [C64::from(h), C64::from(-h)],
            QubitState::PlusI => [C64::from(h), C64::new(0.0, h)],
            QubitState::MinusI => [C64::from(h), C64::new(0.0, -h)],
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            QubitState::Zero => "0",
            QubitState::One => "1",
            QubitState::Plus => "+",
            QubitState::Minus => "-",
            QubitState::PlusI => "+i",
            QubitState::MinusI => "-i",
        }
    }
}

pub fn product_ket(control: QubitState, target: QubitState) -> SVector<C64, 4> {
    let a = control.amplitudes();
    let b = target.amplitudes();
    SVector::<C64, 4>::from_fn(|k, _| a[k / 2] * b[k % 2])
}

pub fn product_state(control: QubitState, target: QubitState) -> Op4 {
    pure_state(&product_ket(control, target))
}
