//! Simulated process tomography: preparation/measurement alphabet, expected
//! and Poisson-sampled coincidence counts, linear-inversion reconstruction
//! (through the beta/tau change of basis and by direct least squares) and
//! generation of the labelled dataset used for training.

use std::sync::LazyLock;

use nalgebra::{DMatrix, DVector, SMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::{
    hermitize, ideal_chi, pauli, product_state, ChannelParameter, ChiLabel, Mat16, Op4,
    ProcessMatrix, QubitState, C64, NUM_OPS,
};

pub const NUM_INPUTS: usize = 16;
pub const NUM_PROJECTORS: usize = 36;
pub const NUM_BASES: usize = 9;
pub const OUTCOMES_PER_BASIS: usize = 4;
pub const NUM_SETTINGS: usize = NUM_INPUTS * NUM_PROJECTORS;
/// Counts per (input, measurement basis) at signal ratio 1.
pub const BASE_COUNTS: f64 = 2000.0;
pub const DEFAULT_RATIOS: [f64; 3] = [1.0, 0.5, 0.1];
pub const DEFAULT_INSTANCES: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomographyError {
    #[error("signal ratio must be positive, got {0}")]
    InvalidRatio(f64),
    #[error("non-physical probability {p} at input {input}, projector {projector}")]
    NonPhysical {
        p: f64,
        input: usize,
        projector: usize,
    },
    #[error("count table has no sampled counts")]
    CountsUnset,
    #[error("total counts per basis must be positive")]
    ZeroResources,
    #[error("gram matrix of the input states is singular")]
    SingularGram,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("normalization range is degenerate (min = max = {0})")]
    DegenerateRange(f64),
    #[error("invalid dataset request: {0}")]
    InvalidRequest(String),
}

const PREP: [QubitState; 4] = [
    QubitState::Zero,
    QubitState::One,
    QubitState::Plus,
    QubitState::PlusI,
];

/// Single-qubit measurement bases Z, X, Y as (outcome 0, outcome 1).
const MEAS: [(QubitState, QubitState); 3] = [
    (QubitState::Zero, QubitState::One),
    (QubitState::Plus, QubitState::Minus),
    (QubitState::PlusI, QubitState::MinusI),
];

/// Preparation and measurement alphabet.
///
/// Input `j = 4 c + t` prepares `|c> (x) |t>` with `c, t` indexing
/// `{|0>, |1>, |+>, |+i>}`. Projector `l = 4 g + o` belongs to basis group
/// `g = 3 bc + bt` (`Z, X, Y` on each qubit) with outcome `o = 2 oc + ot`.
#[derive(Debug, Clone)]
pub struct StateBasis {
    pub inputs: Vec<Op4>,
    pub projectors: Vec<Op4>,
}

impl StateBasis {
    pub fn new() -> Self {
        let inputs = (0..NUM_INPUTS)
            .map(|j| product_state(PREP[j / 4], PREP[j % 4]))
            .collect();
        let mut projectors = Vec::with_capacity(NUM_PROJECTORS);
        for bc in 0..3 {
            for bt in 0..3 {
                for oc in 0..2 {
                    for ot in 0..2 {
                        let c = if oc == 0 { MEAS[bc].0 } else { MEAS[bc].1 };
                        let t = if ot == 0 { MEAS[bt].0 } else { MEAS[bt].1 };
                        projectors.push(product_state(c, t));
                    }
                }
            }
        }
        Self { inputs, projectors }
    }

    pub fn input_label(j: usize) -> String {
        format!("{}{}", PREP[j / 4].symbol(), PREP[j % 4].symbol())
    }

    pub fn projector_label(l: usize) -> String {
        let (g, o) = (l / 4, l % 4);
        let (bc, bt) = (g / 3, g % 3);
        let pick = |b: usize, bit: usize| if bit == 0 { MEAS[b].0 } else { MEAS[b].1 };
        format!("{}{}", pick(bc, o / 2).symbol(), pick(bt, o % 2).symbol())
    }

    /// Hilbert-Schmidt Gram matrix `G_kl = Tr[rho_k^dagger rho_l]` of the inputs.
    pub fn gram(&self) -> SMatrix<C64, 16, 16> {
        SMatrix::<C64, 16, 16>::from_fn(|k, l| (self.inputs[k].adjoint() * self.inputs[l]).trace())
    }
}

impl Default for StateBasis {
    fn default() -> Self {
        Self::new()
    }
}

/// Index of the real Hermitian parameterization shared by chi reconstruction
/// and the triangular MLE factor: `d` diagonal entries, then the strictly
/// upper entries row by row as (re, im) pairs.
pub fn hermitian_param_count(d: usize) -> usize {
    d * d
}

/// Build a Hermitian `d x d` matrix from its real parameter vector.
pub fn hermitian_from_params(params: &[f64], d: usize) -> DMatrix<C64> {
    assert_eq!(params.len(), d * d);
    let mut out = DMatrix::<C64>::zeros(d, d);
    for k in 0..d {
        out[(k, k)] = C64::from(params[k]);
    }
    let mut idx = d;
    for a in 0..d {
        for b in a + 1..d {
            let z = C64::new(params[idx], params[idx + 1]);
            out[(a, b)] = z;
            out[(b, a)] = z.conj();
            idx += 2;
        }
    }
    out
}

/// Row of real coefficients `Tr[E_k B]` for a Hermitian `B`, so that
/// `Tr[H B] = sum_k h_k row_k` for `H = hermitian_from_params(h)`.
fn hermitian_functional_row(b: &DMatrix<C64>, row: &mut [f64]) {
    let d = b.nrows();
    for k in 0..d {
        row[k] = b[(k, k)].re;
    }
    let mut idx = d;
    for a in 0..d {
        for c in a + 1..d {
            let z = b[(a, c)];
            row[idx] = 2.0 * z.re;
            row[idx + 1] = 2.0 * z.im;
            idx += 2;
        }
    }
}

fn pinv(m: DMatrix<f64>) -> DMatrix<f64> {
    m.pseudo_inverse(1e-12)
        .expect("SVD of a finite design matrix")
}

/// Precomputed linear maps of the tomography experiment.
#[derive(Debug)]
pub struct Setup {
    pub basis: StateBasis,
    /// `B_{jl}` with `p_{jl}(chi) = Tr[chi B_{jl}]`, index `j * 36 + l`.
    pub design: Vec<Mat16>,
    /// Real design of the Hermitian chi parameterization (576 x 256).
    pub real_design: DMatrix<f64>,
    real_design_pinv: DMatrix<f64>,
    /// State tomography design on one input (36 x 16) and its pseudo-inverse.
    state_design_pinv: DMatrix<f64>,
    gram_inv: SMatrix<C64, 16, 16>,
}

static SETUP: LazyLock<Setup> = LazyLock::new(|| Setup::new().expect("standard basis is complete"));

/// Shared experiment setup for the standard preparation/measurement alphabet.
pub fn setup() -> &'static Setup {
    &SETUP
}

impl Setup {
    pub fn new() -> Result<Self, TomographyError> {
        let basis = StateBasis::new();
        let paulis = pauli();
        let mut design = Vec::with_capacity(NUM_SETTINGS);
        for rho in &basis.inputs {
            // A_m rho, reused across projectors
            let left: Vec<Op4> = (0..NUM_OPS).map(|m| paulis.op(m) * rho).collect();
            for proj in &basis.projectors {
                let pa: Vec<Op4> = (0..NUM_OPS).map(|n| paulis.adjoint(n) * proj).collect();
                // B[n][m] = Tr[A_n^dagger Pi A_m rho]
                let b = Mat16::from_fn(|n, m| (pa[n] * left[m]).trace());
                design.push(hermitize(&b));
            }
        }

        let mut real_design = DMatrix::<f64>::zeros(NUM_SETTINGS, 256);
        let mut row = vec![0.0; 256];
        for (i, b) in design.iter().enumerate() {
            let dyn_b = DMatrix::from_fn(16, 16, |r, c| b[(r, c)]);
            hermitian_functional_row(&dyn_b, &mut row);
            for (k, v) in row.iter().enumerate() {
                real_design[(i, k)] = *v;
            }
        }
        let real_design_pinv = pinv(real_design.clone());

        let mut state_design = DMatrix::<f64>::zeros(NUM_PROJECTORS, 16);
        let mut srow = vec![0.0; 16];
        for (l, proj) in basis.projectors.iter().enumerate() {
            let p = DMatrix::from_fn(4, 4, |r, c| proj[(r, c)]);
            hermitian_functional_row(&p, &mut srow);
            for (k, v) in srow.iter().enumerate() {
                state_design[(l, k)] = *v;
            }
        }
        let state_design_pinv = pinv(state_design);

        let gram_inv = basis
            .gram()
            .try_inverse()
            .ok_or(TomographyError::SingularGram)?;
        Ok(Self {
            basis,
            design,
            real_design,
            real_design_pinv,
            state_design_pinv,
            gram_inv,
        })
    }

    /// Outcome probabilities for every (input, projector) setting.
    pub fn probabilities(&self, chi: &Mat16) -> Vec<f64> {
        self.design.iter().map(|b| trace_product(chi, b)).collect()
    }

    /// Coefficients of `x` in the (non-orthogonal) input basis.
    pub fn expand_in_inputs(&self, x: &Op4) -> [C64; 16] {
        let rhs =
            SMatrix::<C64, 16, 1>::from_fn(|k, _| (self.basis.inputs[k].adjoint() * x).trace());
        let c = self.gram_inv * rhs;
        std::array::from_fn(|k| c[k])
    }
}

/// `Tr[a b]` without forming the product.
pub fn trace_product(a: &Mat16, b: &Mat16) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..16 {
        for n in 0..16 {
            acc += a[(m, n)] * b[(n, m)];
        }
    }
    acc.re
}

/// Expected and (optionally) sampled coincidence counts for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    /// Row-major `[input][projector]`, 16 x 36.
    pub counts: Option<Vec<u64>>,
    pub expected: Vec<f64>,
    /// Counts per (input, measurement basis): `N = 2000 r`.
    pub total_per_basis: f64,
    pub signal_ratio: f64,
    pub seed: Option<u64>,
    pub phi: Option<ChannelParameter>,
}

impl CountTable {
    pub fn index(input: usize, projector: usize) -> usize {
        input * NUM_PROJECTORS + projector
    }

    pub fn count(&self, input: usize, projector: usize) -> Option<u64> {
        self.counts
            .as_ref()
            .map(|c| c[Self::index(input, projector)])
    }

    pub fn expected_at(&self, input: usize, projector: usize) -> f64 {
        self.expected[Self::index(input, projector)]
    }

    /// Poisson standard deviation `sqrt(nbar)` for each setting.
    pub fn sigma(&self) -> Vec<f64> {
        self.expected.iter().map(|e| e.sqrt()).collect()
    }

    /// Noiseless table: counts set to the expected values (not rounded).
    pub fn noiseless_frequencies(&self) -> Vec<f64> {
        self.expected
            .iter()
            .map(|e| e / self.total_per_basis)
            .collect()
    }

    /// Relative frequencies `counts / N`.
    pub fn frequencies(&self) -> Result<Vec<f64>, TomographyError> {
        let counts = self.counts.as_ref().ok_or(TomographyError::CountsUnset)?;
        if self.total_per_basis <= 0.0 {
            return Err(TomographyError::ZeroResources);
        }
        Ok(counts
            .iter()
            .map(|&c| c as f64 / self.total_per_basis)
            .collect())
    }

    pub fn observed(&self) -> Result<Vec<f64>, TomographyError> {
        let counts = self.counts.as_ref().ok_or(TomographyError::CountsUnset)?;
        Ok(counts.iter().map(|&c| c as f64).collect())
    }
}

/// Expected counts `N Tr[Pi_l E(rho_j)]` with `N = 2000 r`.
///
/// Theoretical process matrices must give probabilities in `[0, 1]`; for any
/// other label rounding-level negatives are clamped to zero.
pub fn expected_counts(chi: &ProcessMatrix, r: f64) -> Result<CountTable, TomographyError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(TomographyError::InvalidRatio(r));
    }
    let n = BASE_COUNTS * r;
    let probs = setup().probabilities(&chi.chi);
    let mut expected = Vec::with_capacity(NUM_SETTINGS);
    for (i, &p) in probs.iter().enumerate() {
        if !(-1e-8..=1.0 + 1e-8).contains(&p) {
            if chi.label == ChiLabel::Theoretical {
                return Err(TomographyError::NonPhysical {
                    p,
                    input: i / NUM_PROJECTORS,
                    projector: i % NUM_PROJECTORS,
                });
            }
            log::warn!("clamping non-physical probability {p} at setting {i}");
        }
        expected.push(n * p.max(0.0));
    }
    Ok(CountTable {
        counts: None,
        expected,
        total_per_basis: n,
        signal_ratio: r,
        seed: None,
        phi: chi.phi,
    })
}

/// Draw exact Poisson counts around the expected values.
pub fn sample_counts(table: &CountTable, seed: u64) -> CountTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = table
        .expected
        .iter()
        .map(|&mean| poisson_draw(mean, &mut rng))
        .collect();
    CountTable {
        counts: Some(counts),
        seed: Some(seed),
        ..table.clone()
    }
}

pub fn poisson_draw<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("finite positive Poisson mean");
    dist.sample(rng) as u64
}

/// Counts equal to the expected values rounded to the nearest integer.
pub fn noiseless_counts(table: &CountTable) -> CountTable {
    CountTable {
        counts: Some(table.expected.iter().map(|e| e.round() as u64).collect()),
        ..table.clone()
    }
}

/// Change-of-basis tensor `beta^{mn}_{jk}` and its pseudo-inverse `tau`.
///
/// Stored flattened: row `16 j + k`, column `16 m + n`.
#[derive(Debug, Clone)]
pub struct BetaTensor {
    pub beta: DMatrix<C64>,
    pub tau: DMatrix<C64>,
}

impl BetaTensor {
    pub fn beta(&self, m: usize, n: usize, j: usize, k: usize) -> C64 {
        self.beta[(16 * j + k, 16 * m + n)]
    }

    pub fn tau(&self, m: usize, n: usize, j: usize, k: usize) -> C64 {
        self.tau[(16 * m + n, 16 * j + k)]
    }
}

/// Expand every `A_m rho_j A_n^dagger` in the input basis.
pub fn beta_tensor(basis: &StateBasis) -> Result<BetaTensor, TomographyError> {
    let gram_inv = basis
        .gram()
        .try_inverse()
        .ok_or(TomographyError::SingularGram)?;
    let paulis = pauli();
    let mut beta = DMatrix::<C64>::zeros(256, 256);
    for (j, rho) in basis.inputs.iter().enumerate() {
        for m in 0..NUM_OPS {
            let left = paulis.op(m) * rho;
            for n in 0..NUM_OPS {
                let x = left * paulis.adjoint(n);
                let rhs =
                    SMatrix::<C64, 16, 1>::from_fn(|k, _| (basis.inputs[k].adjoint() * x).trace());
                let c = gram_inv * rhs;
                for k in 0..NUM_INPUTS {
                    beta[(16 * j + k, 16 * m + n)] = c[k];
                }
            }
        }
    }
    let tau = beta
        .clone()
        .pseudo_inverse(1e-12)
        .expect("SVD of a finite matrix");
    Ok(BetaTensor { beta, tau })
}

pub static BETA: LazyLock<BetaTensor> =
    LazyLock::new(|| beta_tensor(&setup().basis).expect("standard basis is complete"));

/// Output-state expansion coefficients `lambda_{jk}` estimated from counts:
/// per input, least-squares state tomography over the 36 projectors in the
/// Hermitian parameterization, then expansion in the input basis.
pub fn lambda_from_counts(
    table: &CountTable,
    basis: &StateBasis,
) -> Result<SMatrix<C64, 16, 16>, TomographyError> {
    let freqs = table.frequencies()?;
    lambda_from_frequencies(&freqs, basis)
}

pub fn lambda_from_frequencies(
    freqs: &[f64],
    basis: &StateBasis,
) -> Result<SMatrix<C64, 16, 16>, TomographyError> {
    let s = setup();
    let gram_inv = basis
        .gram()
        .try_inverse()
        .ok_or(TomographyError::SingularGram)?;
    let mut lambda = SMatrix::<C64, 16, 16>::zeros();
    for j in 0..NUM_INPUTS {
        let p = DVector::from_column_slice(&freqs[j * NUM_PROJECTORS..(j + 1) * NUM_PROJECTORS]);
        let h = &s.state_design_pinv * p;
        let out = hermitian_from_params(h.as_slice(), 4);
        let out = Op4::from_fn(|r, c| out[(r, c)]);
        let rhs = SMatrix::<C64, 16, 1>::from_fn(|k, _| (basis.inputs[k].adjoint() * out).trace());
        let c = gram_inv * rhs;
        for k in 0..NUM_INPUTS {
            lambda[(j, k)] = c[k];
        }
    }
    Ok(lambda)
}

/// `chi_mn = sum_jk tau^{mn}_{jk} lambda_{jk}`, symmetrized to be Hermitian.
pub fn chi_from_lambda(lambda: &SMatrix<C64, 16, 16>, beta: &BetaTensor) -> ProcessMatrix {
    let flat = DVector::<C64>::from_fn(256, |i, _| lambda[(i / 16, i % 16)]);
    let v = &beta.tau * flat;
    let chi = Mat16::from_fn(|m, n| v[16 * m + n]);
    ProcessMatrix::new(hermitize(&chi), ChiLabel::Noisy)
}

/// Result of the direct least-squares inversion.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub chi: ProcessMatrix,
    /// True when the table carries no signal (all counts zero); `chi` is then
    /// the least-norm solution, the zero matrix.
    pub degenerate: bool,
}

/// Least-squares chi from relative frequencies over all 576 settings in the
/// Hermitian parameterization.
pub fn chi_from_frequencies(freqs: &[f64]) -> Mat16 {
    let p = DVector::from_column_slice(freqs);
    let h = &setup().real_design_pinv * p;
    let chi = hermitian_from_params(h.as_slice(), 16);
    Mat16::from_fn(|r, c| chi[(r, c)])
}

pub fn chi_least_squares(table: &CountTable) -> Result<LinearFit, TomographyError> {
    let freqs = table.frequencies()?;
    let degenerate = freqs.iter().all(|&f| f == 0.0);
    let mut chi = ProcessMatrix::new(chi_from_frequencies(&freqs), ChiLabel::Noisy);
    chi.phi = table.phi;
    chi.signal_ratio = Some(table.signal_ratio);
    Ok(LinearFit { chi, degenerate })
}

/// Dataset split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Train/val/test sizes for a stratum of `n` records: rounded 75% and 10%,
/// remainder to test.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = ((n as f64) * 0.75).round() as usize;
    let val = (((n as f64) * 0.10).round() as usize).min(n - train);
    (train, val, n - train - val)
}

#[derive(Debug, Clone)]
pub struct Record {
    pub phi: ChannelParameter,
    pub signal_ratio: f64,
    pub instance: usize,
    pub split: Split,
    pub noisy: ProcessMatrix,
    pub target: ProcessMatrix,
}

/// Global min/max used to map components into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: f64,
    pub max: f64,
}

impl NormStats {
    pub fn new(min: f64, max: f64) -> Result<Self, TomographyError> {
        if !(min < max) {
            return Err(TomographyError::DegenerateRange(min));
        }
        Ok(Self { min, max })
    }

    /// `(x - m) / (M - m)`
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    /// `m + y (M - m)`
    pub fn rescale(&self, y: f64) -> f64 {
        self.min + y * (self.max - self.min)
    }

    pub fn normalize_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.normalize(x)).collect()
    }

    pub fn rescale_all(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.rescale(y)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct DatasetParams {
    pub phis: Vec<ChannelParameter>,
    pub instances: usize,
    pub ratios: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub params: DatasetParams,
    pub records: Vec<Record>,
    pub stats: Option<NormStats>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_count(&self, split: Split) -> usize {
        self.split(split).count()
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-record seed: SplitMix64 over the master seed and the record's
/// (phi index, ratio index, instance) counter. Stable across versions.
pub fn record_seed(master: u64, phi_idx: usize, ratio_idx: usize, instance: usize) -> u64 {
    let counter = ((phi_idx as u64) << 48) | ((ratio_idx as u64) << 40) | instance as u64;
    splitmix64(splitmix64(master) ^ counter)
}

/// Simulate one noisy tomography record.
pub fn simulate_record(
    phi: ChannelParameter,
    r: f64,
    seed: u64,
) -> Result<(CountTable, ProcessMatrix), TomographyError> {
    let theory = ideal_chi(phi);
    let table = sample_counts(&expected_counts(&theory, r)?, seed);
    let fit = chi_least_squares(&table)?;
    Ok((table, fit.chi))
}

/// Generate the noisy/theoretical record set with stratified splits.
pub fn generate_dataset(params: &DatasetParams) -> Result<Dataset, TomographyError> {
    if params.phis.is_empty() || params.ratios.is_empty() {
        return Err(TomographyError::InvalidRequest(
            "phi grid and ratio list must be non-empty".into(),
        ));
    }
    if params.instances == 0 {
        return Err(TomographyError::InvalidRequest(
            "instances must be at least 1".into(),
        ));
    }
    let (n_train, n_val, _) = split_sizes(params.instances);
    let jobs: Vec<(usize, usize, usize)> = (0..params.phis.len())
        .flat_map(|p| {
            (0..params.ratios.len())
                .flat_map(move |r| (0..params.instances).map(move |i| (p, r, i)))
        })
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(pi, ri, inst)| {
            let phi = params.phis[pi];
            let r = params.ratios[ri];
            let (_, noisy) = simulate_record(phi, r, record_seed(params.seed, pi, ri, inst))?;
            let split = if inst < n_train {
                Split::Train
            } else if inst < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            Ok(Record {
                phi,
                signal_ratio: r,
                instance: inst,
                split,
                noisy,
                target: ideal_chi(phi).with_signal_ratio(r),
            })
        })
        .collect::<Result<Vec<_>, TomographyError>>()?;
    Ok(Dataset {
        params: params.clone(),
        records,
        stats: None,
    })
}

/// Dataset with every component mapped into `[0, 1]`.
#[derive(Debug, Clone)]
pub struct NormalizedDataset {
    pub stats: NormStats,
    /// Image views (16x16x2, 512 values) per record, same order as the records.
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

/// Min/max over all real and imaginary parts of the training inputs.
pub fn train_stats(dataset: &Dataset) -> Result<NormStats, TomographyError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for rec in dataset.split(Split::Train) {
        any = true;
        for z in rec.noisy.chi.iter() {
            lo = lo.min(z.re).min(z.im);
            hi = hi.max(z.re).max(z.im);
        }
    }
    if !any {
        return Err(TomographyError::EmptyDataset);
    }
    NormStats::new(lo, hi)
}

/// Compute the training-split statistics, store them on the dataset and map
/// inputs and targets with them.
pub fn normalize(dataset: &mut Dataset) -> Result<NormalizedDataset, TomographyError> {
    if dataset.records.is_empty() {
        return Err(TomographyError::EmptyDataset);
    }
    let stats = train_stats(dataset)?;
    dataset.stats = Some(stats);
    Ok(normalize_with(dataset, stats))
}

pub fn normalize_with(dataset: &Dataset, stats: NormStats) -> NormalizedDataset {
    let inputs = dataset
        .records
        .iter()
        .map(|r| stats.normalize_all(&r.noisy.to_image()))
        .collect();
    let targets = dataset
        .records
        .iter()
        .map(|r| stats.normalize_all(&r.target.to_image()))
        .collect();
    NormalizedDataset {
        stats,
        inputs,
        targets,
    }
}

/// Inverse of the normalization for one image.
pub fn rescale(values: &[f64], stats: &NormStats) -> Vec<f64> {
    stats.rescale_all(values)
}
