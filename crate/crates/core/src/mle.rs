//! Maximum-likelihood process reconstruction.
//!
//! The process matrix is parameterized as `chi(t) = T^dagger T / Tr[T^dagger T]`
//! with `T` upper triangular (16 real diagonal entries, then the strictly
//! upper entries row by row as re/im pairs, 256 reals in total), which keeps
//! every iterate Hermitian, positive semidefinite and of unit trace. Counts are
//! scored with a Gaussian likelihood whose variance follows the model
//! prediction, floored at `sigma_floor`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::{hermitian_eigen, psd_project, ChiLabel, Mat16, ProcessMatrix, C64};
use crate::tomography::{chi_least_squares, setup, CountTable, TomographyError};

pub const NUM_PARAMS: usize = 256;
const D: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MleError {
    #[error("parameter vector must hold {NUM_PARAMS} values, got {0}")]
    Length(usize),
    #[error("T(t) has zero norm")]
    ZeroNorm,
    #[error(transparent)]
    Tomography(#[from] TomographyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    pub sigma_floor: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            sigma_floor: 1.0,
        }
    }
}

/// Real parameters of the triangular factor.
#[derive(Debug, Clone, PartialEq)]
pub struct TParameterization {
    pub t: Vec<f64>,
}

impl TParameterization {
    pub fn new(t: Vec<f64>) -> Result<Self, MleError> {
        if t.len() != NUM_PARAMS {
            return Err(MleError::Length(t.len()));
        }
        Ok(Self { t })
    }

    /// The upper-triangular factor `T(t)`.
    pub fn factor(&self) -> Mat16 {
        let mut m = Mat16::zeros();
        for k in 0..D {
            m[(k, k)] = C64::from(self.t[k]);
        }
        let mut idx = D;
        for a in 0..D {
            for b in a + 1..D {
                m[(a, b)] = C64::new(self.t[idx], self.t[idx + 1]);
                idx += 2;
            }
        }
        m
    }

    fn from_factor(m: &Mat16) -> Self {
        let mut t = vec![0.0; NUM_PARAMS];
        for k in 0..D {
            t[k] = m[(k, k)].re;
        }
        let mut idx = D;
        for a in 0..D {
            for b in a + 1..D {
                t[idx] = m[(a, b)].re;
                t[idx + 1] = m[(a, b)].im;
                idx += 2;
            }
        }
        Self { t }
    }
}

/// `T^dagger T / Tr[T^dagger T]`.
pub fn t_to_chi(t: &TParameterization) -> Result<ProcessMatrix, MleError> {
    let f = t.factor();
    let s = f.adjoint() * f;
    let tr = s.trace().re;
    if !(tr > 1e-300) {
        return Err(MleError::ZeroNorm);
    }
    let chi = crate::quantum::hermitize(&s) / C64::from(tr);
    Ok(ProcessMatrix::new(chi, ChiLabel::Mle))
}

const INIT_RIDGE: f64 = 1e-10;

/// Starting point for the fit: PSD projection, unit trace, a small ridge and
/// a Cholesky factorization `chi = L L^dagger`, `T = L^dagger`.
pub fn chi_to_t_init(chi: &ProcessMatrix) -> TParameterization {
    let base = match psd_project(chi) {
        Ok(p) if p.chi.trace().re > 0.0 => p.chi / p.chi.trace(),
        _ => Mat16::identity() / C64::from(D as f64),
    };
    let ridged = crate::quantum::hermitize(&base) + Mat16::identity() * C64::from(INIT_RIDGE);
    let l = ridged
        .cholesky()
        .expect("ridge makes the matrix positive definite")
        .l();
    TParameterization::from_factor(&l.adjoint())
}

/// Observed counts together with the per-basis resource `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub counts: Vec<f64>,
    pub total_per_basis: f64,
}

impl Observations {
    pub fn from_table(table: &CountTable) -> Result<Self, MleError> {
        Ok(Self {
            counts: table.observed()?,
            total_per_basis: table.total_per_basis,
        })
    }

    /// Noiseless observations: the expected values themselves.
    pub fn noiseless(table: &CountTable) -> Self {
        Self {
            counts: table.expected.clone(),
            total_per_basis: table.total_per_basis,
        }
    }
}

/// Negative log-likelihood and its gradient with respect to `t`.
pub fn neg_log_likelihood(
    t: &TParameterization,
    obs: &Observations,
    sigma_floor: f64,
) -> Result<(f64, Vec<f64>), MleError> {
    let setup = setup();
    let factor = t.factor();
    let s = factor.adjoint() * factor;
    let tr = s.trace().re;
    if !(tr > 1e-300) {
        return Err(MleError::ZeroNorm);
    }
    let chi = s / C64::from(tr);
    let h = hermitian_params(&chi);
    let probs = &setup.real_design * h;
    let n = obs.total_per_basis;

    let mut value = 0.0;
    let mut dprob = nalgebra::DVector::<f64>::zeros(probs.len());
    for (i, (&p, &observed)) in probs.iter().zip(&obs.counts).enumerate() {
        let mean = n * p;
        let resid = observed - mean;
        let (term, dmean) = if mean > sigma_floor {
            let v = resid * resid / (2.0 * mean);
            (v, -resid / mean - resid * resid / (2.0 * mean * mean))
        } else {
            (resid * resid / (2.0 * sigma_floor), -resid / sigma_floor)
        };
        value += term;
        dprob[i] = n * dmean;
    }
    // d value / d h, then back to a Hermitian G with d value = Tr[G d chi]
    let q = setup.real_design.tr_mul(&dprob);
    let g = hermitian_from_functional(q.as_slice());
    let c = crate::tomography::trace_product(&g, &chi);
    let hmat = (g - Mat16::identity() * C64::from(c)) / C64::from(tr);
    let th = factor * hmat;

    let mut grad = vec![0.0; NUM_PARAMS];
    for k in 0..D {
        grad[k] = 2.0 * th[(k, k)].re;
    }
    let mut idx = D;
    for a in 0..D {
        for b in a + 1..D {
            grad[idx] = 2.0 * th[(a, b)].re;
            grad[idx + 1] = 2.0 * th[(a, b)].im;
            idx += 2;
        }
    }
    Ok((value, grad))
}

fn hermitian_params(chi: &Mat16) -> nalgebra::DVector<f64> {
    let mut h = nalgebra::DVector::<f64>::zeros(NUM_PARAMS);
    for k in 0..D {
        h[k] = chi[(k, k)].re;
    }
    let mut idx = D;
    for a in 0..D {
        for b in a + 1..D {
            h[idx] = chi[(a, b)].re;
            h[idx + 1] = chi[(a, b)].im;
            idx += 2;
        }
    }
    h
}

/// Hermitian `G` with `Tr[G E_k] = q_k` for the Hermitian parameter basis.
fn hermitian_from_functional(q: &[f64]) -> Mat16 {
    let mut g = Mat16::zeros();
    for k in 0..D {
        g[(k, k)] = C64::from(q[k]);
    }
    let mut idx = D;
    for a in 0..D {
        for b in a + 1..D {
            let z = C64::new(q[idx] / 2.0, q[idx + 1] / 2.0);
            g[(a, b)] = z;
            g[(b, a)] = z.conj();
            idx += 2;
        }
    }
    g
}

#[derive(Debug, Clone, Serialize)]
pub struct MleReport {
    #[serde(skip)]
    pub chi_hat: ProcessMatrix,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Eigenvalues of the estimate below 1e-6.
    pub near_zero_eigenvalues: usize,
}

/// Fit the count table, starting from the least-squares linear inversion.
pub fn mle_fit(table: &CountTable, config: &MleConfig) -> Result<MleReport, MleError> {
    let linear = chi_least_squares(table)?;
    let obs = Observations::from_table(table)?;
    let mut report = mle_fit_observations(&obs, &chi_to_t_init(&linear.chi), config)?;
    report.chi_hat.phi = table.phi;
    report.chi_hat.signal_ratio = Some(table.signal_ratio);
    Ok(report)
}

/// Noiseless variant of [`mle_fit`] using the expected counts as data.
pub fn mle_fit_noiseless(table: &CountTable, config: &MleConfig) -> Result<MleReport, MleError> {
    let freqs = table.noiseless_frequencies();
    let start = ProcessMatrix::new(
        crate::tomography::chi_from_frequencies(&freqs),
        ChiLabel::Noisy,
    );
    let mut report = mle_fit_observations(
        &Observations::noiseless(table),
        &chi_to_t_init(&start),
        config,
    )?;
    report.chi_hat.phi = table.phi;
    report.chi_hat.signal_ratio = Some(table.signal_ratio);
    Ok(report)
}

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const REL_WINDOW: usize = 10;

/// Limited-memory BFGS with backtracking (Armijo) line search.
pub fn mle_fit_observations(
    obs: &Observations,
    start: &TParameterization,
    config: &MleConfig,
) -> Result<MleReport, MleError> {
    let objective = |t: &TParameterization| neg_log_likelihood(t, obs, config.sigma_floor);
    let mut x = start.clone();
    let (mut f, mut g) = objective(&x)?;
    let initial = f;
    let mut history: Vec<f64> = vec![f];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut converged = norm(&g) <= config.grad_tol;

    while !converged && iterations < config.max_iters {
        iterations += 1;
        let mut dir = two_loop(&g, &s_hist, &y_hist);
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            // not a descent direction: reset memory and fall back to steepest descent
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if s_hist.is_empty() {
            (1.0 / norm(&g).max(1e-300)).min(1.0) * norm(&x.t).max(1e-3) * 1e-2
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = TParameterization {
                t: x.t.iter().zip(&dir).map(|(a, d)| a + step * d).collect(),
            };
            if let Ok((ft, gt)) = objective(&trial) {
                if ft.is_finite() && ft <= f + ARMIJO_C1 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, fnext, gnext)) = accepted else {
            // line search stalled; the current point is as good as it gets
            break;
        };
        let s: Vec<f64> = next.t.iter().zip(&x.t).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnext.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * norm(&s) * norm(&y) {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > LBFGS_MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        x = next;
        f = fnext;
        g = gnext;
        // keep |T| near 1; chi is invariant under rescaling of t
        let scale = norm(&x.t);
        if scale > 0.0 && !(0.5..2.0).contains(&scale) {
            x.t.iter_mut().for_each(|v| *v /= scale);
            g.iter_mut().for_each(|v| *v *= scale);
            s_hist.clear();
            y_hist.clear();
        }
        history.push(f);
        if norm(&g) <= config.grad_tol {
            converged = true;
        } else if history.len() > REL_WINDOW {
            let old = history[history.len() - 1 - REL_WINDOW];
            if (old - f).abs() <= config.rel_tol * f.abs().max(1e-300) {
                converged = true;
            }
        }
    }

    let chi_hat = t_to_chi(&x)?;
    let (vals, _) = hermitian_eigen(&chi_hat.chi);
    let near_zero = vals.iter().filter(|&&v| v < 1e-6).count();
    log::debug!(
        "mle: {iterations} iterations, objective {initial:.6} -> {f:.6}, {near_zero} near-zero eigenvalues"
    );
    Ok(MleReport {
        chi_hat,
        initial_objective: initial,
        final_objective: f,
        iterations,
        converged,
        grad_norm: norm(&g),
        near_zero_eigenvalues: near_zero,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let k = s_hist.len();
    let mut alpha = vec![0.0; k];
    for i in (0..k).rev() {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        alpha[i] = rho * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if k > 0 {
        let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for i in 0..k {
        let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
        let beta = rho * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q.iter().map(|v| -v).collect()
}
