//! Mini-batch training loop with validation early stopping, shared by the
//! autoencoder and the extractor.

use log::{debug, info};
use qpdn_nn::{Adam, AdamConfig, Network, NnError, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::DenoiseError;

/// Samples per forward pass when evaluating without gradients.
pub(crate) const EVAL_BATCH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn first_val_mse(&self) -> f64 {
        self.epochs.first().map_or(f64::NAN, |e| e.val_mse)
    }

    /// Compact form stored in model files.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "epochs_run": self.epochs.len(),
            "best_epoch": self.best_epoch,
            "best_val_mse": self.best_val_mse,
            "first_val_mse": self.first_val_mse(),
            "final_train_mse": self.epochs.last().map(|e| e.train_mse),
            "stopped_early": self.stopped_early,
        })
    }
}

pub(crate) struct LoopConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub label: &'static str,
}

/// Summed-over-outputs MSE on a fixed set, evaluated in inference mode in
/// fixed-size chunks. `inputs` are flat samples of `sample_shape`.
pub(crate) fn eval_mse(
    net: &mut Network,
    inputs: &[&[f64]],
    targets: &[Vec<&[f64]>],
    sample_shape: &[usize],
) -> Result<f64, NnError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for start in (0..inputs.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(inputs.len());
        let x = Tensor::stack(&inputs[start..end], sample_shape)?;
        let preds = net.predict(&x)?;
        for (out, p) in preds.iter().enumerate() {
            let per = p.sample_len();
            for (i, row) in (start..end).enumerate() {
                let t = targets[row][out];
                let pred = &p.data()[i * per..(i + 1) * per];
                total += pred
                    .iter()
                    .zip(t)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / per as f64;
            }
        }
        count += end - start;
    }
    Ok(total / count as f64)
}

/// Train `net` in place, leaving it at the best-validation checkpoint.
///
/// `make_batch` assembles a training batch from train-set indices; `val`
/// returns the validation loss of the current weights.
pub(crate) fn fit(
    net: &mut Network,
    cfg: &LoopConfig,
    n_train: usize,
    mut make_batch: impl FnMut(&[usize]) -> Result<(Tensor, Vec<Tensor>), NnError>,
    mut val: impl FnMut(&mut Network) -> Result<f64, NnError>,
) -> Result<TrainLog, DenoiseError> {
    if cfg.epochs == 0 || cfg.batch_size < 2 {
        return Err(DenoiseError::InvalidSpec(
            "need at least one epoch and batch size >= 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.adam);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut best = net.clone();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_mse: f64::INFINITY,
        stopped_early: false,
    };
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        let diverged = |source| DenoiseError::Divergence { epoch, source };
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            // batch normalization cannot train on a single sample
            if chunk.len() < 2 {
                continue;
            }
            let (x, y) = make_batch(chunk)?;
            let loss = net.train_step(&mut opt, &x, &y).map_err(diverged)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_mse = loss_sum / seen.max(1) as f64;
        let val_mse = val(net)?;
        if !val_mse.is_finite() {
            return Err(diverged(NnError::NonFinite("validation loss")));
        }
        log.epochs.push(EpochLog {
            epoch,
            train_mse,
            val_mse,
        });
        debug!(
            "{} epoch {epoch}: train {train_mse:.3e} val {val_mse:.3e}",
            cfg.label
        );
        if val_mse < log.best_val_mse {
            log.best_val_mse = val_mse;
            log.best_epoch = epoch;
            best = net.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    info!(
        "{}: best epoch {} of {} (val mse {:.3e})",
        cfg.label,
        log.best_epoch,
        log.epochs.len(),
        log.best_val_mse
    );
    *net = best;
    Ok(log)
}
