//! Convolutional denoising autoencoder on the 16x16x2 image view of a
//! process matrix, and the kernel-size sweep.

use std::path::{Path, PathBuf};

use log::info;
use qpdn_core::process_fidelity;
use qpdn_core::quantum::{hermitize, ChiLabel, ProcessMatrix};
use qpdn_core::reporting::{diff_heatmap, write_heatmap};
use qpdn_core::tomography::{train_stats, Dataset, NormStats, Split};
use qpdn_nn::{AdamConfig, LayerSpec, ModelFile, Network, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::training::{eval_mse, fit, LoopConfig, TrainLog, EVAL_BATCH};
use crate::DenoiseError;

pub const IMAGE_SHAPE: [usize; 3] = [16, 16, 2];
pub const MODEL_KIND: &str = "autoencoder";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSpec {
    pub k: usize,
    /// Encoder filter counts; the decoder mirrors them and ends in 2 channels.
    pub filters: Vec<usize>,
    pub stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AutoencoderSpec {
    fn default() -> Self {
        Self {
            k: 3,
            filters: vec![128, 64, 32],
            stride: 2,
            epochs: 200,
            batch_size: 64,
            patience: 20,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl AutoencoderSpec {
    pub fn validate(&self) -> Result<(), DenoiseError> {
        let bad = |m: &str| Err(DenoiseError::InvalidSpec(m.to_string()));
        if !(1..=7).contains(&self.k) {
            return bad("kernel size must be in 1..=7");
        }
        if self.filters.is_empty() || self.filters.contains(&0) {
            return bad("filters must be non-empty and positive");
        }
        if !(1..=2).contains(&self.stride) {
            return bad("stride must be 1 or 2");
        }
        let scale = self.stride.pow(self.filters.len() as u32);
        if 16 % scale != 0 {
            return bad("16x16 input must divide evenly through the encoder");
        }
        if self.batch_size < 2 {
            return bad("batch size must be at least 2");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    /// Layer stack: [conv + ReLU + BN] per encoder filter, the mirrored
    /// [tconv + ReLU + BN] decoder, and a final 2-channel tconv + sigmoid.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let (k, stride) = (self.k, self.stride);
        let mut specs = Vec::new();
        let mut cin = IMAGE_SHAPE[2];
        for &cout in &self.filters {
            specs.extend([
                LayerSpec::Conv {
                    k,
                    stride,
                    cin,
                    cout,
                },
                LayerSpec::Relu,
                LayerSpec::Batchnorm { channels: cout },
            ]);
            cin = cout;
        }
        for &cout in self.filters.iter().rev().skip(1) {
            specs.extend([
                LayerSpec::Tconv {
                    k,
                    stride,
                    cin,
                    cout,
                },
                LayerSpec::Relu,
                LayerSpec::Batchnorm { channels: cout },
            ]);
            cin = cout;
        }
        specs.push(LayerSpec::Tconv {
            k,
            stride,
            cin,
            cout: IMAGE_SHAPE[2],
        });
        specs.push(LayerSpec::Sigmoid);
        specs
    }

    pub fn build(&self) -> Result<Network, DenoiseError> {
        self.validate()?;
        Ok(Network::sequential(&self.layers(), self.seed))
    }
}

/// A trained autoencoder together with the normalization it was trained
/// under.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub spec: AutoencoderSpec,
    pub stats: NormStats,
    pub network: Network,
    pub log: Option<TrainLog>,
}

fn images<'a>(
    records: impl Iterator<Item = &'a ProcessMatrix>,
    stats: &NormStats,
) -> Vec<Vec<f64>> {
    records
        .map(|m| stats.normalize_all(&m.to_image()))
        .collect()
}

impl Autoencoder {
    /// Train on the dataset's train split, early-stopping on its validation
    /// split. Uses the dataset's normalization statistics, computing them
    /// from the train split if absent.
    pub fn train(spec: &AutoencoderSpec, dataset: &Dataset) -> Result<Self, DenoiseError> {
        let mut network = spec.build()?;
        let stats = match dataset.stats {
            Some(s) => s,
            None => train_stats(dataset)?,
        };
        let train: Vec<_> = dataset.split(Split::Train).collect();
        let val: Vec<_> = dataset.split(Split::Val).collect();
        if train.len() < 2 {
            return Err(DenoiseError::EmptySplit("train"));
        }
        if val.is_empty() {
            return Err(DenoiseError::EmptySplit("val"));
        }
        let tx = images(train.iter().map(|r| &r.noisy), &stats);
        let ty = images(train.iter().map(|r| &r.target), &stats);
        let vx = images(val.iter().map(|r| &r.noisy), &stats);
        let vy = images(val.iter().map(|r| &r.target), &stats);
        let vx_refs: Vec<&[f64]> = vx.iter().map(Vec::as_slice).collect();
        let vy_refs: Vec<Vec<&[f64]>> = vy.iter().map(|v| vec![v.as_slice()]).collect();
        let cfg = LoopConfig {
            epochs: spec.epochs,
            batch_size: spec.batch_size,
            patience: spec.patience,
            seed: spec.seed,
            adam: AdamConfig {
                lr: spec.learning_rate,
                ..AdamConfig::default()
            },
            label: "autoencoder",
        };
        let log = fit(
            &mut network,
            &cfg,
            tx.len(),
            |idx| {
                let xs: Vec<&[f64]> = idx.iter().map(|&i| tx[i].as_slice()).collect();
                let ys: Vec<&[f64]> = idx.iter().map(|&i| ty[i].as_slice()).collect();
                Ok((
                    Tensor::stack(&xs, &IMAGE_SHAPE)?,
                    vec![Tensor::stack(&ys, &IMAGE_SHAPE)?],
                ))
            },
            |net| eval_mse(net, &vx_refs, &vy_refs, &IMAGE_SHAPE),
        )?;
        Ok(Self {
            spec: spec.clone(),
            stats,
            network,
            log: Some(log),
        })
    }

    /// Normalize, run the network in inference mode, rescale and
    /// Hermitian-symmetrize. Provenance tags are carried over.
    pub fn denoise_batch(
        &mut self,
        inputs: &[&ProcessMatrix],
    ) -> Result<Vec<ProcessMatrix>, DenoiseError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(EVAL_BATCH) {
            let xs = images(chunk.iter().copied(), &self.stats);
            let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let y = self.network.predict(&Tensor::stack(&refs, &IMAGE_SHAPE)?)?;
            for (i, src) in chunk.iter().enumerate() {
                let img = self.stats.rescale_all(y[0].sample(i));
                let raw = ProcessMatrix::from_image(&img, ChiLabel::Denoised);
                out.push(ProcessMatrix {
                    chi: hermitize(&raw.chi),
                    phi: src.phi,
                    signal_ratio: src.signal_ratio,
                    label: ChiLabel::Denoised,
                });
            }
        }
        Ok(out)
    }

    pub fn denoise(&mut self, chi: &ProcessMatrix) -> Result<ProcessMatrix, DenoiseError> {
        Ok(self.denoise_batch(&[chi])?.remove(0))
    }

    /// Mean MSE (normalized units) of the model on a dataset split.
    pub fn split_mse(&mut self, dataset: &Dataset, split: Split) -> Result<f64, DenoiseError> {
        let recs: Vec<_> = dataset.split(split).collect();
        if recs.is_empty() {
            return Err(DenoiseError::EmptySplit(split.name()));
        }
        let x = images(recs.iter().map(|r| &r.noisy), &self.stats);
        let y = images(recs.iter().map(|r| &r.target), &self.stats);
        let xr: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let yr: Vec<Vec<&[f64]>> = y.iter().map(|v| vec![v.as_slice()]).collect();
        Ok(eval_mse(&mut self.network, &xr, &yr, &IMAGE_SHAPE)?)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let meta = serde_json::json!({
            "kind": MODEL_KIND,
            "spec": self.spec,
            "normalization": {"m": self.stats.min, "M": self.stats.max},
            "seed": self.spec.seed,
            "training": self.log.as_ref().map(TrainLog::summary),
        });
        ModelFile::from_network(&self.network, meta)
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self, DenoiseError> {
        let meta = &file.metadata;
        if meta["kind"] != MODEL_KIND {
            return Err(DenoiseError::Model(format!(
                "expected an {MODEL_KIND} model, found kind {}",
                meta["kind"]
            )));
        }
        let spec: AutoencoderSpec = serde_json::from_value(meta["spec"].clone())
            .map_err(|e| DenoiseError::Model(format!("spec: {e}")))?;
        let norm = &meta["normalization"];
        let (m, big_m) = (norm["m"].as_f64(), norm["M"].as_f64());
        let stats = match (m, big_m) {
            (Some(m), Some(big_m)) => NormStats::new(m, big_m)?,
            _ => {
                return Err(DenoiseError::Model(
                    "normalization statistics missing".into(),
                ))
            }
        };
        let network = file.to_network()?;
        if network.trunk.specs() != spec.layers() {
            return Err(DenoiseError::Model(
                "layers do not match the stored spec".into(),
            ));
        }
        Ok(Self {
            spec,
            stats,
            network,
            log: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DenoiseError> {
        std::fs::write(path, self.to_model_file().to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DenoiseError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_model_file(&ModelFile::from_json(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub k: usize,
    pub val_mse: f64,
    pub test_fidelity_mean: f64,
    pub best_epoch: usize,
    pub param_count: usize,
    /// max |theory - denoised| over the reference record.
    pub heatmap_max_abs: f64,
    pub heatmaps: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub best_k: usize,
    /// max |noisy - theory| over the reference record.
    pub noisy_heatmap_max_abs: f64,
    pub noisy_heatmaps: Vec<PathBuf>,
    /// Reference record used for the heatmaps: (phi radians, r, instance).
    pub reference: (f64, f64, usize),
}

/// Smallest validation MSE wins; ties go to the smaller kernel.
pub fn select_best_k(entries: &[SweepEntry]) -> Option<usize> {
    entries
        .iter()
        .min_by(|a, b| a.val_mse.total_cmp(&b.val_mse).then(a.k.cmp(&b.k)))
        .map(|e| e.k)
}

/// Mean fidelity between denoised and theoretical matrices on a split.
pub fn mean_test_fidelity(
    model: &mut Autoencoder,
    dataset: &Dataset,
    split: Split,
) -> Result<f64, DenoiseError> {
    let recs: Vec<_> = dataset.split(split).collect();
    if recs.is_empty() {
        return Err(DenoiseError::EmptySplit(split.name()));
    }
    let noisy: Vec<&ProcessMatrix> = recs.iter().map(|r| &r.noisy).collect();
    let den = model.denoise_batch(&noisy)?;
    let fids = den
        .par_iter()
        .zip(recs.par_iter())
        .map(|(d, r)| process_fidelity(d, &r.target))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(fids.iter().sum::<f64>() / fids.len() as f64)
}

/// Train one autoencoder per kernel size on identical data and seeds, and
/// select the kernel with the smallest validation MSE. Difference heatmaps
/// (theory minus denoised, per kernel) for a fixed test record are written
/// under `out_dir` when given.
pub fn kernel_sweep(
    base: &AutoencoderSpec,
    dataset: &Dataset,
    ks: &[usize],
    out_dir: Option<&Path>,
) -> Result<SweepReport, DenoiseError> {
    if ks.is_empty() {
        return Err(DenoiseError::InvalidSpec("empty kernel range".into()));
    }
    // reference record: first test record at the lowest signal ratio
    let reference = dataset
        .split(Split::Test)
        .min_by(|a, b| a.signal_ratio.total_cmp(&b.signal_ratio))
        .ok_or(DenoiseError::EmptySplit("test"))?;
    let noisy_map = diff_heatmap(&reference.noisy, &reference.target);
    let noisy_heatmaps = match out_dir {
        Some(dir) => write_heatmap(&noisy_map, dir, "noisy_minus_theory")?,
        None => Vec::new(),
    };
    // keep the normalization identical across kernels
    let mut ds = dataset.clone();
    if ds.stats.is_none() {
        ds.stats = Some(train_stats(&ds)?);
    }

    let mut entries = ks
        .par_iter()
        .map(|&k| -> Result<SweepEntry, DenoiseError> {
            let spec = AutoencoderSpec { k, ..base.clone() };
            info!("sweep: training k={k}");
            let mut model = Autoencoder::train(&spec, &ds)?;
            let log = model.log.clone().expect("fresh model has a log");
            let fid = mean_test_fidelity(&mut model, &ds, Split::Test)?;
            let den = model.denoise(&reference.noisy)?;
            let map = diff_heatmap(&reference.target, &den);
            let heatmaps = match out_dir {
                Some(dir) => write_heatmap(&map, dir, &format!("k{k}_theory_minus_denoised"))?,
                None => Vec::new(),
            };
            Ok(SweepEntry {
                k,
                val_mse: log.best_val_mse,
                test_fidelity_mean: fid,
                best_epoch: log.best_epoch,
                param_count: model.network.param_count(),
                heatmap_max_abs: map.max_abs(),
                heatmaps,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    entries.sort_by_key(|e| e.k);
    let best_k = select_best_k(&entries).expect("non-empty sweep");
    Ok(SweepReport {
        entries,
        best_k,
        noisy_heatmap_max_abs: noisy_map.max_abs(),
        noisy_heatmaps,
        reference: (
            reference.phi.radians(),
            reference.signal_ratio,
            reference.instance,
        ),
    })
}
