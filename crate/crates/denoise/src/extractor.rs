//! Forked feed-forward regressor from a process matrix to the channel
//! parameter(s), and the residue evaluation against the ±7 degree gate.

use std::fmt::Write as _;
use std::path::Path;

use qpdn_core::chi_io::fmt_f64;
use qpdn_core::quantum::{phi_grid, ProcessMatrix};
use qpdn_core::tomography::{Dataset, NormStats, Split};
use qpdn_nn::{AdamConfig, LayerSpec, ModelFile, Network, Tensor};
use serde::{Deserialize, Serialize};

use crate::autoencoder::Autoencoder;
use crate::training::{eval_mse, fit, LoopConfig, TrainLog, EVAL_BATCH};
use crate::DenoiseError;

pub const INPUT_WIDTH: usize = 512;
pub const RESIDUE_GATE_DEG: f64 = 7.0;
pub const MODEL_KIND: &str = "extractor";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FfnnSpec {
    pub trunk: Vec<usize>,
    /// Hidden widths of each fork; every fork ends in one linear output.
    pub head: Vec<usize>,
    pub forks: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FfnnSpec {
    fn default() -> Self {
        Self {
            trunk: vec![256, 128],
            head: vec![64],
            forks: 1,
            epochs: 200,
            batch_size: 64,
            patience: 20,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

fn dense_relu(widths: &[usize], mut inputs: usize) -> (Vec<LayerSpec>, usize) {
    let mut specs = Vec::new();
    for &w in widths {
        specs.push(LayerSpec::Dense { inputs, outputs: w });
        specs.push(LayerSpec::Relu);
        inputs = w;
    }
    (specs, inputs)
}

impl FfnnSpec {
    pub fn validate(&self) -> Result<(), DenoiseError> {
        let bad = |m: &str| Err(DenoiseError::InvalidSpec(m.to_string()));
        if self.forks == 0 {
            return bad("fork count must be at least 1");
        }
        if self.trunk.contains(&0) || self.head.contains(&0) {
            return bad("layer widths must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch size must be at least 2");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    pub fn trunk_layers(&self) -> Vec<LayerSpec> {
        dense_relu(&self.trunk, INPUT_WIDTH).0
    }

    pub fn head_layers(&self) -> Vec<LayerSpec> {
        let inputs = self.trunk.last().copied().unwrap_or(INPUT_WIDTH);
        let (mut specs, last) = dense_relu(&self.head, inputs);
        specs.push(LayerSpec::Dense {
            inputs: last,
            outputs: 1,
        });
        specs
    }

    pub fn build(&self) -> Result<Network, DenoiseError> {
        self.validate()?;
        let heads = vec![self.head_layers(); self.forks];
        Ok(Network::forked(&self.trunk_layers(), &heads, self.seed))
    }
}

/// A denoised matrix, the theoretical matrix of the same channel, and the
/// channel parameters in degrees.
#[derive(Debug, Clone)]
pub struct LabeledPair {
    pub denoised: ProcessMatrix,
    pub theory: ProcessMatrix,
    pub params_deg: Vec<f64>,
}

/// Denoise every record of a split and pair it with its theory and phase.
pub fn labeled_pairs(
    ae: &mut Autoencoder,
    dataset: &Dataset,
    split: Split,
) -> Result<Vec<LabeledPair>, DenoiseError> {
    let recs: Vec<_> = dataset.split(split).collect();
    let noisy: Vec<&ProcessMatrix> = recs.iter().map(|r| &r.noisy).collect();
    let den = ae.denoise_batch(&noisy)?;
    Ok(den
        .into_iter()
        .zip(recs)
        .map(|(d, r)| LabeledPair {
            denoised: d,
            theory: r.target.clone(),
            params_deg: vec![r.phi.degrees()],
        })
        .collect())
}

/// A trained extractor. Targets are standardized per fork during training;
/// predictions are returned in degrees.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub spec: FfnnSpec,
    pub stats: NormStats,
    pub target_mean: Vec<f64>,
    pub target_scale: Vec<f64>,
    pub network: Network,
    pub log: Option<TrainLog>,
}

fn flat(m: &ProcessMatrix, stats: &NormStats) -> Vec<f64> {
    stats.normalize_all(&m.to_image())
}

impl Extractor {
    /// Train on denoised and theoretical matrices in equal shares: every
    /// batch holds the denoised matrix and the theoretical matrix of each
    /// drawn record. Validation uses denoised matrices only. `stats` must be
    /// the autoencoder's normalization.
    pub fn train(
        spec: &FfnnSpec,
        stats: NormStats,
        train: &[LabeledPair],
        val: &[LabeledPair],
    ) -> Result<Self, DenoiseError> {
        let mut network = spec.build()?;
        if train.len() < 2 {
            return Err(DenoiseError::EmptySplit("train"));
        }
        if val.is_empty() {
            return Err(DenoiseError::EmptySplit("val"));
        }
        if train
            .iter()
            .chain(val)
            .any(|p| p.params_deg.len() != spec.forks)
        {
            return Err(DenoiseError::InvalidSpec(format!(
                "every record needs {} target parameter(s)",
                spec.forks
            )));
        }
        let (target_mean, target_scale) = target_standardization(train, spec.forks);
        let standardize = |p: &LabeledPair| -> Vec<f64> {
            (0..spec.forks)
                .map(|f| (p.params_deg[f] - target_mean[f]) / target_scale[f])
                .collect()
        };
        let den: Vec<Vec<f64>> = train.iter().map(|p| flat(&p.denoised, &stats)).collect();
        let theo: Vec<Vec<f64>> = train.iter().map(|p| flat(&p.theory, &stats)).collect();
        let ty: Vec<Vec<f64>> = train.iter().map(standardize).collect();
        let vx: Vec<Vec<f64>> = val.iter().map(|p| flat(&p.denoised, &stats)).collect();
        let vy: Vec<Vec<f64>> = val.iter().map(standardize).collect();
        let vx_refs: Vec<&[f64]> = vx.iter().map(Vec::as_slice).collect();
        let vy_refs: Vec<Vec<&[f64]>> = vy
            .iter()
            .map(|t| (0..spec.forks).map(|f| &t[f..f + 1]).collect())
            .collect();
        let cfg = LoopConfig {
            epochs: spec.epochs,
            // each drawn record contributes two rows
            batch_size: (spec.batch_size / 2).max(2),
            patience: spec.patience,
            seed: spec.seed,
            adam: AdamConfig {
                lr: spec.learning_rate,
                ..AdamConfig::default()
            },
            label: "extractor",
        };
        let forks = spec.forks;
        let log = fit(
            &mut network,
            &cfg,
            train.len(),
            |idx| {
                let mut xs: Vec<&[f64]> = idx.iter().map(|&i| den[i].as_slice()).collect();
                xs.extend(idx.iter().map(|&i| theo[i].as_slice()));
                let rows: Vec<usize> = idx.iter().chain(idx).copied().collect();
                let ys = (0..forks)
                    .map(|f| {
                        let col: Vec<f64> = rows.iter().map(|&i| ty[i][f]).collect();
                        Tensor::new(vec![rows.len(), 1], col)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((Tensor::stack(&xs, &[INPUT_WIDTH])?, ys))
            },
            |net| eval_mse(net, &vx_refs, &vy_refs, &[INPUT_WIDTH]),
        )?;
        Ok(Self {
            spec: spec.clone(),
            stats,
            target_mean,
            target_scale,
            network,
            log: Some(log),
        })
    }

    /// Predicted parameters in degrees, one vector (per fork) per input.
    pub fn predict_batch(
        &mut self,
        inputs: &[&ProcessMatrix],
    ) -> Result<Vec<Vec<f64>>, DenoiseError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(EVAL_BATCH) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|m| flat(m, &self.stats)).collect();
            let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let preds = self
                .network
                .predict(&Tensor::stack(&refs, &[INPUT_WIDTH])?)?;
            for i in 0..chunk.len() {
                out.push(
                    preds
                        .iter()
                        .enumerate()
                        .map(|(f, p)| self.target_mean[f] + self.target_scale[f] * p.data()[i])
                        .collect(),
                );
            }
        }
        Ok(out)
    }

    /// Channel phase in degrees (first fork).
    pub fn extract_phi(&mut self, chi: &ProcessMatrix) -> Result<f64, DenoiseError> {
        Ok(self.predict_batch(&[chi])?[0][0])
    }

    /// MSE in degrees² of the first fork over a set of matrices.
    pub fn mse_deg(
        &mut self,
        inputs: &[&ProcessMatrix],
        truth_deg: &[f64],
    ) -> Result<f64, DenoiseError> {
        let preds = self.predict_batch(inputs)?;
        Ok(preds
            .iter()
            .zip(truth_deg)
            .map(|(p, t)| (p[0] - t).powi(2))
            .sum::<f64>()
            / preds.len().max(1) as f64)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let meta = serde_json::json!({
            "kind": MODEL_KIND,
            "spec": self.spec,
            "normalization": {"m": self.stats.min, "M": self.stats.max},
            "target_mean_deg": self.target_mean,
            "target_scale_deg": self.target_scale,
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
        let field = |name: &str| -> Result<serde_json::Value, DenoiseError> {
            match &meta[name] {
                serde_json::Value::Null => Err(DenoiseError::Model(format!("missing {name}"))),
                v => Ok(v.clone()),
            }
        };
        let parse_err = |e: serde_json::Error| DenoiseError::Model(e.to_string());
        let spec: FfnnSpec = serde_json::from_value(field("spec")?).map_err(parse_err)?;
        let target_mean: Vec<f64> =
            serde_json::from_value(field("target_mean_deg")?).map_err(parse_err)?;
        let target_scale: Vec<f64> =
            serde_json::from_value(field("target_scale_deg")?).map_err(parse_err)?;
        let norm = field("normalization")?;
        let stats = match (norm["m"].as_f64(), norm["M"].as_f64()) {
            (Some(m), Some(big_m)) => NormStats::new(m, big_m)?,
            _ => {
                return Err(DenoiseError::Model(
                    "normalization statistics missing".into(),
                ))
            }
        };
        let network = file.to_network()?;
        if network.heads.len() != spec.forks
            || target_mean.len() != spec.forks
            || target_scale.len() != spec.forks
        {
            return Err(DenoiseError::Model("fork count mismatch".into()));
        }
        Ok(Self {
            spec,
            stats,
            target_mean,
            target_scale,
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

/// Per-fork mean and standard deviation of the training targets (scale 1
/// when the targets are constant).
fn target_standardization(train: &[LabeledPair], forks: usize) -> (Vec<f64>, Vec<f64>) {
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..forks)
        .map(|f| train.iter().map(|p| p.params_deg[f]).sum::<f64>() / n)
        .collect();
    let scale = (0..forks)
        .map(|f| {
            let var = train
                .iter()
                .map(|p| (p.params_deg[f] - mean[f]).powi(2))
                .sum::<f64>()
                / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Nearest value of the phase grid, in degrees.
pub fn snap_to_grid(deg: f64) -> f64 {
    phi_grid()
        .into_iter()
        .map(|p| p.degrees())
        .min_by(|a, b| (a - deg).abs().total_cmp(&(b - deg).abs()))
        .expect("grid is non-empty")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResiduePoint {
    pub phi_true_deg: f64,
    pub phi_pred_deg: f64,
    pub signal_ratio: f64,
}

impl ResiduePoint {
    /// predicted − true
    pub fn residue(&self) -> f64 {
        self.phi_pred_deg - self.phi_true_deg
    }

    pub fn success(&self) -> bool {
        self.residue().abs() <= RESIDUE_GATE_DEG
    }

    pub fn snap_correct(&self) -> bool {
        (snap_to_grid(self.phi_pred_deg) - self.phi_true_deg).abs() < 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioBreakdown {
    pub signal_ratio: f64,
    pub n: usize,
    pub success_rate: f64,
    pub snap_accuracy: f64,
    pub mean_abs_residue_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidueReport {
    pub gate_deg: f64,
    pub n: usize,
    pub success_rate: f64,
    pub snap_accuracy: f64,
    pub per_ratio: Vec<RatioBreakdown>,
    #[serde(skip)]
    pub points: Vec<ResiduePoint>,
}

fn breakdown(points: &[&ResiduePoint], signal_ratio: f64) -> RatioBreakdown {
    let n = points.len();
    let frac = |pred: &dyn Fn(&ResiduePoint) -> bool| {
        points.iter().filter(|p| pred(p)).count() as f64 / n as f64
    };
    RatioBreakdown {
        signal_ratio,
        n,
        success_rate: frac(&ResiduePoint::success),
        snap_accuracy: frac(&ResiduePoint::snap_correct),
        mean_abs_residue_deg: points.iter().map(|p| p.residue().abs()).sum::<f64>() / n as f64,
    }
}

impl ResidueReport {
    pub fn from_points(points: Vec<ResiduePoint>) -> Result<Self, DenoiseError> {
        if points.is_empty() {
            return Err(DenoiseError::EmptySplit("residue"));
        }
        let all: Vec<&ResiduePoint> = points.iter().collect();
        let overall = breakdown(&all, f64::NAN);
        let mut ratios: Vec<f64> = points.iter().map(|p| p.signal_ratio).collect();
        ratios.sort_by(|a, b| b.total_cmp(a));
        ratios.dedup();
        let per_ratio = ratios
            .iter()
            .map(|&r| {
                let sel: Vec<&ResiduePoint> =
                    points.iter().filter(|p| p.signal_ratio == r).collect();
                breakdown(&sel, r)
            })
            .collect();
        Ok(Self {
            gate_deg: RESIDUE_GATE_DEG,
            n: points.len(),
            success_rate: overall.success_rate,
            snap_accuracy: overall.snap_accuracy,
            per_ratio,
            points,
        })
    }

    pub fn for_ratio(&self, r: f64) -> Option<&RatioBreakdown> {
        self.per_ratio.iter().find(|b| b.signal_ratio == r)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("phi_true_deg,phi_pred_deg,residue_deg,signal_ratio,success_flag\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(p.phi_true_deg),
                fmt_f64(p.phi_pred_deg),
                fmt_f64(p.residue()),
                p.signal_ratio,
                u8::from(p.success())
            );
        }
        out
    }
}

/// Predict the phase of each matrix and compare with the truth.
pub fn residue_report(
    model: &mut Extractor,
    inputs: &[&ProcessMatrix],
    truth_deg: &[f64],
    signal_ratios: &[f64],
) -> Result<ResidueReport, DenoiseError> {
    if inputs.len() != truth_deg.len() || inputs.len() != signal_ratios.len() {
        return Err(DenoiseError::InvalidSpec("slice lengths differ".into()));
    }
    let preds = model.predict_batch(inputs)?;
    ResidueReport::from_points(
        preds
            .iter()
            .zip(truth_deg)
            .zip(signal_ratios)
            .map(|((p, &t), &r)| ResiduePoint {
                phi_true_deg: t,
                phi_pred_deg: p[0],
                signal_ratio: r,
            })
            .collect(),
    )
}
