//! Run configuration (TOML). Unknown keys are rejected; every key has a
//! default that reproduces the full-scale experiment.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qpdn_core::mle::MleConfig;
use qpdn_core::quantum::{phi_grid, ChannelParameter};
use qpdn_core::tomography::{splitmix64, DEFAULT_INSTANCES, DEFAULT_RATIOS};
use qpdn_denoise::{AutoencoderSpec, FfnnSpec};
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub log_level: String,
    pub dataset: DatasetConfig,
    pub mle: MleConfig,
    pub autoencoder: AutoencoderConfig,
    pub sweep: SweepConfig,
    pub ffnn: FfnnConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            out: PathBuf::from("qpdn-out"),
            threads: None,
            log_level: "info".into(),
            dataset: DatasetConfig::default(),
            mle: MleConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            sweep: SweepConfig::default(),
            ffnn: FfnnConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub instances: usize,
    pub ratios: Vec<f64>,
    /// Channel phases in radians; the 16-value grid when absent.
    pub phis: Option<Vec<f64>>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            instances: DEFAULT_INSTANCES,
            ratios: DEFAULT_RATIOS.to_vec(),
            phis: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub k: usize,
    pub filters: Vec<usize>,
    pub stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        let d = AutoencoderSpec::default();
        Self {
            k: d.k,
            filters: d.filters,
            stride: d.stride,
            epochs: d.epochs,
            batch_size: d.batch_size,
            patience: d.patience,
            learning_rate: d.learning_rate,
        }
    }
}

impl AutoencoderConfig {
    pub fn spec(&self, seed: u64) -> AutoencoderSpec {
        AutoencoderSpec {
            k: self.k,
            filters: self.filters.clone(),
            stride: self.stride,
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            learning_rate: self.learning_rate,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub kernels: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kernels: (1..=7).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FfnnConfig {
    pub trunk: Vec<usize>,
    pub head: Vec<usize>,
    pub forks: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
}

impl Default for FfnnConfig {
    fn default() -> Self {
        let d = FfnnSpec::default();
        Self {
            trunk: d.trunk,
            head: d.head,
            forks: d.forks,
            epochs: d.epochs,
            batch_size: d.batch_size,
            patience: d.patience,
            learning_rate: d.learning_rate,
        }
    }
}

impl FfnnConfig {
    pub fn spec(&self, seed: u64) -> FfnnSpec {
        FfnnSpec {
            trunk: self.trunk.clone(),
            head: self.head.clone(),
            forks: self.forks,
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            learning_rate: self.learning_rate,
            seed,
        }
    }
}

/// Method-comparison table settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Phases (radians) of the table rows.
    pub phis: Vec<f64>,
    pub signal_ratio: f64,
    /// Fresh noisy records per phase.
    pub instances: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            phis: vec![
                5.0 * PI / 4.0,
                5.0 * PI / 3.0,
                5.0 * PI / 6.0,
                PI / 6.0,
                PI / 2.0,
            ],
            signal_ratio: 1.0,
            instances: 30,
        }
    }
}

/// Independent seed streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Dataset,
    Autoencoder,
    Ffnn,
    Report,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            bail!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            );
        }
        if self.dataset.instances == 0 {
            bail!("dataset.instances must be at least 1");
        }
        if self.dataset.ratios.is_empty() || self.dataset.ratios.iter().any(|r| !(*r > 0.0)) {
            bail!("dataset.ratios must be non-empty and positive");
        }
        self.phis()?;
        self.report_phis()?;
        if self.report.instances == 0 || !(self.report.signal_ratio > 0.0) {
            bail!("report.instances and report.signal_ratio must be positive");
        }
        if self.sweep.kernels.is_empty() || self.sweep.kernels.iter().any(|k| !(1..=7).contains(k))
        {
            bail!("sweep.kernels must be a non-empty subset of 1..=7");
        }
        self.autoencoder
            .spec(0)
            .validate()
            .map_err(|e| anyhow::anyhow!("autoencoder: {e}"))?;
        self.ffnn
            .spec(0)
            .validate()
            .map_err(|e| anyhow::anyhow!("ffnn: {e}"))?;
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }

    pub fn phis(&self) -> anyhow::Result<Vec<ChannelParameter>> {
        match &self.dataset.phis {
            None => Ok(phi_grid()),
            Some(list) if list.is_empty() => bail!("dataset.phis must not be empty"),
            Some(list) => list
                .iter()
                .map(|&x| {
                    ChannelParameter::new(x).map_err(|e| anyhow::anyhow!("dataset.phis: {e}"))
                })
                .collect(),
        }
    }

    pub fn report_phis(&self) -> anyhow::Result<Vec<ChannelParameter>> {
        if self.report.phis.is_empty() {
            bail!("report.phis must not be empty");
        }
        self.report
            .phis
            .iter()
            .map(|&x| ChannelParameter::new(x).map_err(|e| anyhow::anyhow!("report.phis: {e}")))
            .collect()
    }

    pub fn stream_seed(&self, stream: Stream) -> u64 {
        match stream {
            Stream::Dataset => self.seed,
            Stream::Autoencoder => splitmix64(self.seed ^ 0xAE),
            Stream::Ffnn => splitmix64(self.seed ^ 0xFF),
            Stream::Report => splitmix64(self.seed ^ 0x5E),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_full_scale() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.dataset.instances, 500);
        assert_eq!(cfg.phis().unwrap().len(), 16);
        assert_eq!(cfg.autoencoder.filters, [128, 64, 32]);
        assert_eq!(cfg.sweep.kernels, [1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("[autoencoder]\nkernel = 3").is_err());
        assert!(RunConfig::parse("[mle]\nmax_iter = 3").is_err());
    }

    #[test]
    fn values_validated() {
        assert!(RunConfig::parse("schema_version = 2").is_err());
        assert!(RunConfig::parse("[dataset]\ninstances = 0").is_err());
        assert!(RunConfig::parse("[autoencoder]\nk = 9").is_err());
        assert!(RunConfig::parse("[sweep]\nkernels = [0, 3]").is_err());
        let cfg = RunConfig::parse("seed = 9\n[dataset]\ninstances = 10\nratios = [1.0]").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.dataset.ratios, [1.0]);
    }

    #[test]
    fn streams_differ() {
        let cfg = RunConfig::default();
        let seeds = [
            cfg.stream_seed(Stream::Dataset),
            cfg.stream_seed(Stream::Autoencoder),
            cfg.stream_seed(Stream::Ffnn),
            cfg.stream_seed(Stream::Report),
        ];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }
}
