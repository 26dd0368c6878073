//! Text formats: chi matrix CSV and count-table CSV.
//!
//! Chi CSV: 16 rows of 32 comma-separated doubles (re, im interleaved per
//! entry), optionally preceded by `# chi phi=<radians> r=<ratio> label=<label>`.
//! Count CSV: header `input_index,projector_index,expected,count,N,seed`
//! followed by one row per (input, projector) setting.
//! Dataset directory: `manifest.json` plus one CSV per split.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::quantum::{ChannelParameter, ChiLabel, Mat16, ProcessMatrix, C64};
use serde::{Deserialize, Serialize};

use crate::tomography::{
    CountTable, Dataset, DatasetParams, NormStats, Record, Split, NUM_PROJECTORS, NUM_SETTINGS,
};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Structure(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn line_err(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Line {
        line,
        msg: msg.into(),
    }
}

/// Shortest-roundtrip is not enough for diffable output; every double is
/// printed with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn chi_to_csv(chi: &ProcessMatrix) -> String {
    let mut out = String::new();
    let _ = write!(out, "# chi");
    if let Some(phi) = chi.phi {
        let _ = write!(out, " phi={}", fmt_f64(phi.radians()));
    }
    if let Some(r) = chi.signal_ratio {
        let _ = write!(out, " r={r}");
    }
    let _ = writeln!(out, " label={}", chi.label);
    for r in 0..16 {
        let row: Vec<String> = (0..16)
            .flat_map(|c| {
                let z = chi.chi[(r, c)];
                [fmt_f64(z.re), fmt_f64(z.im)]
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn chi_from_csv(text: &str) -> Result<ProcessMatrix, ParseError> {
    let mut chi = Mat16::zeros();
    let mut phi = None;
    let mut ratio = None;
    let mut label = ChiLabel::Noisy;
    let mut row = 0;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            for tok in header.split_whitespace() {
                if let Some(v) = tok.strip_prefix("phi=") {
                    let x: f64 = v.parse().map_err(|_| line_err(lineno, "bad phi"))?;
                    phi = Some(
                        ChannelParameter::new(x).map_err(|e| line_err(lineno, e.to_string()))?,
                    );
                } else if let Some(v) = tok.strip_prefix("r=") {
                    ratio = Some(v.parse().map_err(|_| line_err(lineno, "bad ratio"))?);
                } else if let Some(v) = tok.strip_prefix("label=") {
                    label = v.parse().map_err(|e: String| line_err(lineno, e))?;
                }
            }
            continue;
        }
        if row >= 16 {
            return Err(line_err(lineno, "more than 16 data rows"));
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| line_err(lineno, format!("bad number: {e}")))?;
        if vals.len() != 32 {
            return Err(line_err(
                lineno,
                format!("expected 32 columns, got {}", vals.len()),
            ));
        }
        for c in 0..16 {
            chi[(row, c)] = C64::new(vals[2 * c], vals[2 * c + 1]);
        }
        row += 1;
    }
    if row != 16 {
        return Err(ParseError::Structure(format!(
            "expected 16 data rows, got {row}"
        )));
    }
    Ok(ProcessMatrix {
        chi,
        phi,
        signal_ratio: ratio,
        label,
    })
}

pub fn write_chi(path: &Path, chi: &ProcessMatrix) -> io::Result<()> {
    std::fs::write(path, chi_to_csv(chi))
}

pub fn read_chi(path: &Path) -> Result<ProcessMatrix, ParseError> {
    chi_from_csv(&std::fs::read_to_string(path)?)
}

pub const COUNTS_HEADER: &str = "input_index,projector_index,expected,count,N,seed";

pub fn counts_to_csv(table: &CountTable) -> String {
    let mut out = String::from(COUNTS_HEADER);
    out.push('\n');
    let seed = table.seed.map(|s| s.to_string()).unwrap_or_default();
    for i in 0..NUM_SETTINGS {
        let count = table
            .counts
            .as_ref()
            .map(|c| c[i].to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            i / NUM_PROJECTORS,
            i % NUM_PROJECTORS,
            fmt_f64(table.expected[i]),
            count,
            table.total_per_basis,
            seed
        );
    }
    out
}

/// Parse a count CSV. The signal ratio is recovered as `N / 2000`.
pub fn counts_from_csv(text: &str) -> Result<CountTable, ParseError> {
    let mut expected = vec![f64::NAN; NUM_SETTINGS];
    let mut counts = vec![None; NUM_SETTINGS];
    let mut total = None;
    let mut seed = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("input_index") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(line_err(
                lineno,
                format!("expected 6 columns, got {}", cols.len()),
            ));
        }
        let j: usize = cols[0]
            .parse()
            .map_err(|_| line_err(lineno, "bad input_index"))?;
        let l: usize = cols[1]
            .parse()
            .map_err(|_| line_err(lineno, "bad projector_index"))?;
        if j >= 16 || l >= NUM_PROJECTORS {
            return Err(line_err(lineno, "index out of range"));
        }
        let i = j * NUM_PROJECTORS + l;
        expected[i] = cols[2]
            .parse()
            .map_err(|_| line_err(lineno, "bad expected"))?;
        if !cols[3].is_empty() {
            counts[i] = Some(
                cols[3]
                    .parse::<u64>()
                    .map_err(|_| line_err(lineno, "bad count"))?,
            );
        }
        let n: f64 = cols[4].parse().map_err(|_| line_err(lineno, "bad N"))?;
        if !(n.is_finite() && n > 0.0) {
            return Err(line_err(lineno, "N must be positive"));
        }
        match total {
            None => total = Some(n),
            Some(t) if t != n => return Err(line_err(lineno, "inconsistent N")),
            _ => {}
        }
        if !cols[5].is_empty() {
            seed = Some(
                cols[5]
                    .parse::<u64>()
                    .map_err(|_| line_err(lineno, "bad seed"))?,
            );
        }
    }
    if expected.iter().any(|e| e.is_nan()) {
        return Err(ParseError::Structure(format!(
            "count table must list all {NUM_SETTINGS} settings"
        )));
    }
    let total = total.ok_or_else(|| ParseError::Structure("empty count table".into()))?;
    let counts = if counts.iter().all(Option::is_some) {
        Some(counts.into_iter().map(Option::unwrap).collect())
    } else if counts.iter().all(Option::is_none) {
        None
    } else {
        return Err(ParseError::Structure(
            "count column partially filled".into(),
        ));
    };
    Ok(CountTable {
        counts,
        expected,
        total_per_basis: total,
        signal_ratio: total / crate::tomography::BASE_COUNTS,
        seed,
        phi: None,
    })
}

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
}

/// Dataset directory manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub phis_radians: Vec<f64>,
    pub ratios: Vec<f64>,
    pub instances: usize,
    pub split_counts: SplitCounts,
    pub normalization: Option<Normalization>,
    pub records: usize,
}

impl Manifest {
    pub fn for_dataset(ds: &Dataset) -> Self {
        Self {
            schema_version: DATASET_SCHEMA_VERSION,
            master_seed: ds.params.seed,
            phis_radians: ds.params.phis.iter().map(|p| p.radians()).collect(),
            ratios: ds.params.ratios.clone(),
            instances: ds.params.instances,
            split_counts: SplitCounts {
                train: ds.split_count(Split::Train),
                val: ds.split_count(Split::Val),
                test: ds.split_count(Split::Test),
            },
            normalization: ds.stats.map(|s| Normalization {
                m: s.min,
                big_m: s.max,
            }),
            records: ds.records.len(),
        }
    }
}

fn split_header() -> String {
    let mut h = String::from("phi_radians,phi_degrees,signal_ratio,instance_id");
    for kind in ["noisy", "target"] {
        for r in 0..16 {
            for c in 0..16 {
                for part in ["re", "im"] {
                    let _ = write!(h, ",{kind}_{r}_{c}_{part}");
                }
            }
        }
    }
    h
}

pub fn split_to_csv<'a>(records: impl Iterator<Item = &'a Record>) -> String {
    let mut out = split_header();
    out.push('\n');
    for rec in records {
        let _ = write!(
            out,
            "{},{},{},{}",
            fmt_f64(rec.phi.radians()),
            fmt_f64(rec.phi.degrees()),
            rec.signal_ratio,
            rec.instance
        );
        for v in rec
            .noisy
            .to_image()
            .into_iter()
            .chain(rec.target.to_image())
        {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

pub fn split_from_csv(text: &str, split: Split) -> Result<Vec<Record>, ParseError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("phi_radians") {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| line_err(lineno, format!("bad number: {e}")))?;
        if vals.len() != 4 + 1024 {
            return Err(line_err(
                lineno,
                format!("expected 1028 columns, got {}", vals.len()),
            ));
        }
        let phi = ChannelParameter::new(vals[0]).map_err(|e| line_err(lineno, e.to_string()))?;
        let r = vals[2];
        let instance = vals[3] as usize;
        let tag = |m: ProcessMatrix| m.with_phi(phi).with_signal_ratio(r);
        records.push(Record {
            phi,
            signal_ratio: r,
            instance,
            split,
            noisy: tag(ProcessMatrix::from_image(&vals[4..516], ChiLabel::Noisy)),
            target: tag(ProcessMatrix::from_image(
                &vals[516..],
                ChiLabel::Theoretical,
            )),
        });
    }
    Ok(records)
}

/// Write `manifest.json` and `train.csv`, `val.csv`, `test.csv`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<Manifest, ParseError> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest::for_dataset(ds);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| ParseError::Structure(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    for split in Split::ALL {
        let path = dir.join(format!("{}.csv", split.name()));
        std::fs::write(path, split_to_csv(ds.split(split)))?;
    }
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, ParseError> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| ParseError::Structure(format!("manifest: {e}")))?;
    if m.schema_version != DATASET_SCHEMA_VERSION {
        return Err(ParseError::Structure(format!(
            "unsupported dataset schema version {}",
            m.schema_version
        )));
    }
    Ok(m)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, ParseError> {
    let m = read_manifest(dir)?;
    let mut records = Vec::with_capacity(m.records);
    for split in Split::ALL {
        let text = std::fs::read_to_string(dir.join(format!("{}.csv", split.name())))?;
        records.extend(split_from_csv(&text, split)?);
    }
    if records.len() != m.records {
        return Err(ParseError::Structure(format!(
            "manifest lists {} records, found {}",
            m.records,
            records.len()
        )));
    }
    let phis = m
        .phis_radians
        .iter()
        .map(|&x| ChannelParameter::new(x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ParseError::Structure(e.to_string()))?;
    let stats = match &m.normalization {
        Some(n) => {
            Some(NormStats::new(n.m, n.big_m).map_err(|e| ParseError::Structure(e.to_string()))?)
        }
        None => None,
    };
    Ok(Dataset {
        params: DatasetParams {
            phis,
            instances: m.instances,
            ratios: m.ratios,
            seed: m.master_seed,
        },
        records,
        stats,
    })
}
