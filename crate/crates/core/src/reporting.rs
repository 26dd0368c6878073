//! Difference heatmaps, fidelity tables and their file renderings.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::chi_io::fmt_f64;
use crate::quantum::{ChannelParameter, ProcessMatrix};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no fidelity samples for phi={phi_deg:.1} deg, method {method}")]
    EmptyCell { phi_deg: f64, method: String },
    #[error("heatmap {channel} channel violates difference symmetry by {deviation:e}")]
    Asymmetric {
        channel: &'static str,
        deviation: f64,
    },
    #[error("heatmap csv: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Grid = [[f64; 16]; 16];

/// Signed 16x16 real/imaginary grids of `a - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub re: Grid,
    pub im: Grid,
    pub label: String,
}

impl Heatmap {
    pub fn channels(&self) -> [(&'static str, &Grid); 2] {
        [("re", &self.re), ("im", &self.im)]
    }

    pub fn max_abs(&self) -> f64 {
        self.channels()
            .iter()
            .flat_map(|(_, g)| g.iter().flatten())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest deviation from "real part symmetric, imaginary part
    /// antisymmetric", which any difference of Hermitian matrices satisfies.
    pub fn symmetry_deviation(&self) -> (f64, f64) {
        let mut re: f64 = 0.0;
        let mut im: f64 = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                re = re.max((self.re[i][j] - self.re[j][i]).abs());
                im = im.max((self.im[i][j] + self.im[j][i]).abs());
            }
        }
        (re, im)
    }

    pub fn check_symmetry(&self, tol: f64) -> Result<(), ReportError> {
        let (re, im) = self.symmetry_deviation();
        if re > tol {
            return Err(ReportError::Asymmetric {
                channel: "re",
                deviation: re,
            });
        }
        if im > tol {
            return Err(ReportError::Asymmetric {
                channel: "im",
                deviation: im,
            });
        }
        Ok(())
    }
}

pub fn diff_heatmap(a: &ProcessMatrix, b: &ProcessMatrix) -> Heatmap {
    let mut re = [[0.0; 16]; 16];
    let mut im = [[0.0; 16]; 16];
    for i in 0..16 {
        for j in 0..16 {
            let d = a.chi[(i, j)] - b.chi[(i, j)];
            re[i][j] = d.re;
            im[i][j] = d.im;
        }
    }
    Heatmap {
        re,
        im,
        label: format!("{} - {}", a.label, b.label),
    }
}

pub fn grid_to_csv(g: &Grid) -> String {
    let mut out = String::new();
    for row in g {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn grid_from_csv(text: &str) -> Result<Grid, ReportError> {
    let mut g = [[0.0; 16]; 16];
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.len() != 16 {
        return Err(ReportError::Parse(format!(
            "expected 16 rows, got {}",
            rows.len()
        )));
    }
    for (i, line) in rows.iter().enumerate() {
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != 16 {
            return Err(ReportError::Parse(format!(
                "row {}: expected 16 values, got {}",
                i + 1,
                vals.len()
            )));
        }
        for (j, v) in vals.iter().enumerate() {
            g[i][j] = v
                .trim()
                .parse()
                .map_err(|e| ReportError::Parse(format!("row {}: {e}", i + 1)))?;
        }
    }
    Ok(g)
}

/// Gray level for a signed value: zero is 128, `+scale` is 255 and
/// `-scale` is 0, linear on each side of zero.
pub fn gray_level(v: f64, scale: f64) -> u8 {
    if scale <= 0.0 {
        return 128;
    }
    let x = (v / scale).clamp(-1.0, 1.0);
    if x >= 0.0 {
        (128.0 + 127.0 * x).round() as u8
    } else {
        (128.0 + 128.0 * x).round() as u8
    }
}

/// Binary PGM (P5), 16x16, maxval 255, scaled by the grid's own max |v|.
pub fn grid_to_pgm(g: &Grid) -> Vec<u8> {
    let scale = g.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut out = b"P5\n16 16\n255\n".to_vec();
    out.extend(g.iter().flatten().map(|&v| gray_level(v, scale)));
    out
}

/// Write `<stem>_re.csv`, `<stem>_im.csv`, `<stem>_re.pgm` and
/// `<stem>_im.pgm` into `dir`; returns the paths written.
pub fn write_heatmap(h: &Heatmap, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (tag, grid) in h.channels() {
        let csv = dir.join(format!("{stem}_{tag}.csv"));
        std::fs::write(&csv, grid_to_csv(grid))?;
        let pgm = dir.join(format!("{stem}_{tag}.pgm"));
        std::fs::write(&pgm, grid_to_pgm(grid))?;
        paths.push(csv);
        paths.push(pgm);
    }
    Ok(paths)
}

/// Mean and sample standard deviation of one table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl CellStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

/// One fidelity value tagged with the phase it belongs to and the method
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelitySample {
    pub phi: ChannelParameter,
    pub method: String,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityRow {
    pub phi_radians: f64,
    pub phi_degrees: f64,
    pub cells: Vec<CellStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityTable {
    pub methods: Vec<String>,
    pub rows: Vec<FidelityRow>,
}

const PHI_MATCH_TOL: f64 = 1e-9;

/// Aggregate samples into one row per requested phase and one column per
/// requested method. Every cell needs at least one sample.
pub fn fidelity_table(
    samples: &[FidelitySample],
    phis: &[ChannelParameter],
    methods: &[&str],
) -> Result<FidelityTable, ReportError> {
    let mut rows = Vec::with_capacity(phis.len());
    for &phi in phis {
        let mut cells = Vec::with_capacity(methods.len());
        for &method in methods {
            let vals: Vec<f64> = samples
                .iter()
                .filter(|s| {
                    s.method == method && (s.phi.radians() - phi.radians()).abs() < PHI_MATCH_TOL
                })
                .map(|s| s.fidelity)
                .collect();
            let cell = CellStats::from_values(&vals).ok_or_else(|| ReportError::EmptyCell {
                phi_deg: phi.degrees(),
                method: method.to_string(),
            })?;
            cells.push(cell);
        }
        rows.push(FidelityRow {
            phi_radians: phi.radians(),
            phi_degrees: phi.degrees(),
            cells,
        });
    }
    Ok(FidelityTable {
        methods: methods.iter().map(|m| m.to_string()).collect(),
        rows,
    })
}

impl FidelityTable {
    /// Smallest sample count over all cells.
    pub fn min_count(&self) -> usize {
        self.rows
            .iter()
            .flat_map(|r| r.cells.iter().map(|c| c.n))
            .min()
            .unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("phi_radians,phi_degrees");
        for m in &self.methods {
            let _ = write!(out, ",{m}_mean,{m}_std,{m}_n");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(
                out,
                "{},{}",
                fmt_f64(row.phi_radians),
                fmt_f64(row.phi_degrees)
            );
            for c in &row.cells {
                let _ = write!(out, ",{},{},{}", fmt_f64(c.mean), fmt_f64(c.std), c.n);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut header = vec!["phi (deg)".to_string()];
        header.extend(self.methods.iter().cloned());
        let mut lines = vec![header];
        for row in &self.rows {
            let mut line = vec![format!("{:.1}", row.phi_degrees)];
            line.extend(
                row.cells
                    .iter()
                    .map(|c| format!("{:.3} ± {:.3} (n={})", c.mean, c.std, c.n)),
            );
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| {
                lines
                    .iter()
                    .map(|l| l[i].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:>w$}", w = *w))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
