use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use log::info;
use qpdn_core::chi_io::{self, fmt_f64, ParseError};
use qpdn_core::mle::{mle_fit, mle_fit_noiseless};
use qpdn_core::quantum::{ideal_chi, process_fidelity, ChannelParameter, ChiLabel, ProcessMatrix};
use qpdn_core::reporting::{diff_heatmap, fidelity_table, write_heatmap, FidelitySample};
use qpdn_core::tomography::{
    chi_from_frequencies, chi_least_squares, generate_dataset, record_seed, simulate_record,
    train_stats, Dataset, DatasetParams, Split,
};
use qpdn_denoise::extractor::labeled_pairs;
use qpdn_denoise::{kernel_sweep, residue_report, Autoencoder, DenoiseError, Extractor};
use qpdn_nn::NnError;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{RunConfig, Stream};
use crate::exit::{
    Failure, ResultExt, EXIT_CONFIG, EXIT_DIVERGED, EXIT_FAILURE, EXIT_IO, EXIT_MISSING, EXIT_PARSE,
};
use crate::{Command, Method};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Default artifact locations under the output directory.
struct Layout {
    out: PathBuf,
}

impl Layout {
    fn dataset(&self) -> PathBuf {
        self.out.join("dataset")
    }
    fn ae_model(&self) -> PathBuf {
        self.out.join("models").join("autoencoder.json")
    }
    fn ffnn_model(&self) -> PathBuf {
        self.out.join("models").join("extractor.json")
    }
    fn dir(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

struct Summary {
    command: &'static str,
    started: Instant,
    timings: serde_json::Map<String, Value>,
    metrics: serde_json::Map<String, Value>,
    artifacts: Vec<String>,
    seeds: serde_json::Map<String, Value>,
}

impl Summary {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            timings: Default::default(),
            metrics: Default::default(),
            artifacts: Vec::new(),
            seeds: Default::default(),
        }
    }

    fn time(&mut self, name: &str, since: Instant) {
        self.timings
            .insert(name.into(), json!(since.elapsed().as_secs_f64()));
    }

    fn metric(&mut self, name: &str, v: Value) {
        self.metrics.insert(name.into(), v);
    }

    fn seed(&mut self, name: &str, v: u64) {
        self.seeds.insert(name.into(), json!(v));
    }

    fn artifact(&mut self, p: &Path) {
        self.artifacts.push(p.display().to_string());
    }

    fn write(mut self, cfg: &RunConfig, layout: &Layout) -> Result<(), Failure> {
        let total = self.started;
        self.time("total_s", total);
        let doc = json!({
            "schema_version": SUMMARY_SCHEMA_VERSION,
            "command": self.command,
            "master_seed": cfg.seed,
            "seeds": self.seeds,
            "timings": self.timings,
            "metrics": self.metrics,
            "artifacts": self.artifacts,
        });
        let dir = layout.dir("summaries");
        let path = dir.join(format!("{}.json", self.command));
        write_text(
            &path,
            &(serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)? + "\n"),
        )?;
        info!("summary written to {}", path.display());
        Ok(())
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .code(EXIT_IO)?;
    }
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .code(EXIT_IO)
}

fn parse_failure(e: ParseError, what: &Path) -> Failure {
    let code = match e {
        ParseError::Io(_) => EXIT_IO,
        _ => EXIT_PARSE,
    };
    Failure::new(
        code,
        anyhow!(e).context(format!("reading {}", what.display())),
    )
}

fn denoise_failure(e: DenoiseError) -> Failure {
    let code = match &e {
        DenoiseError::Divergence { .. } => EXIT_DIVERGED,
        DenoiseError::Io(_) => EXIT_IO,
        DenoiseError::Model(_) | DenoiseError::Nn(NnError::Json(_) | NnError::Model(_)) => {
            EXIT_PARSE
        }
        DenoiseError::InvalidSpec(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    };
    Failure::new(code, e)
}

fn require(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::new(
            EXIT_MISSING,
            anyhow!(
                "{what} not found at {} (run the producing command first)",
                path.display()
            ),
        ))
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    require(&path.join(chi_io::MANIFEST_FILE), "dataset")?;
    info!("loading dataset from {}", path.display());
    chi_io::read_dataset(path).map_err(|e| parse_failure(e, path))
}

fn load_autoencoder(path: &Path) -> Result<Autoencoder, Failure> {
    require(path, "autoencoder model")?;
    Autoencoder::load(path).map_err(denoise_failure)
}

fn load_extractor(path: &Path) -> Result<Extractor, Failure> {
    require(path, "extractor model")?;
    Extractor::load(path).map_err(denoise_failure)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Parse `a..b` (inclusive) or a comma-separated list.
pub fn parse_kernels(s: &str) -> anyhow::Result<Vec<usize>> {
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse()?;
        let b: usize = b.trim().trim_start_matches('=').parse()?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<_, _>>()?
    };
    if ks.is_empty() || ks.iter().any(|k| !(1..=7).contains(k)) {
        anyhow::bail!("kernel sizes must be a non-empty subset of 1..=7, got `{s}`");
    }
    Ok(ks)
}

pub fn dispatch(cfg: &RunConfig, cmd: Command) -> Result<(), Failure> {
    let layout = Layout {
        out: cfg.out.clone(),
    };
    match cmd {
        Command::Gen { instances, ratios } => gen(cfg, &layout, instances, ratios),
        Command::Qpt {
            counts,
            method,
            phi,
            output,
        } => qpt(cfg, &layout, &counts, method, phi, output),
        Command::TrainAe { dataset, k, epochs } => train_ae(cfg, &layout, dataset, k, epochs),
        Command::SweepKernel { dataset, k, epochs } => sweep(cfg, &layout, dataset, k, epochs),
        Command::Denoise {
            model,
            input,
            dataset,
        } => denoise(cfg, &layout, model, input, dataset),
        Command::TrainFfnn {
            dataset,
            ae_model,
            epochs,
        } => train_ffnn(cfg, &layout, dataset, ae_model, epochs),
        Command::Extract {
            model,
            ae_model,
            input,
            dataset,
        } => extract(cfg, &layout, model, ae_model, input, dataset),
        Command::Report {
            ae_model,
            instances,
        } => report(cfg, &layout, ae_model, instances),
    }
}

fn gen(
    cfg: &RunConfig,
    layout: &Layout,
    instances: Option<usize>,
    ratios: Option<Vec<f64>>,
) -> Result<(), Failure> {
    let mut summary = Summary::new("gen");
    let params = DatasetParams {
        phis: cfg.phis().code(EXIT_CONFIG)?,
        instances: instances.unwrap_or(cfg.dataset.instances),
        ratios: ratios.unwrap_or_else(|| cfg.dataset.ratios.clone()),
        seed: cfg.stream_seed(Stream::Dataset),
    };
    if params.instances == 0
        || params.ratios.is_empty()
        || params.ratios.iter().any(|r| !(*r > 0.0))
    {
        return Err(Failure::new(
            EXIT_CONFIG,
            anyhow!("instances must be positive and ratios non-empty and positive"),
        ));
    }
    summary.seed("dataset", params.seed);
    let t = Instant::now();
    let mut ds = generate_dataset(&params).code(EXIT_FAILURE)?;
    let stats = train_stats(&ds).code(EXIT_FAILURE)?;
    ds.stats = Some(stats);
    summary.time("simulate_s", t);
    let dir = layout.dataset();
    let t = Instant::now();
    let manifest = chi_io::write_dataset(&dir, &ds).map_err(|e| parse_failure(e, &dir))?;
    summary.time("write_s", t);
    info!("wrote {} records to {}", manifest.records, dir.display());
    summary.metric("records", json!(manifest.records));
    summary.metric("split_counts", json!(manifest.split_counts));
    summary.metric("normalization", json!({"m": stats.min, "M": stats.max}));
    summary.artifact(&dir);
    summary.write(cfg, layout)
}

fn qpt(
    cfg: &RunConfig,
    layout: &Layout,
    counts: &Path,
    method: Method,
    phi: Option<f64>,
    output: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut summary = Summary::new("qpt");
    let text = std::fs::read_to_string(counts)
        .with_context(|| format!("reading {}", counts.display()))
        .code(EXIT_IO)?;
    let table = chi_io::counts_from_csv(&text).map_err(|e| parse_failure(e, counts))?;
    let noiseless = table.counts.is_none();
    let name = match method {
        Method::Linear => "linear",
        Method::Mle => "mle",
    };
    let out = output.unwrap_or_else(|| layout.dir("qpt").join(format!("chi_{name}.csv")));
    let t = Instant::now();
    let chi = match method {
        Method::Linear if noiseless => ProcessMatrix::new(
            chi_from_frequencies(&table.noiseless_frequencies()),
            ChiLabel::Noisy,
        ),
        Method::Linear => {
            let fit = chi_least_squares(&table).code(EXIT_FAILURE)?;
            summary.metric("degenerate", json!(fit.degenerate));
            fit.chi
        }
        Method::Mle => {
            let report = if noiseless {
                mle_fit_noiseless(&table, &cfg.mle)
            } else {
                mle_fit(&table, &cfg.mle)
            }
            .code(EXIT_FAILURE)?;
            let report_path = out.with_extension("json");
            write_text(
                &report_path,
                &(serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)? + "\n"),
            )?;
            summary.artifact(&report_path);
            summary.metric(
                "mle",
                serde_json::to_value(&report).map_err(anyhow::Error::from)?,
            );
            report.chi_hat
        }
    };
    summary.time("reconstruct_s", t);
    let mut chi = ProcessMatrix {
        signal_ratio: Some(table.signal_ratio),
        ..chi
    };
    summary.metric("noiseless_counts", json!(noiseless));
    if let Some(x) = phi {
        let p = ChannelParameter::new(x).code(EXIT_CONFIG)?;
        chi.phi = Some(p);
        let f = process_fidelity(&chi, &ideal_chi(p)).code(EXIT_FAILURE)?;
        println!("fidelity {} (deficit {:.3e})", fmt_f64(f), 1.0 - f);
        summary.metric("fidelity", json!(f));
        summary.metric("fidelity_deficit", json!(1.0 - f));
    }
    write_text(&out, &chi_io::chi_to_csv(&chi))?;
    summary.artifact(&out);
    summary.write(cfg, layout)
}

/// Mean denoised fidelity per signal ratio on the test split.
fn test_fidelity_by_ratio(
    ae: &mut Autoencoder,
    ds: &Dataset,
) -> Result<Vec<(f64, f64, f64)>, Failure> {
    let recs: Vec<_> = ds.split(Split::Test).collect();
    let noisy: Vec<&ProcessMatrix> = recs.iter().map(|r| &r.noisy).collect();
    let den = ae.denoise_batch(&noisy).map_err(denoise_failure)?;
    let pairs: Vec<(f64, f64, f64)> = recs
        .par_iter()
        .zip(den.par_iter())
        .map(|(r, d)| -> anyhow::Result<(f64, f64, f64)> {
            Ok((
                r.signal_ratio,
                process_fidelity(&r.noisy, &r.target)?,
                process_fidelity(d, &r.target)?,
            ))
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(ds
        .params
        .ratios
        .iter()
        .map(|&r| {
            let sel: Vec<_> = pairs.iter().filter(|p| p.0 == r).collect();
            let noisy: Vec<f64> = sel.iter().map(|p| p.1).collect();
            let den: Vec<f64> = sel.iter().map(|p| p.2).collect();
            (r, mean(&noisy), mean(&den))
        })
        .collect())
}

fn train_ae(
    cfg: &RunConfig,
    layout: &Layout,
    dataset: Option<PathBuf>,
    k: Option<usize>,
    epochs: Option<usize>,
) -> Result<(), Failure> {
    let mut summary = Summary::new("train-ae");
    let ds = load_dataset(&dataset.unwrap_or_else(|| layout.dataset()))?;
    let mut spec = cfg.autoencoder.spec(cfg.stream_seed(Stream::Autoencoder));
    if let Some(k) = k {
        spec.k = k;
    }
    if let Some(e) = epochs {
        spec.epochs = e;
    }
    spec.validate().map_err(denoise_failure)?;
    summary.seed("autoencoder", spec.seed);
    summary.metric("instances_per_phi", json!(ds.params.instances));
    let t = Instant::now();
    let mut ae = Autoencoder::train(&spec, &ds).map_err(denoise_failure)?;
    summary.time("train_s", t);
    let log = ae.log.clone().expect("trained model has a log");
    let path = layout.ae_model();
    std::fs::create_dir_all(path.parent().expect("model path has a parent")).code(EXIT_IO)?;
    ae.save(&path).map_err(denoise_failure)?;
    summary.artifact(&path);
    summary.metric("k", json!(spec.k));
    summary.metric("training", log.summary());
    let t = Instant::now();
    let by_ratio = test_fidelity_by_ratio(&mut ae, &ds)?;
    summary.time("evaluate_s", t);
    for (r, noisy, den) in &by_ratio {
        info!("test r={r}: noisy fidelity {noisy:.4}, denoised {den:.4}");
    }
    summary.metric(
        "test_fidelity",
        json!(by_ratio
            .iter()
            .map(|(r, n, d)| json!({"signal_ratio": r, "noisy_mean": n, "denoised_mean": d}))
            .collect::<Vec<_>>()),
    );
    summary.write(cfg, layout)
}

fn sweep(
    cfg: &RunConfig,
    layout: &Layout,
    dataset: Option<PathBuf>,
    k: Option<String>,
    epochs: Option<usize>,
) -> Result<(), Failure> {
    let mut summary = Summary::new("sweep-kernel");
    let ks = match k {
        Some(s) => parse_kernels(&s).code(EXIT_CONFIG)?,
        None => cfg.sweep.kernels.clone(),
    };
    let ds = load_dataset(&dataset.unwrap_or_else(|| layout.dataset()))?;
    let mut spec = cfg.autoencoder.spec(cfg.stream_seed(Stream::Autoencoder));
    if let Some(e) = epochs {
        spec.epochs = e;
    }
    summary.seed("autoencoder", spec.seed);
    let dir = layout.dir("sweep");
    let t = Instant::now();
    let rep = kernel_sweep(&spec, &ds, &ks, Some(&dir)).map_err(denoise_failure)?;
    summary.time("sweep_s", t);
    let path = dir.join("sweep_report.json");
    write_text(
        &path,
        &(serde_json::to_string_pretty(&rep).map_err(anyhow::Error::from)? + "\n"),
    )?;
    for e in &rep.entries {
        info!(
            "k={}: val mse {:.3e}, test fidelity {:.4}",
            e.k, e.val_mse, e.test_fidelity_mean
        );
    }
    println!("best_k {}", rep.best_k);
    summary.metric("best_k", json!(rep.best_k));
    summary.metric(
        "val_mse",
        json!(rep
            .entries
            .iter()
            .map(|e| json!({"k": e.k, "val_mse": e.val_mse}))
            .collect::<Vec<_>>()),
    );
    summary.artifact(&path);
    summary.write(cfg, layout)
}

fn denoise(
    cfg: &RunConfig,
    layout: &Layout,
    model: Option<PathBuf>,
    input: Option<PathBuf>,
    dataset: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut summary = Summary::new("denoise");
    let mut ae = load_autoencoder(&model.unwrap_or_else(|| layout.ae_model()))?;
    let dir = layout.dir("denoised");
    if let Some(input) = input {
        let chi = chi_io::read_chi(&input).map_err(|e| parse_failure(e, &input))?;
        let out = ae.denoise(&chi).map_err(denoise_failure)?;
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "chi".into());
        let path = dir.join(format!("{stem}_denoised.csv"));
        write_text(&path, &chi_io::chi_to_csv(&out))?;
        if let Some(p) = chi.phi {
            let f = process_fidelity(&out, &ideal_chi(p)).code(EXIT_FAILURE)?;
            println!("fidelity {}", fmt_f64(f));
            summary.metric("fidelity", json!(f));
        }
        summary.artifact(&path);
        return summary.write(cfg, layout);
    }
    let ds = load_dataset(&dataset.unwrap_or_else(|| layout.dataset()))?;
    let recs: Vec<_> = ds.split(Split::Test).collect();
    let noisy: Vec<&ProcessMatrix> = recs.iter().map(|r| &r.noisy).collect();
    let t = Instant::now();
    let den = ae.denoise_batch(&noisy).map_err(denoise_failure)?;
    summary.time("denoise_s", t);
    let rows: Vec<(f64, f64, f64)> = recs
        .par_iter()
        .zip(den.par_iter())
        .map(|(r, d)| -> anyhow::Result<_> {
            let h_noisy = diff_heatmap(&r.noisy, &r.target).max_abs();
            let h_den = diff_heatmap(d, &r.target).max_abs();
            Ok((
                process_fidelity(&r.noisy, &r.target)?,
                process_fidelity(d, &r.target)?,
                h_den / h_noisy,
            ))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut csv = String::from(
        "phi_radians,signal_ratio,instance_id,fidelity_noisy,fidelity_denoised,residual_ratio\n",
    );
    for (r, (fn_, fd, ratio)) in recs.iter().zip(&rows) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_f64(r.phi.radians()),
            r.signal_ratio,
            r.instance,
            fmt_f64(*fn_),
            fmt_f64(*fd),
            fmt_f64(*ratio)
        );
    }
    let path = dir.join("test_fidelity.csv");
    write_text(&path, &csv)?;
    let improved = rows.iter().filter(|r| r.1 >= r.0).count() as f64 / rows.len().max(1) as f64;
    summary.metric("records", json!(rows.len()));
    summary.metric("fraction_improved", json!(improved));
    summary.metric(
        "mean_fidelity",
        json!({"noisy": mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>()),
               "denoised": mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>())}),
    );
    summary.artifact(&path);
    summary.write(cfg, layout)
}

fn train_ffnn(
    cfg: &RunConfig,
    layout: &Layout,
    dataset: Option<PathBuf>,
    ae_model: Option<PathBuf>,
    epochs: Option<usize>,
) -> Result<(), Failure> {
    let mut summary = Summary::new("train-ffnn");
    let mut ae = load_autoencoder(&ae_model.unwrap_or_else(|| layout.ae_model()))?;
    let ds = load_dataset(&dataset.unwrap_or_else(|| layout.dataset()))?;
    let mut spec = cfg.ffnn.spec(cfg.stream_seed(Stream::Ffnn));
    if let Some(e) = epochs {
        spec.epochs = e;
    }
    summary.seed("ffnn", spec.seed);
    let t = Instant::now();
    let train = labeled_pairs(&mut ae, &ds, Split::Train).map_err(denoise_failure)?;
    let val = labeled_pairs(&mut ae, &ds, Split::Val).map_err(denoise_failure)?;
    summary.time("denoise_s", t);
    let t = Instant::now();
    let ex = Extractor::train(&spec, ae.stats, &train, &val).map_err(denoise_failure)?;
    summary.time("train_s", t);
    let path = layout.ffnn_model();
    std::fs::create_dir_all(path.parent().expect("model path has a parent")).code(EXIT_IO)?;
    ex.save(&path).map_err(denoise_failure)?;
    if let Some(log) = &ex.log {
        summary.metric("training", log.summary());
    }
    summary.artifact(&path);
    summary.write(cfg, layout)
}

fn extract(
    cfg: &RunConfig,
    layout: &Layout,
    model: Option<PathBuf>,
    ae_model: Option<PathBuf>,
    input: Option<PathBuf>,
    dataset: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut summary = Summary::new("extract");
    let mut ex = load_extractor(&model.unwrap_or_else(|| layout.ffnn_model()))?;
    let mut ae = load_autoencoder(&ae_model.unwrap_or_else(|| layout.ae_model()))?;
    if let Some(input) = input {
        let chi = chi_io::read_chi(&input).map_err(|e| parse_failure(e, &input))?;
        let den = ae.denoise(&chi).map_err(denoise_failure)?;
        let deg = ex.extract_phi(&den).map_err(denoise_failure)?;
        println!("phi_deg {deg}");
        summary.metric("phi_pred_deg", json!(deg));
        if let Some(p) = chi.phi {
            summary.metric("phi_true_deg", json!(p.degrees()));
        }
        return summary.write(cfg, layout);
    }
    let ds = load_dataset(&dataset.unwrap_or_else(|| layout.dataset()))?;
    let t = Instant::now();
    let pairs = labeled_pairs(&mut ae, &ds, Split::Test).map_err(denoise_failure)?;
    let inputs: Vec<&ProcessMatrix> = pairs.iter().map(|p| &p.denoised).collect();
    let truth: Vec<f64> = pairs.iter().map(|p| p.params_deg[0]).collect();
    let ratios: Vec<f64> = ds.split(Split::Test).map(|r| r.signal_ratio).collect();
    let rep = residue_report(&mut ex, &inputs, &truth, &ratios).map_err(denoise_failure)?;
    summary.time("extract_s", t);
    let dir = layout.dir("reports");
    let csv_path = dir.join("residues.csv");
    write_text(&csv_path, &rep.to_csv())?;
    let json_path = dir.join("residue_summary.json");
    write_text(
        &json_path,
        &(serde_json::to_string_pretty(&rep).map_err(anyhow::Error::from)? + "\n"),
    )?;
    for b in &rep.per_ratio {
        info!(
            "r={}: success rate {:.4} (n={})",
            b.signal_ratio, b.success_rate, b.n
        );
    }
    summary.metric("success_rate", json!(rep.success_rate));
    summary.metric(
        "per_ratio",
        serde_json::to_value(&rep.per_ratio).map_err(anyhow::Error::from)?,
    );
    summary.artifact(&csv_path);
    summary.artifact(&json_path);
    summary.write(cfg, layout)
}

fn report(
    cfg: &RunConfig,
    layout: &Layout,
    ae_model: Option<PathBuf>,
    instances: Option<usize>,
) -> Result<(), Failure> {
    let mut summary = Summary::new("report");
    let mut ae = load_autoencoder(&ae_model.unwrap_or_else(|| layout.ae_model()))?;
    let phis = cfg.report_phis().code(EXIT_CONFIG)?;
    let n = instances.unwrap_or(cfg.report.instances);
    let r = cfg.report.signal_ratio;
    let seed = cfg.stream_seed(Stream::Report);
    summary.seed("report", seed);
    let t = Instant::now();
    let jobs: Vec<(usize, usize)> = (0..phis.len())
        .flat_map(|p| (0..n).map(move |i| (p, i)))
        .collect();
    let sims = jobs
        .par_iter()
        .map(|&(pi, inst)| -> anyhow::Result<_> {
            let phi = phis[pi];
            let (table, noisy) = simulate_record(phi, r, record_seed(seed, pi, 0, inst))?;
            let mle = mle_fit(&table, &cfg.mle)?;
            Ok((
                pi,
                inst,
                noisy.with_phi(phi).with_signal_ratio(r),
                mle.chi_hat,
            ))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    summary.time("simulate_and_mle_s", t);
    let noisy: Vec<&ProcessMatrix> = sims.iter().map(|s| &s.2).collect();
    let den = ae.denoise_batch(&noisy).map_err(denoise_failure)?;
    let mut samples = Vec::new();
    let heat_dir = layout.dir("reports").join("heatmaps");
    for ((pi, inst, noisy, mle), d) in sims.iter().zip(&den) {
        let phi = phis[*pi];
        let theory = ideal_chi(phi);
        for (method, m) in [("noisy", noisy), ("mle", mle), ("denoised", d)] {
            samples.push(FidelitySample {
                phi,
                method: method.into(),
                fidelity: process_fidelity(m, &theory).code(EXIT_FAILURE)?,
            });
        }
        if *inst == 0 {
            let deg = phi.degrees().round() as i64;
            let noisy_map = diff_heatmap(noisy, &theory);
            noisy_map.check_symmetry(1e-9).code(EXIT_FAILURE)?;
            write_heatmap(
                &noisy_map,
                &heat_dir,
                &format!("phi{deg}_noisy_minus_theory"),
            )
            .code(EXIT_IO)?;
            let den_map = diff_heatmap(&theory, d);
            write_heatmap(
                &den_map,
                &heat_dir,
                &format!("phi{deg}_theory_minus_denoised"),
            )
            .code(EXIT_IO)?;
            let mle_map = diff_heatmap(&theory, mle);
            write_heatmap(&mle_map, &heat_dir, &format!("phi{deg}_theory_minus_mle"))
                .code(EXIT_IO)?;
        }
    }
    let table =
        fidelity_table(&samples, &phis, &["noisy", "mle", "denoised"]).code(EXIT_FAILURE)?;
    let dir = layout.dir("reports");
    let csv_path = dir.join("fidelity_table.csv");
    let txt_path = dir.join("fidelity_table.txt");
    write_text(&csv_path, &table.to_csv())?;
    write_text(&txt_path, &table.to_text())?;
    print!("{}", table.to_text());
    summary.metric("signal_ratio", json!(r));
    summary.metric(
        "table",
        serde_json::to_value(&table).map_err(anyhow::Error::from)?,
    );
    summary.artifact(&csv_path);
    summary.artifact(&txt_path);
    summary.artifact(&heat_dir);
    summary.write(cfg, layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_ranges() {
        assert_eq!(parse_kernels("1..7").unwrap(), [1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(parse_kernels("2,3").unwrap(), [2, 3]);
        assert_eq!(parse_kernels("1..=3").unwrap(), [1, 2, 3]);
        assert!(parse_kernels("0..3").is_err());
        assert!(parse_kernels("x").is_err());
    }
}
