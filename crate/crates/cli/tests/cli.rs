use std::path::Path;
use std::process::{Command, Output};

use qpdn_core::chi_io::{counts_to_csv, read_chi};
use qpdn_core::quantum::{ideal_chi, process_fidelity, ChannelParameter};
use qpdn_core::tomography::expected_counts;

fn qpdn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpdn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = qpdn(&["gen", "--instances", "10", "--seed", "42"], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let o = qpdn(&["gen", "--instances", "10", "--seed", "43"], c.path());
    assert_eq!(code(&o), 0);

    for f in ["manifest.json", "train.csv", "val.csv", "test.csv"] {
        let x = std::fs::read(a.path().join("dataset").join(f)).unwrap();
        let y = std::fs::read(b.path().join("dataset").join(f)).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }
    let x = std::fs::read(a.path().join("dataset/train.csv")).unwrap();
    let z = std::fs::read(c.path().join("dataset/train.csv")).unwrap();
    assert_ne!(x, z, "a different seed should change the data");

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("dataset/manifest.json")).unwrap())
            .unwrap();
    // 16 phases x 3 ratios x 10 instances
    assert_eq!(manifest["records"], 480);
    let rows = std::str::from_utf8(&x).unwrap().lines().count()
        + std::fs::read_to_string(a.path().join("dataset/val.csv"))
            .unwrap()
            .lines()
            .count()
        + std::fs::read_to_string(a.path().join("dataset/test.csv"))
            .unwrap()
            .lines()
            .count();
    assert_eq!(rows, 480 + 3);

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("summaries/gen.json")).unwrap())
            .unwrap();
    assert_eq!(summary["master_seed"], 42);
    assert_eq!(summary["schema_version"], 1);
}

#[test]
fn qpt_reports_line_of_bad_count_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("counts.csv");
    std::fs::write(
        &path,
        "input_index,projector_index,expected,count,N,seed\n0,0,1.0,1,2000,\n0,1,oops,1,2000,\n",
    )
    .unwrap();
    let o = qpdn(&["qpt", "--counts", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = qpdn(&["qpt", "--counts", "/nonexistent/counts.csv"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn qpt_reconstructs_noiseless_table() {
    let dir = tempfile::tempdir().unwrap();
    let phi = ChannelParameter::new(std::f64::consts::FRAC_PI_3).unwrap();
    let theory = ideal_chi(phi);
    let table = expected_counts(&theory, 1.0).unwrap();
    let path = dir.path().join("counts.csv");
    std::fs::write(&path, counts_to_csv(&table)).unwrap();
    let out_chi = dir.path().join("chi.csv");
    let o = qpdn(
        &[
            "qpt",
            "--counts",
            path.to_str().unwrap(),
            "--phi",
            &phi.radians().to_string(),
            "--output",
            out_chi.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let chi = read_chi(&out_chi).unwrap();
    assert!(process_fidelity(&chi, &theory).unwrap() >= 1.0 - 1e-9);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summaries/qpt.json")).unwrap())
            .unwrap();
    assert_eq!(summary["metrics"]["noiseless_counts"], true);
}

#[test]
fn missing_prerequisites_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpdn(&["extract"], dir.path());
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stderr(&o).contains("model not found"));
    let o = qpdn(&["train-ae"], dir.path());
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stderr(&o).contains("dataset not found"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[autoencoder]\nkernel = 3\n").unwrap();
    let o = qpdn(&["--config", cfg.to_str().unwrap(), "gen"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    std::fs::write(&cfg, "[dataset]\nratios = [-1.0]\n").unwrap();
    let o = qpdn(&["--config", cfg.to_str().unwrap(), "gen"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = qpdn(&["--config", "/nonexistent.toml", "gen"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = qpdn(&["sweep-kernel", "--k", "0..9"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn small_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"seed = 3
[dataset]
instances = 10
phis = [0.5235987755982988, 1.5707963267948966]
[autoencoder]
filters = [8, 4, 2]
epochs = 2
batch_size = 8
[ffnn]
trunk = [16]
head = [8]
epochs = 2
batch_size = 8
[report]
phis = [1.5707963267948966]
instances = 2
"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    for args in [
        vec!["gen"],
        vec!["train-ae"],
        vec!["denoise"],
        vec!["train-ffnn"],
        vec!["extract"],
        vec!["report"],
        vec!["sweep-kernel", "--k", "1,2", "--epochs", "1"],
    ] {
        let mut full = vec!["--config", c];
        full.extend(args.iter().copied());
        let o = qpdn(&full, dir.path());
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    let out = dir.path();
    for f in [
        "models/autoencoder.json",
        "models/extractor.json",
        "denoised/test_fidelity.csv",
        "reports/residues.csv",
        "reports/residue_summary.json",
        "reports/fidelity_table.csv",
        "reports/fidelity_table.txt",
        "reports/heatmaps/phi90_noisy_minus_theory_re.pgm",
        "sweep/sweep_report.json",
        "summaries/report.json",
        "summaries/sweep-kernel.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let table = std::fs::read_to_string(out.join("reports/fidelity_table.csv")).unwrap();
    assert!(table.starts_with("phi_radians,phi_degrees,noisy_mean,noisy_std,noisy_n,mle_mean"));

    let o = qpdn(
        &["--config", c, "denoise", "--input", "/nonexistent.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}
