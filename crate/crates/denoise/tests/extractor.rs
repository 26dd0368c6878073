use qpdn_core::quantum::phi_grid;
use qpdn_core::tomography::{generate_dataset, train_stats, Dataset, DatasetParams, Split};
use qpdn_denoise::extractor::LabeledPair;
use qpdn_denoise::{residue_report, Extractor, FfnnSpec};

fn dataset() -> Dataset {
    let mut ds = generate_dataset(&DatasetParams {
        phis: phi_grid(),
        instances: 20,
        ratios: vec![1.0],
        seed: 3,
    })
    .unwrap();
    ds.stats = Some(train_stats(&ds).unwrap());
    ds
}

/// Pairs built from the raw reconstructions, standing in for autoencoder
/// outputs.
fn pairs(ds: &Dataset, split: Split) -> Vec<LabeledPair> {
    ds.split(split)
        .map(|r| LabeledPair {
            denoised: r.noisy.clone(),
            theory: r.target.clone(),
            params_deg: vec![r.phi.degrees()],
        })
        .collect()
}

fn spec(epochs: usize) -> FfnnSpec {
    FfnnSpec {
        epochs,
        seed: 9,
        ..FfnnSpec::default()
    }
}

#[test]
fn training_error_drops_tenfold() {
    let ds = dataset();
    let ex = Extractor::train(
        &spec(100),
        ds.stats.unwrap(),
        &pairs(&ds, Split::Train),
        &pairs(&ds, Split::Val),
    )
    .unwrap();
    let log = ex.log.unwrap();
    let first = log.epochs.first().unwrap().train_mse;
    let last = log.epochs.last().unwrap().train_mse;
    assert!(last <= 0.1 * first, "train mse {first} -> {last}");
}

#[test]
fn predictions_in_degrees_and_round_trip() {
    let ds = dataset();
    let train = pairs(&ds, Split::Train);
    let mut ex = Extractor::train(
        &spec(100),
        ds.stats.unwrap(),
        &train,
        &pairs(&ds, Split::Val),
    )
    .unwrap();

    // oracle: training targets are standardized with their own mean/std
    let n = train.len() as f64;
    let mean = train.iter().map(|p| p.params_deg[0]).sum::<f64>() / n;
    let std = (train
        .iter()
        .map(|p| (p.params_deg[0] - mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    assert!((ex.target_mean[0] - mean).abs() < 1e-9);
    assert!((ex.target_scale[0] - std).abs() < 1e-9);

    let test = pairs(&ds, Split::Test);
    let inputs: Vec<_> = test.iter().map(|p| &p.denoised).collect();
    let truth: Vec<f64> = test.iter().map(|p| p.params_deg[0]).collect();
    let ratios = vec![1.0; test.len()];
    let rep = residue_report(&mut ex, &inputs, &truth, &ratios).unwrap();
    // raw r = 1 reconstructions carry little noise: most land inside the gate
    assert!(rep.success_rate > 0.5, "success rate {}", rep.success_rate);
    let mse = ex.mse_deg(&inputs, &truth).unwrap();
    assert!(mse < 900.0, "mse {mse} deg^2");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ffnn.json");
    ex.save(&path).unwrap();
    let mut loaded = Extractor::load(&path).unwrap();
    assert_eq!(
        loaded.predict_batch(&inputs).unwrap(),
        ex.predict_batch(&inputs).unwrap()
    );
}

#[test]
fn fork_count_must_match_targets() {
    let ds = dataset();
    let bad = FfnnSpec {
        forks: 2,
        ..spec(1)
    };
    assert!(Extractor::train(
        &bad,
        ds.stats.unwrap(),
        &pairs(&ds, Split::Train),
        &pairs(&ds, Split::Val)
    )
    .is_err());
}
