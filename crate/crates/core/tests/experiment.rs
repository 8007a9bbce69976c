use std::path::Path;

use gazedpm::data::{generate_synthetic, Dataset, SyntheticSpec};
use gazedpm::eval::{class_ap, read_detections, run_experiment, write_outcome, ExperimentSpec, Variant};
use gazedpm::train::{SgdConfig, TrainConfig};
use gazedpm::Error;

fn small_dataset(dir: &Path, n_classes: usize) -> Dataset {
    let spec = SyntheticSpec {
        n_train: 40,
        n_test: 16,
        width: 64,
        height: 64,
        n_classes,
        texture_periods: [16.0, 8.0][..n_classes].to_vec(),
        object_size: [28.0, 36.0],
        seed: 9,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, dir).unwrap();
    Dataset::load(&dir.join("manifest.json")).unwrap()
}

fn quick(variant: Variant) -> ExperimentSpec {
    ExperimentSpec {
        variant,
        train: TrainConfig {
            n_components: 1,
            n_parts: 0,
            warmup_rounds: 1,
            outer_rounds: 1,
            max_inner_iterations: 2,
            sgd: SgdConfig {
                epochs: 4,
                ..SgdConfig::default()
            },
            ..TrainConfig::default()
        },
        ..ExperimentSpec::default()
    }
}

#[test]
fn zero_noise_reproduces_plain_gaze_run() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path(), 1);
    let plain = run_experiment(&ds, &quick(Variant::Gazedpm)).unwrap();
    let zero = run_experiment(&ds, &quick(Variant::Noise { sigma_scale: 0.0 })).unwrap();
    assert_eq!(plain.report.classes, zero.report.classes);
    assert_eq!(plain.detections, zero.detections);
    assert_ne!(plain.report.variant, zero.report.variant);
}

#[test]
fn map_is_mean_of_recomputed_class_aps() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(&dir.path().join("data"), 2);
    let outcome = run_experiment(&ds, &quick(Variant::BaselineDpm)).unwrap();
    let out = dir.path().join("run");
    write_outcome(&outcome, &out).unwrap();

    let dumped = read_detections(&std::fs::read(out.join("detections.jsonl")).unwrap()[..]).unwrap();
    assert_eq!(outcome.report.classes.len(), 2);
    let mut sum = 0.0;
    for c in &outcome.report.classes {
        let (ap, n) = class_ap(&ds, ds.test_ids(), &c.class, &dumped, 0.5, false).unwrap();
        assert_eq!(ap, c.ap);
        assert_eq!(n, c.n_positive);
        sum += ap;
    }
    assert!((outcome.report.map - sum / 2.0).abs() < 1e-15);
    for name in [
        "report.json",
        "report.md",
        "telemetry.jsonl",
        "models/pattern0.json",
        "models/pattern1.json",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn split_leakage_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path(), 1);
    let mut manifest = ds.manifest.clone();
    let leaked = manifest.split.train[0].clone();
    manifest.split.test.push(leaked);
    match Dataset::open(manifest, dir.path()) {
        Err(Error::SplitLeakage { count: 1, .. }) => {}
        other => panic!("expected split leakage, got {:?}", other.map(|d| d.test_ids().len())),
    }
}
