use geompnn::eval::{compare_variants, EvalOptions};
use geompnn::features::FeatureVariant;
use geompnn::net::ModelConfig;
use geompnn::synth::{generate_dataset, DatasetSpec};
use geompnn::train::{train_field, TrainConfig};
use geompnn::FieldId;

fn tiny_config(field: FieldId, variant: FeatureVariant, standardize: bool) -> TrainConfig {
    let mut cfg = TrainConfig::new(field);
    cfg.variant = variant;
    cfg.model = ModelConfig {
        hidden: 8,
        ..ModelConfig::small()
    };
    cfg.epochs = 3;
    cfg.subsample_n = 150;
    cfg.seed = 3;
    cfg.standardize_inputs = standardize;
    cfg
}

fn spec() -> DatasetSpec {
    DatasetSpec {
        count: 3,
        n_volume: 300,
        n_surface: 48,
        ..DatasetSpec::default()
    }
}

#[test]
fn evaluation_leaves_checkpoints_untouched_and_full_subsample_has_zero_shift() {
    let cases = generate_dataset(&spec(), 1).unwrap();
    let a = train_field(
        &cases,
        &tiny_config(FieldId::Pressure, FeatureVariant::Inlet, true),
    )
    .unwrap();
    let b = train_field(
        &cases,
        &tiny_config(FieldId::Pressure, FeatureVariant::Sine, false),
    )
    .unwrap();
    let hashes = [a.checkpoint.param_hash(), b.checkpoint.param_hash()];
    let cks = [a.checkpoint, b.checkpoint];
    let opts = EvalOptions {
        subsample_n: cases[0].len(),
        seed: 0,
        timing: false,
    };
    let report = compare_variants(&cks, &cases, &opts).unwrap();
    assert_eq!([cks[0].param_hash(), cks[1].param_hash()], hashes);
    assert_eq!(report.rows.len(), 2);
    for row in &report.rows {
        assert!(row.mse_full.is_finite());
        assert_eq!(row.reldiff, Some(0.0));
    }
}

#[test]
fn standardized_checkpoint_round_trips_through_disk() {
    let cases = generate_dataset(&spec(), 2).unwrap();
    let out = train_field(
        &cases,
        &tiny_config(FieldId::VelX, FeatureVariant::SpH, true),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ux.ckpt");
    out.checkpoint.save(&path).unwrap();
    let back = geompnn::net::checkpoint::Checkpoint::load(&path).unwrap();
    assert_eq!(back, out.checkpoint);
    let opts = EvalOptions {
        subsample_n: 100,
        seed: 1,
        timing: false,
    };
    let x = compare_variants(&[out.checkpoint], &cases, &opts).unwrap();
    let y = compare_variants(&[back], &cases, &opts).unwrap();
    assert_eq!(x, y);
}

#[test]
fn mismatched_checkpoints_are_rejected() {
    let cases = generate_dataset(&spec(), 4).unwrap();
    let a = train_field(
        &cases,
        &tiny_config(FieldId::VelY, FeatureVariant::SpH, false),
    )
    .unwrap();
    let opts = EvalOptions {
        subsample_n: 100,
        seed: 1,
        timing: false,
    };
    let dup = [a.checkpoint.clone(), a.checkpoint];
    assert!(compare_variants(&dup, &cases, &opts).is_err());
}
