use geompnn::features::{BasisSettings, FeatureVariant};
use geompnn::net::checkpoint::Checkpoint;
use geompnn::net::{Architecture, GeoModel, ModelConfig};
use geompnn::pipeline::{predict, PreparedCase};
use geompnn::synth::{generate_synthetic, JoukowskiParams};
use geompnn::{FieldId, MeshCase, Point2};

const VARIANT: FeatureVariant = FeatureVariant::Sine;

fn case() -> MeshCase {
    let shape = JoukowskiParams {
        thickness: 0.1,
        camber: 0.03,
    };
    generate_synthetic("m", shape, Point2::new(1.0, 0.15), 500, 48, 21).unwrap()
}

fn config(architecture: Architecture) -> ModelConfig {
    ModelConfig {
        architecture,
        hidden: 12,
        // wide enough that the volume graph is connected at this density
        volume_radius: 0.5,
        ..ModelConfig::small()
    }
}

fn setup(arch: Architecture) -> (PreparedCase, GeoModel) {
    let c = case();
    let basis = BasisSettings::fit(std::slice::from_ref(&c)).unwrap();
    let cfg = config(arch);
    let p = PreparedCase::new(&c, VARIANT, &basis, &cfg).unwrap();
    let model = GeoModel::new(cfg, VARIANT.node_width(8), VARIANT.edge_width(8), 9);
    (p, model)
}

#[test]
fn surf2vol_predictions_follow_point_permutations() {
    let (p, model) = setup(Architecture::Surf2Vol);
    let query: Vec<usize> = (0..p.len()).collect();
    let base = predict(&model, &p, &query, 0).unwrap();
    let perm: Vec<usize> = (0..p.len()).map(|i| (i * 37 + 11) % p.len()).collect();
    let permuted = predict(&model, &p, &perm, 0).unwrap();
    for (j, &i) in perm.iter().enumerate() {
        assert!((permuted[j] - base[i]).abs() <= 1e-12);
    }
}

#[test]
fn forward_is_deterministic() {
    for arch in [
        Architecture::Mlp,
        Architecture::Gnn,
        Architecture::Surf2Vol,
        Architecture::Surf2VolGnn,
    ] {
        let (p, model) = setup(arch);
        let q: Vec<usize> = (0..p.len()).step_by(3).collect();
        let a = predict(&model, &p, &q, 4).unwrap();
        let b = predict(&model, &p, &q, 4).unwrap();
        assert_eq!(a, b, "{arch}");
    }
}

#[test]
fn ablated_volume_layers_reduce_to_surf2vol() {
    let (p, plain) = setup(Architecture::Surf2Vol);
    let (_, mut hybrid) = setup(Architecture::Surf2VolGnn);
    let shared = plain.params.len();
    assert_eq!(&hybrid.params.names()[..shared], plain.params.names());
    assert_eq!(&hybrid.params.tensors()[..shared], plain.params.tensors());
    let q: Vec<usize> = (0..p.len()).collect();
    let before = predict(&hybrid, &p, &q, 0).unwrap();
    hybrid.ablate_volume_layers();
    let hp = PreparedCase::new(
        &p.case,
        VARIANT,
        &BasisSettings::fit(std::slice::from_ref(&p.case)).unwrap(),
        &hybrid.config,
    )
    .unwrap();
    let after = predict(&hybrid, &hp, &q, 0).unwrap();
    let reference = predict(&plain, &p, &q, 0).unwrap();
    assert_eq!(after, reference);
    assert_ne!(before, reference);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let (p, model) = setup(Architecture::Surf2Vol);
    let basis = BasisSettings::fit(std::slice::from_ref(&p.case)).unwrap();
    let ck = Checkpoint {
        field: FieldId::VelY,
        variant: VARIANT,
        basis,
        normalizer: geompnn::features::FieldNormalizer::fit(&[0.0, 1.0, 3.0], FieldId::VelY, false)
            .unwrap(),
        scaler: geompnn::features::InputScaler::identity(
            VARIANT.node_width(8),
            VARIANT.edge_width(8),
        ),
        model,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let q: Vec<usize> = (0..p.len()).collect();
    assert_eq!(
        predict(&ck.model, &p, &q, 0).unwrap(),
        predict(&back.model, &p, &q, 0).unwrap()
    );
}

/// Perturbs one node's input features and returns how many other nodes'
/// predictions move.
fn influence(arch: Architecture) -> usize {
    let (p, model) = setup(arch);
    let q: Vec<usize> = (48..p.len()).collect();
    let input = p.build_input(&model.config, &q, 0, 0).unwrap();
    let base = model.predict(&input).unwrap();
    let mut bumped = input.clone();
    let target = 100;
    let w = bumped.node_feats.cols();
    for v in &mut bumped.node_feats.data_mut()[target * w..(target + 1) * w] {
        *v += 0.5;
    }
    let moved = model.predict(&bumped).unwrap();
    assert_ne!(
        moved[target], base[target],
        "{arch}: own prediction must move"
    );
    (0..q.len())
        .filter(|&j| j != target && moved[j] != base[j])
        .count()
}

#[test]
fn only_volume_graphs_couple_volume_points() {
    assert_eq!(influence(Architecture::Mlp), 0);
    assert_eq!(influence(Architecture::Surf2Vol), 0);
    assert!(influence(Architecture::Gnn) > 0);
    assert!(influence(Architecture::Surf2VolGnn) > 0);
}
