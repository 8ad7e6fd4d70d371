use geompnn::features::{edge_blocks, node_blocks, BasisSettings, FeatureContext, FeatureVariant};
use geompnn::synth::{generate_synthetic, JoukowskiParams};
use geompnn::{MeshCase, Point2};

fn case_with_inlet(v_inf: Point2) -> MeshCase {
    let shape = JoukowskiParams {
        thickness: 0.12,
        camber: 0.04,
    };
    generate_synthetic("f", shape, v_inf, 400, 64, 11).unwrap()
}

fn block<'a>(v: &'a [f64], variant: FeatureVariant, name: &str, edge: bool) -> Option<&'a [f64]> {
    let blocks = if edge {
        edge_blocks(variant, 8)
    } else {
        node_blocks(variant, 8)
    };
    blocks
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, r)| &v[r])
}

#[test]
fn shared_blocks_are_bit_identical_across_variants() {
    let case = case_with_inlet(Point2::new(0.9, 0.2));
    let basis = BasisSettings::fit(std::slice::from_ref(&case)).unwrap();
    let points = [0, 17, 64, 200, 463];
    let ctxs: Vec<_> = FeatureVariant::ALL
        .into_iter()
        .map(|v| (v, FeatureContext::new(&case, v, &basis).unwrap()))
        .collect();
    for pair in ctxs.windows(2) {
        let (a, ca) = &pair[0];
        let (b, cb) = &pair[1];
        for &i in &points {
            let (fa, fb) = (ca.node_features(&case, i), cb.node_features(&case, i));
            for (name, _) in node_blocks(*a, 8) {
                if let Some(nb) = block(&fb, *b, name, false) {
                    assert_eq!(
                        block(&fa, *a, name, false).unwrap(),
                        nb,
                        "{a} -> {b} node block {name}"
                    );
                }
            }
            let (ea, eb) = (ca.edge_features(&case, 3, i), cb.edge_features(&case, 3, i));
            for (name, _) in edge_blocks(*a, 8) {
                if let Some(nb) = block(&eb, *b, name, true) {
                    assert_eq!(
                        block(&ea, *a, name, true).unwrap(),
                        nb,
                        "{a} -> {b} edge block {name}"
                    );
                }
            }
        }
    }
}

#[test]
fn canonical_block_reduces_to_plain_blocks_for_axis_aligned_inlet() {
    let case = case_with_inlet(Point2::new(1.3, 0.0));
    let basis = BasisSettings::fit(std::slice::from_ref(&case)).unwrap();
    let ctx = FeatureContext::new(&case, FeatureVariant::Inlet, &basis).unwrap();
    for i in [0, 5, 80, 300] {
        let f = ctx.node_features(&case, i);
        let canon = block(&f, FeatureVariant::Inlet, "canon", false).unwrap();
        let base = block(&f, FeatureVariant::Inlet, "base", false).unwrap();
        let trail = block(&f, FeatureVariant::Inlet, "trail", false).unwrap();
        let sine = block(&f, FeatureVariant::Inlet, "sine", false).unwrap();
        let harm = block(&f, FeatureVariant::Inlet, "harmonic", false).unwrap();
        // canon: x, x_trail, sine(x), sine(x_trail), normal, harmonics(x), harmonics(x_trail)
        let mut expect = vec![base[0], base[1], trail[0], trail[1]];
        expect.extend_from_slice(&sine[..64]);
        expect.extend_from_slice(&base[2..4]);
        expect.extend_from_slice(harm);
        assert_eq!(canon, &expect[..], "point {i}");
    }
    let e = ctx.edge_features(&case, 2, 150);
    let canon = block(&e, FeatureVariant::Inlet, "canon", true).unwrap();
    let geom = block(&e, FeatureVariant::Inlet, "geometry", true).unwrap();
    let sine = block(&e, FeatureVariant::Inlet, "sine", true).unwrap();
    let harm = block(&e, FeatureVariant::Inlet, "harmonic", true).unwrap();
    // edge sine block is sine(distance) then sine(displacement)
    let mut expect = geom[..2].to_vec();
    expect.extend_from_slice(&sine[16..48]);
    expect.extend_from_slice(harm);
    assert_eq!(canon, &expect[..]);
}

#[test]
fn inlet_features_are_rotation_invariant() {
    // rotating the whole case and its inlet leaves the canonical block unchanged
    let case = case_with_inlet(Point2::new(1.0, 0.0));
    let th: f64 = 0.3;
    let rot = |p: Point2| {
        Point2::new(
            th.cos() * p.x - th.sin() * p.y,
            th.sin() * p.x + th.cos() * p.y,
        )
    };
    let mut turned = case.clone();
    turned.points = case.points.iter().map(|&p| rot(p)).collect();
    turned.normals = case.normals.iter().map(|&p| rot(p)).collect();
    turned.inlet_velocity = rot(case.inlet_velocity);
    let basis = BasisSettings::fit(std::slice::from_ref(&case)).unwrap();
    let a = FeatureContext::new(&case, FeatureVariant::Inlet, &basis).unwrap();
    let b = FeatureContext::new(&turned, FeatureVariant::Inlet, &basis).unwrap();
    for i in [1, 40, 333] {
        let fa = a.node_features(&case, i);
        let fb = b.node_features(&turned, i);
        let ca = block(&fa, FeatureVariant::Inlet, "canon", false).unwrap();
        let cb = block(&fb, FeatureVariant::Inlet, "canon", false).unwrap();
        // position and normal only: the trailing edge is picked in the raw
        // frame, and the sinusoids amplify rounding
        for k in [0, 1, 68, 69] {
            assert!(
                (ca[k] - cb[k]).abs() < 1e-9,
                "point {i} column {k}: {} vs {}",
                ca[k],
                cb[k]
            );
        }
    }
}
