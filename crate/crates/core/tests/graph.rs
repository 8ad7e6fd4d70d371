use geompnn::graph::{
    brute_knn, brute_radius, radius_graph, surf2vol_graph, KdTree2, SurfaceIndex,
};
use geompnn::synth::{generate_synthetic, JoukowskiParams};
use geompnn::Point2;
use proptest::prelude::*;

fn cloud() -> impl Strategy<Value = Vec<Point2>> {
    // coarse grid coordinates make exact distance ties frequent
    prop::collection::vec((-20i32..20, -20i32..20), 1..300).prop_map(|v| {
        v.into_iter()
            .map(|(x, y)| Point2::new(x as f64 * 0.25, y as f64 * 0.25))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kd_tree_matches_brute_force(pts in cloud(), qx in -6.0f64..6.0, qy in -6.0f64..6.0, k in 1usize..40, r in 0.0f64..3.0) {
        let tree = KdTree2::build(&pts);
        for q in [Point2::new(qx, qy), pts[0]] {
            prop_assert_eq!(tree.knn(q, k), brute_knn(&pts, q, k));
            prop_assert_eq!(tree.within_radius(q, r), brute_radius(&pts, q, r));
        }
    }

    #[test]
    fn capped_radius_graph_respects_radius(pts in cloud(), r in 0.1f64..2.0, cap in 1usize..6, seed in any::<u64>()) {
        let g = radius_graph(&pts, r, cap, seed);
        for (&s, &d) in g.src.iter().zip(&g.dst) {
            prop_assert!(s != d);
            prop_assert!(pts[s].dist_sq(pts[d]) <= r * r);
        }
        prop_assert!(g.in_degrees().iter().all(|&n| n <= cap));
    }
}

#[test]
fn surf2vol_neighbors_do_not_depend_on_the_subset() {
    let shape = JoukowskiParams {
        thickness: 0.08,
        camber: 0.0,
    };
    let case = generate_synthetic("g", shape, Point2::new(1.0, 0.0), 800, 64, 3).unwrap();
    let full = surf2vol_graph(&case, 6).unwrap();
    let index = SurfaceIndex::new(&case);
    let subset: Vec<usize> = (0..case.len()).filter(|i| i % 5 == 2).collect();
    let sub = index.graph_for(&case, &subset, 6).unwrap();
    for (j, &i) in subset.iter().enumerate() {
        assert_eq!(sub.neighbors(j), full.neighbors(i));
    }
}
