use geompnn::synth::{generate_dataset, generate_synthetic, DatasetSpec, JoukowskiParams};
use geompnn::{FieldId, Point2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn hundred_random_draws_are_valid_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for i in 0..100 {
        let shape = JoukowskiParams {
            thickness: rng.gen_range(0.04..0.2),
            camber: rng.gen_range(-0.1..0.1),
        };
        let aoa: f64 = rng.gen_range(-10f64..15.0).to_radians();
        let speed = rng.gen_range(0.5..2.0);
        let v = Point2::new(speed * aoa.cos(), speed * aoa.sin());
        let case = generate_synthetic(format!("c{i}"), shape, v, 200, 40, i).unwrap();
        case.validate().unwrap();
        assert_eq!(case.recentre(), case, "draw {i} is not recentred");
    }
}

#[test]
fn far_field_is_near_freestream() {
    let spec = DatasetSpec {
        count: 3,
        n_volume: 3000,
        ..DatasetSpec::default()
    };
    for case in generate_dataset(&spec, 12).unwrap() {
        let xs: Vec<f64> = case.surface_points().iter().map(|p| p.x).collect();
        let chord = xs.iter().cloned().fold(f64::MIN, f64::max)
            - xs.iter().cloned().fold(f64::MAX, f64::min);
        let ux = case.field_values(FieldId::VelX).unwrap();
        let uy = case.field_values(FieldId::VelY).unwrap();
        let v = case.inlet_velocity;
        let mut far = 0;
        for (i, p) in case.points.iter().enumerate() {
            if p.norm() > 20.0 * chord {
                far += 1;
                let d = Point2::new(ux[i] - v.x, uy[i] - v.y).norm() / v.norm();
                assert!(d < 0.05, "{}: point {i} deviates by {d}", case.case_id);
            }
        }
        assert!(far > 0);
    }
}

#[test]
fn same_seed_same_dataset() {
    let spec = DatasetSpec {
        count: 2,
        n_volume: 500,
        ..DatasetSpec::default()
    };
    assert_eq!(
        generate_dataset(&spec, 5).unwrap(),
        generate_dataset(&spec, 5).unwrap()
    );
    assert_ne!(
        generate_dataset(&spec, 5).unwrap(),
        generate_dataset(&spec, 6).unwrap()
    );
}
