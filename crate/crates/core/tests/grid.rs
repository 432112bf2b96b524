use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;

use scalar_field_lab::grid::{ball_volume, sphere_measure};
use scalar_field_lab::{make_grid, Error, Norm, Profile};

#[test]
fn disc_area_and_ball_volume() {
    let g = make_grid(2, 20.0, 2048).unwrap();
    assert_relative_eq!(g.integrate(&vec![1.0; g.len()]), 400.0 * PI, max_relative = 1e-10);
    let g = make_grid(3, 1.0, 16).unwrap();
    assert_relative_eq!(g.integrate(&vec![1.0; g.len()]), 4.0 * PI / 3.0, max_relative = 1e-10);
    assert_relative_eq!(ball_volume(3, 1.0), 4.0 * PI / 3.0, max_relative = 1e-14);
    assert_relative_eq!(sphere_measure(2), 2.0 * PI, max_relative = 1e-14);
}

#[test]
fn negative_radius_is_a_config_error() {
    match make_grid(2, -1.0, 10) {
        Err(Error::Config { field, .. }) => assert!(field.contains("rmax"), "{field}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_profile_has_zero_norms() {
    let g = make_grid(2, 10.0, 101).unwrap();
    let z = g.zeros();
    for which in [Norm::L2, Norm::GradL2, Norm::Lr(3.0), Norm::H1] {
        assert_eq!(z.norm(which).unwrap(), 0.0);
    }
}

#[test]
fn truncated_dilation_is_rejected() {
    let g = make_grid(2, 10.0, 401).unwrap();
    let u = g.sample(|r| if r < 9.0 { (9.0 - r).powi(3) } else { 0.0 });
    assert!(u.dilate(1.0).is_err());
}

fn gaussian_mass(dim: usize, w: f64) -> f64 {
    // ∫ exp(−2r²/w²) over ℝ^N
    (PI * w * w / 2.0).powf(dim as f64 / 2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gaussian_mass_matches_closed_form(dim in 1usize..5, w in 0.5f64..3.0) {
        let g = make_grid(dim, 12.0 * w, 1201).unwrap();
        let u = g.sample(|r| (-(r / w).powi(2)).exp());
        let exact = gaussian_mass(dim, w);
        prop_assert!((u.mass() / exact - 1.0).abs() < 1e-8, "rel {:e}", u.mass() / exact - 1.0);
    }

    #[test]
    fn dilation_scales_norms(dim in 1usize..4, theta in -0.6f64..0.6) {
        let g = make_grid(dim, 30.0, 3001).unwrap();
        let u = g.sample(|r| (1.0 + r * r) * (-(r * r) / 2.0).exp());
        let v = u.dilate(theta).unwrap();
        let n = dim as f64;
        prop_assert!((v.mass() / u.mass() / (n * theta).exp() - 1.0).abs() < 1e-6);
        prop_assert!((v.grad_sq() / u.grad_sq() / ((n - 2.0) * theta).exp() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn text_round_trip(vals in prop::collection::vec(-5.0f64..5.0, 50)) {
        let g = make_grid(2, 5.0, 51).unwrap();
        let mut values = vals.clone();
        values.push(0.0);
        let u = Profile::new(g.clone(), values).unwrap();
        let back = Profile::from_text(g, &u.to_text()).unwrap();
        prop_assert_eq!(back, u);
    }

    #[test]
    fn dirichlet_energy_is_a_seminorm(vals in prop::collection::vec(-1.0f64..1.0, 40), c in -3.0f64..3.0) {
        let g = make_grid(3, 4.0, 41).unwrap();
        let mut values = vals.clone();
        values.push(0.0);
        let e = g.dirichlet_energy(&values);
        let scaled: Vec<f64> = values.iter().map(|v| c * v).collect();
        prop_assert!(e >= 0.0);
        prop_assert!((g.dirichlet_energy(&scaled) - c * c * e).abs() <= 1e-12 * (1.0 + e));
    }
}
