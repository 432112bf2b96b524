use approx::assert_relative_eq;
use proptest::prelude::*;

use scalar_field_lab::shoot::{continue_branch, ground_state_critical, least_energy_e0};
use scalar_field_lab::*;

fn opts(n: usize) -> ShootOptions {
    ShootOptions {
        grid: GridPolicy::DecayScaled { lengths: 32.0, n },
        ..ShootOptions::default()
    }
}

#[test]
fn doubled_soliton_height_does_not_decay() {
    let nl = Nonlinearity::pure_power(3.0, 1).unwrap();
    let o = shoot(&nl, 0.0, 2.0 * 2f64.sqrt()).unwrap();
    assert!(o.classification != Classification::Decay || o.node_count > 0, "{o:?}");
}

#[test]
fn energy_increases_with_node_count() {
    let nl = Nonlinearity::pure_power(3.0, 3).unwrap();
    let levels: Vec<f64> = (0..3).map(|k| find_bound_state(&nl, 0.0, k, &opts(2001)).unwrap().ihat).collect();
    assert!(levels.windows(2).all(|w| w[1] > w[0]), "{levels:?}");

    let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
    let a = find_bound_state(&nl, 0.0, 0, &opts(2001)).unwrap();
    let b = find_bound_state(&nl, 0.0, 1, &opts(2001)).unwrap();
    assert_eq!(b.u.node_count(), 1);
    assert!(b.ihat > a.ihat);
}

#[test]
fn three_dimensional_ground_state_self_converges() {
    let nl = Nonlinearity::pure_power(3.0, 3).unwrap();
    let e: Vec<f64> = [501, 1001, 2001, 4001]
        .iter()
        .map(|&n| find_bound_state(&nl, 0.0, 0, &opts(n)).unwrap().ihat)
        .collect();
    let order = ((e[1] - e[2]) / (e[2] - e[3])).abs().log2();
    assert!(order > 3.0, "levels {e:?}, observed order {order}");
}

#[test]
fn critical_least_energy_is_half_the_mass() {
    for dim in [2, 3] {
        let q = ground_state_critical(dim, &ShootOptions::default()).unwrap();
        assert_relative_eq!(q.ihat, 0.5 * q.mass, max_relative = 1e-6);
    }
}

#[test]
fn least_energy_under_amplitude_and_shift() {
    // −Δu + (e^λ − C)u = δ|u|^{p−1}u has least energy δ^{−2/(p−1)}(e^λ − C)E₀.
    for dim in [2, 3] {
        let e0 = least_energy_e0(dim, &ShootOptions::default()).unwrap();
        let p = 1.0 + 4.0 / dim as f64;
        for (lambda, c, delta) in [(1.0, 0.7, 0.5), (0.3, 0.2, 2.0)] {
            let nl = Nonlinearity::combined(&[(delta, p)], dim).unwrap();
            let shifted = (f64::exp(lambda) - c).ln();
            let s = find_bound_state(&nl, shifted, 0, &ShootOptions::default()).unwrap();
            let predicted = delta.powf(-2.0 / (p - 1.0)) * (f64::exp(lambda) - c) * e0;
            assert_relative_eq!(s.ihat, predicted, max_relative = 1e-4);
        }
    }
}

#[test]
fn no_even_nodal_states_on_the_line() {
    let nl = Nonlinearity::pure_power(3.0, 1).unwrap();
    assert!(matches!(
        find_bound_state(&nl, 0.0, 1, &ShootOptions::default()),
        Err(Error::BracketNotFound { .. })
    ));
}

#[test]
fn continuation_matches_a_fresh_solve() {
    let nl = Nonlinearity::saturating(3.0, 2.0, 2).unwrap();
    let o = opts(2001);
    let a = find_bound_state(&nl, -2.0, 0, &o).unwrap();
    let b = continue_branch(&nl, &a, -1.8, None, &o).unwrap();
    let grid = ShootOptions::with_grid(b.u.grid.clone());
    let fresh = find_bound_state(&nl, -1.8, 0, &grid).unwrap();
    assert_relative_eq!(b.ihat, fresh.ihat, max_relative = 1e-9);
}

#[test]
fn sweep_keeps_input_order() {
    let nl = Nonlinearity::pure_power(2.0, 2).unwrap();
    let lambdas = [0.5, -0.5, 0.0];
    let out = branch_sweep(&nl, &lambdas, 0, &opts(801));
    for (l, s) in lambdas.iter().zip(out) {
        assert_eq!(s.unwrap().lambda, *l);
    }
}

#[test]
fn saturating_levels_grow_toward_the_threshold() {
    let nl = Nonlinearity::saturating(3.0, 2.0, 2).unwrap();
    let levels: Vec<f64> = [-3.0, -1.0, -0.3, -0.1]
        .iter()
        .map(|&l| find_bound_state(&nl, l, 0, &ShootOptions::default()).unwrap().ihat)
        .collect();
    assert!(levels.windows(2).all(|w| w[1] > w[0]), "{levels:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn accepted_states_satisfy_both_identities(q in 1.6f64..2.8, lambda in -1.5f64..1.5) {
        let nl = Nonlinearity::pure_power(q, 2).unwrap();
        let s = find_bound_state(&nl, lambda, 0, &opts(1001)).unwrap();
        let scale = s.u.grad_sq() + lambda.exp() * s.mass;
        prop_assert!(s.pohozaev_residual <= 1e-6 * scale);
        prop_assert!(s.nehari_residual <= 1e-6 * scale);
        prop_assert_eq!(s.u.node_count(), 0);
        prop_assert!(s.u0 > 0.0);
    }

    #[test]
    fn pure_power_scaling_law(q in 1.6f64..3.5, lambda in -1.0f64..1.0) {
        let nl = Nonlinearity::pure_power(q, 2).unwrap();
        let o = opts(1001);
        let a = find_bound_state(&nl, 0.0, 0, &o).unwrap();
        let b = find_bound_state(&nl, lambda, 0, &o).unwrap();
        let kappa = (q + 1.0) / (q - 1.0) - 1.0;
        prop_assert!((b.ihat / a.ihat / (kappa * lambda).exp() - 1.0).abs() < 1e-8);
        prop_assert!((b.mass / a.mass / ((kappa - 1.0) * lambda).exp() - 1.0).abs() < 1e-8);
    }
}
