use std::f64::consts::PI;

use proptest::prelude::*;

use kslab::field::{make_gaussian, GridSpec, ScalarField};
use kslab::mild::{
    bilinear_b, default_nodes, gaussian_samples, heat_trajectory, picard_iterate, weighted_norm,
    Interaction, Trajectory, WeightedNorm,
};

fn uniform_nodes(h: f64, t_max: f64) -> Vec<f64> {
    let m = (t_max / h).round() as usize;
    (1..=m).map(|i| i as f64 * h).collect()
}

/// `u = cos(x)`, `z(s) = e^{-mu s} cos(x + y)` on the 2 pi torus. The flux
/// divergence has the two modes `q = (2, 1)` and `q = (0, 1)`, each integrated
/// exactly against the heat propagator.
fn two_mode_oracle(x: f64, y: f64, t: f64, gamma: f64, mu: f64) -> f64 {
    let k2 = [1.0, 1.0];
    let k2_sq = 2.0;
    [[2.0, 1.0], [0.0, 1.0]]
        .iter()
        .map(|q: &[f64; 2]| {
            let q_sq = q[0] * q[0] + q[1] * q[1];
            let dot = k2[0] * q[0] + k2[1] * q[1];
            let time = ((-mu * t).exp() - (-q_sq * t).exp()) / (q_sq - mu);
            dot / (2.0 * (k2_sq + gamma)) * (q[0] * x + q[1] * y).cos() * time
        })
        .sum()
}

#[test]
fn bilinear_term_matches_two_mode_oracle() {
    let (gamma, mu, t_max) = (1.0, 3.0, 1.0);
    let grid = GridSpec::new(16, 2.0 * PI).unwrap();
    let nodes = uniform_nodes(2.5e-4, t_max);
    let u = ScalarField::from_fn(grid, |x, _| x.cos());
    let u_traj = Trajectory::new(nodes.clone(), vec![u; nodes.len()]).unwrap();
    let z_fields = nodes
        .iter()
        .map(|&s| ScalarField::from_fn(grid, |x, y| (-mu * s).exp() * (x + y).cos()))
        .collect();
    let z_traj = Trajectory::new(nodes.clone(), z_fields).unwrap();

    let mut inter = Interaction::new(&u_traj, &z_traj, gamma).unwrap();
    for &t in &[0.1, 0.5, 1.0] {
        let b = inter.evaluate(t).unwrap();
        let exact = ScalarField::from_fn(grid, |x, y| two_mode_oracle(x, y, t, gamma, mu));
        let err = b.field.sub(&exact).unwrap().max_abs();
        assert!(err < 1e-6, "t {t}: error {err}");
    }
    let all = inter.at_nodes().unwrap();
    let exact = ScalarField::from_fn(grid, |x, y| two_mode_oracle(x, y, t_max, gamma, mu));
    assert!(all.last().sub(&exact).unwrap().max_abs() < 1e-6);
}

fn gaussian_traj(grid: GridSpec, mass: f64, center: [f64; 2], norm: &WeightedNorm) -> Trajectory {
    let u0 = make_gaussian(grid, mass, center, 0.8).unwrap();
    heat_trajectory(&u0, norm, &default_nodes(norm.t_max).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bilinear_and_mass_free(a in 0.1f64..3.0, b in 0.1f64..3.0, cx in -2.0f64..2.0, gamma in 0.0f64..5.0) {
        let grid = GridSpec::new(64, 16.0).unwrap();
        let norm = WeightedNorm::local(1.5, 1.0).unwrap();
        let u = gaussian_traj(grid, 1.0, [cx, 0.0], &norm);
        let z = gaussian_traj(grid, 2.0, [0.0, 1.0], &norm);
        let base = bilinear_b(&u, &z, 1.0, gamma).unwrap().field;
        let scaled = bilinear_b(&u.scaled(a), &z.scaled(b), 1.0, gamma).unwrap().field;
        let err = scaled.sub(&base.scaled(a * b)).unwrap().max_abs();
        prop_assert!(err <= 1e-12 * (1.0 + a * b * base.max_abs()));
        prop_assert!(base.total_mass().abs() < 1e-12);
    }
}

#[test]
fn heat_trajectory_obeys_the_l1_to_lp_bound() {
    let grid = GridSpec::new(256, 24.0).unwrap();
    let mass = 2.0;
    let u0 = make_gaussian(grid, mass, [0.0, 0.0], 0.3).unwrap();
    for &p in &[1.5, 2.0, 4.0] {
        let norm = WeightedNorm::local(p, 1.0).unwrap();
        let traj = heat_trajectory(&u0, &norm, &default_nodes(1.0).unwrap()).unwrap();
        // ||e^{t Delta} f||_p <= ||G_t||_p ||f||_1 with the heat kernel G_t
        let bound = mass * (4.0 * PI).powf(-(1.0 - 1.0 / p)) * p.powf(-1.0 / p);
        let value = weighted_norm(&traj, &norm).unwrap();
        assert!(value <= bound * (1.0 + 1e-9), "p {p}: {value} > {bound}");
        assert!(value > 0.5 * bound);
    }
}

#[test]
fn picard_from_zero_is_zero() {
    let grid = GridSpec::new(32, 16.0).unwrap();
    let norm = WeightedNorm::local(1.5, 1.0).unwrap();
    let report = picard_iterate(
        &ScalarField::zeros(grid),
        1.0,
        &norm,
        &default_nodes(1.0).unwrap(),
        10,
        1e-10,
    )
    .unwrap();
    assert!(report.converged && !report.diverged);
    assert_eq!(report.limit.last().max_abs(), 0.0);
}

#[test]
fn picard_diverges_for_large_supercritical_data() {
    let grid = GridSpec::new(128, 10.0 * PI).unwrap();
    let u0 = make_gaussian(grid, 16.0 * PI, [0.0, 0.0], 0.5).unwrap();
    let norm = WeightedNorm::local(1.5, 1.0).unwrap();
    let report = picard_iterate(&u0, 0.0, &norm, &default_nodes(1.0).unwrap(), 30, 1e-10).unwrap();
    assert!(report.diverged && !report.converged);
    assert!(report.max_ratio() > 1.0);
}

#[test]
fn gaussian_samples_are_reproducible() {
    let a = gaussian_samples(3, 4, (0.01, 1.0), 128).unwrap();
    let b = gaussian_samples(3, 4, (0.01, 1.0), 128).unwrap();
    let c = gaussian_samples(4, 4, (0.01, 1.0), 128).unwrap();
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.nodes(), y.nodes());
        assert_eq!(x.last().values(), y.last().values());
    }
    assert!(a.iter().zip(&c).any(|(x, y)| x.nodes() != y.nodes()));
}
