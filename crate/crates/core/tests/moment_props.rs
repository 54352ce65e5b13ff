use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kslab::field::{make_gaussian, GridSpec, ScalarField};
use kslab::kernel::{apply_frac_laplacian, g_gamma, grad_k_gamma};
use kslab::moments::{
    ball_mass, constant_c_eps, frac_laplacian_psi, grad_psi, hessian_norm_sup, hessian_psi,
    local_moment, moment_rhs_lower_bound, psi, psi_r, sup_x_dot_grad_k, theta, BumpProbe,
    KAlphaParams,
};

fn disc_point(rng: &mut ChaCha8Rng, radius: f64) -> [f64; 2] {
    let r = radius * rng.gen::<f64>().sqrt();
    let a = 2.0 * PI * rng.gen::<f64>();
    [r * a.cos(), r * a.sin()]
}

#[test]
fn gradient_is_strongly_monotone_near_the_center() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &eps in &[0.1, 0.3, 0.5] {
        let th = theta(eps).unwrap();
        for _ in 0..10_000 {
            let x = disc_point(&mut rng, eps);
            let y = disc_point(&mut rng, eps);
            let (gx, gy) = (grad_psi(x), grad_psi(y));
            let d = [x[0] - y[0], x[1] - y[1]];
            let lhs = d[0] * (gx[0] - gy[0]) + d[1] * (gx[1] - gy[1]);
            let d2 = d[0] * d[0] + d[1] * d[1];
            assert!(lhs <= -th * d2 + 1e-14, "eps {eps}: {lhs} > {}", -th * d2);
        }
    }
}

#[test]
fn hessian_eigenvalues_below_minus_theta() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for &eps in &[0.1, 0.3, 0.5] {
        let th = theta(eps).unwrap();
        for _ in 0..1000 {
            let e = hessian_psi(disc_point(&mut rng, eps)).eigenvalues();
            assert!(e[0].max(e[1]) <= -th + 1e-12);
        }
    }
}

#[test]
fn kernel_concavity_cross_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for &gamma in &[0.0, 0.01, 1.0, 100.0] {
        for &eps in &[0.1, 0.3, 0.5] {
            let th = theta(eps).unwrap();
            for _ in 0..2000 {
                let x = disc_point(&mut rng, eps);
                let y = disc_point(&mut rng, eps);
                let d = [x[0] - y[0], x[1] - y[1]];
                let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if r < 1e-9 {
                    continue;
                }
                let gk = grad_k_gamma(d, gamma).unwrap();
                let (gx, gy) = (grad_psi(x), grad_psi(y));
                let lhs = gk[0] * (gx[0] - gy[0]) + gk[1] * (gx[1] - gy[1]);
                let rhs = th / (2.0 * PI) * g_gamma(r, gamma);
                assert!(lhs >= rhs - 1e-12, "gamma {gamma} eps {eps}: {lhs} < {rhs}");
            }
        }
    }
}

#[test]
fn hessian_operator_norm_is_eight_at_the_rim() {
    let (value, r) = hessian_norm_sup();
    assert!((value - 8.0).abs() < 1e-10);
    assert!((r - 1.0).abs() < 1e-6);
}

#[test]
fn kernel_moment_supremum_is_one_over_two_pi() {
    for &gamma in &[0.0, 0.01, 1.0, 1e4] {
        let s = sup_x_dot_grad_k(gamma).unwrap();
        assert!((s - 1.0 / (2.0 * PI)).abs() < 1e-8, "gamma {gamma}: {s}");
    }
}

#[test]
fn constant_c_eps_values() {
    assert!((constant_c_eps(0.5).unwrap() - 1.0 / (1.0 - 0.5625)).abs() < 1e-14);
    assert!(constant_c_eps(0.0).is_err());
    assert!(constant_c_eps(0.6).is_err());
}

#[test]
fn half_laplacian_of_bump_is_nonpositive_outside_support() {
    let params = KAlphaParams::default();
    for i in 0..40 {
        let r = 1.01 + 1.99 * i as f64 / 39.0;
        let v = frac_laplacian_psi(r, 1.0, &params).unwrap();
        assert!(v.value <= 1e-8, "r {r}: {}", v.value);
    }
}

#[test]
fn spectral_fractional_laplacian_scales_with_the_bump() {
    // grids with the same N and box lengths L, 2L share nodes up to a factor 2
    let alpha = 1.5;
    let (n, l) = (256, 6.0);
    let small = GridSpec::new(n, l).unwrap();
    let large = GridSpec::new(n, 2.0 * l).unwrap();
    let a = apply_frac_laplacian(&ScalarField::from_fn(small, |x, y| psi([x, y])), alpha).unwrap();
    let b = apply_frac_laplacian(
        &ScalarField::from_fn(large, |x, y| psi_r([x, y], 2.0)),
        alpha,
    )
    .unwrap();
    let scale = 2f64.powf(-alpha);
    let err = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (scale * x - y).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-6, "error {err}");
}

#[test]
fn moments_of_constant_field() {
    let grid = GridSpec::new(256, 16.0).unwrap();
    let c = 0.7;
    let u = ScalarField::constant(grid, c);
    let probe = BumpProbe::new([0.5, -0.25], 3.0, 0.3).unwrap();
    let w = local_moment(&u, &probe).unwrap();
    let m = ball_mass(&u, &probe).unwrap();
    assert!((w - c * PI * 9.0 / 3.0).abs() < 1e-3 * w);
    assert!((m - c * PI * 9.0).abs() < 2e-2 * m);
}

#[test]
fn concentrated_bound_changes_sign_at_eight_pi() {
    let (r, eps) = (1.0, 1e-4);
    for &(mass, positive) in &[(6.0 * PI, false), (10.0 * PI, true)] {
        let b = moment_rhs_lower_bound(mass, mass, mass, r, 2.0, 0.0, eps).unwrap();
        let limit = mass * (-8.0 + mass / PI);
        assert!(
            (b.rhs - limit).abs() < 1e-3 * limit.abs(),
            "{} vs {limit}",
            b.rhs
        );
        assert_eq!(b.parenthesized > 0.0, positive);
    }
    let empty = moment_rhs_lower_bound(0.0, 0.0, 5.0, 1.0, 2.0, 0.0, 0.3).unwrap();
    assert_eq!(empty.rhs, 0.0);
}

fn field_strategy() -> impl Strategy<Value = ScalarField> {
    proptest::collection::vec(0.0f64..1.0, 32 * 32)
        .prop_map(|v| ScalarField::new(GridSpec::new(32, 8.0).unwrap(), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moment_is_nondecreasing_in_radius(u in field_strategy(), cx in -0.5f64..0.5, cy in -0.5f64..0.5) {
        let mut prev = 0.0;
        for k in 1..=8 {
            let r = 0.2 * k as f64;
            let w = local_moment(&u, &BumpProbe::new([cx, cy], r, 0.3).unwrap()).unwrap();
            prop_assert!(w >= prev - 1e-12);
            prev = w;
        }
    }

    #[test]
    fn moment_below_ball_mass_below_total(u in field_strategy(), r in 0.3f64..2.0) {
        let probe = BumpProbe::new([0.0, 0.0], r, 0.3).unwrap();
        let w = local_moment(&u, &probe).unwrap();
        let m = ball_mass(&u, &probe).unwrap();
        prop_assert!(w <= m + 1e-12);
        prop_assert!(m <= u.total_mass() + 1e-12);
    }

    #[test]
    fn moment_is_linear(u in field_strategy(), c in 0.0f64..10.0) {
        let probe = BumpProbe::new([0.25, 0.0], 1.5, 0.3).unwrap();
        let w = local_moment(&u, &probe).unwrap();
        let wc = local_moment(&u.scaled(c), &probe).unwrap();
        prop_assert!((wc - c * w).abs() <= 1e-12 * (1.0 + c * w));
    }
}

#[test]
fn gaussian_moment_matches_radial_quadrature() {
    let grid = GridSpec::new(256, 16.0).unwrap();
    let (mass, s) = (3.0, 0.6);
    let u = make_gaussian(grid, mass, [0.0, 0.0], s).unwrap();
    let r = 1.5;
    let w = local_moment(&u, &BumpProbe::new([0.0, 0.0], r, 0.3).unwrap()).unwrap();
    // int_0^R (1 - rho^2/R^2)^2 exp(-rho^2/2s^2) rho d rho * M/s^2, by Simpson
    let m = 2000;
    let h = r / m as f64;
    let f = |rho: f64| {
        let q = 1.0 - rho * rho / (r * r);
        q * q * (-rho * rho / (2.0 * s * s)).exp() * rho
    };
    let mut acc = f(0.0) + f(r);
    for i in 1..m {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let oracle = mass / (s * s) * acc * h / 3.0;
    assert!((w - oracle).abs() < 1e-5 * oracle, "{w} vs {oracle}");
}
