use std::f64::consts::PI;

use proptest::prelude::*;

use kslab::criteria::{
    check_case_i, check_case_ii, check_case_iii, log_space, morrey_norm, CertificateSearch,
    MorreySearch,
};
use kslab::error::Error;
use kslab::field::{make_gaussian, GridSpec, ScalarField};

fn dense_search(grid: &GridSpec, count: usize) -> MorreySearch {
    MorreySearch {
        radii: log_space(2.0 * grid.dx(), grid.box_length() / 4.0, count),
        center_stride: 1,
    }
}

#[test]
fn morrey_of_gaussian_matches_radial_oracle() {
    let grid = GridSpec::new(256, 16.0).unwrap();
    let s = 0.5;
    let u = make_gaussian(grid, 1.0, [0.0, 0.0], s).unwrap();
    let est = morrey_norm(&u, 2.0, &dense_search(&grid, 64)).unwrap();
    // sup_R R^-1 (1 - exp(-R^2 / 2 s^2)) on a fine radial grid
    let oracle = (1..200_000)
        .map(|i| {
            let r = i as f64 * 1e-5 * 4.0;
            (1.0 - (-r * r / (2.0 * s * s)).exp()) / r
        })
        .fold(0.0, f64::max);
    assert!(
        (est.value - oracle).abs() < 0.01 * oracle,
        "{} vs {oracle}",
        est.value
    );
    assert_eq!(est.center, [0.0, 0.0]);
    assert!(est.radius > s && est.radius < 3.0 * s);
    assert!(est.value >= est.radius.powf(-1.0) * est.ball_mass * (1.0 - 1e-12));
}

#[test]
fn morrey_estimate_is_scale_invariant_at_critical_exponent() {
    for &alpha in &[2.0f64, 1.5] {
        let lambda = 2.0;
        let grid = GridSpec::new(256, 16.0).unwrap();
        let scaled = grid.rescaled(1.0 / lambda).unwrap();
        let u = make_gaussian(grid, 3.0, [0.0, 0.0], 0.6).unwrap();
        // u_lambda(x) = lambda^alpha u(lambda x) sampled on the shrunken grid
        let u_l = ScalarField::new(
            scaled,
            u.values().iter().map(|v| lambda.powf(alpha) * v).collect(),
        )
        .unwrap();
        let search = dense_search(&grid, 24);
        let search_l = MorreySearch {
            radii: search.radii.iter().map(|r| r / lambda).collect(),
            center_stride: 1,
        };
        let p = 2.0 / alpha;
        let a = morrey_norm(&u, p, &search).unwrap();
        let b = morrey_norm(&u_l, p, &search_l).unwrap();
        assert!(
            (a.value - b.value).abs() < 0.03 * a.value,
            "alpha {alpha}: {} vs {}",
            a.value,
            b.value
        );
    }
}

fn field_strategy() -> impl Strategy<Value = ScalarField> {
    proptest::collection::vec(0.0f64..1.0, 32 * 32)
        .prop_map(|v| ScalarField::new(GridSpec::new(32, 8.0).unwrap(), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn morrey_is_homogeneous_with_fixed_witness(u in field_strategy(), c in 0.01f64..100.0, p in 1.0f64..3.0) {
        let search = MorreySearch::default_for(u.grid());
        let a = morrey_norm(&u, p, &search).unwrap();
        let b = morrey_norm(&u.scaled(c), p, &search).unwrap();
        prop_assert!((b.value - c * a.value).abs() <= 1e-10 * c * a.value);
        prop_assert_eq!(a.center, b.center);
        prop_assert_eq!(a.radius, b.radius);
    }

    #[test]
    fn larger_search_never_lowers_the_estimate(u in field_strategy(), p in 1.0f64..3.0) {
        let grid = *u.grid();
        let coarse = MorreySearch { radii: log_space(0.5, 2.0, 4), center_stride: 2 };
        let fine = MorreySearch { radii: log_space(0.5, 2.0, 7), center_stride: 1 };
        let a = morrey_norm(&u, p, &coarse).unwrap();
        let b = morrey_norm(&u, p, &fine).unwrap();
        prop_assert!(b.value >= a.value * (1.0 - 1e-12));
        prop_assert!(a.radius <= grid.box_length() / 4.0);
    }

    #[test]
    fn case_i_ignores_arrangement(u in field_strategy(), shift in 0usize..1024) {
        let mut v = u.values().to_vec();
        v.rotate_left(shift);
        let moved = ScalarField::new(*u.grid(), v).unwrap();
        prop_assert_eq!(check_case_i(&u).unwrap(), check_case_i(&moved).unwrap());
    }
}

#[test]
fn case_i_threshold_and_sign_check() {
    let grid = GridSpec::new(64, 16.0).unwrap();
    let g = |m: f64| make_gaussian(grid, m, [0.0, 0.0], 0.8).unwrap();
    assert!(!check_case_i(&g(4.0 * PI)).unwrap());
    assert!(check_case_i(&g(16.0 * PI)).unwrap());
    let mut neg = g(16.0 * PI);
    neg.values_mut()[0] = -1e-3;
    assert!(matches!(check_case_i(&neg), Err(Error::NegativeData(_))));
}

#[test]
fn case_ii_certificate_on_wide_screening_box() {
    // strongly concentrated supercritical data, weak consumption
    let grid = GridSpec::new(512, 12.0 * PI).unwrap();
    let u = make_gaussian(grid, 16.0 * PI, [0.0, 0.0], 0.2).unwrap();
    let search = CertificateSearch::default_for(&grid);
    let cert = check_case_ii(&u, 0.01, &search)
        .unwrap()
        .expect("certificate");
    assert!(cert.margin > 0.0 && cert.holds());
    assert!(cert.radius <= grid.box_length() / 4.0);
    assert!((cert.margin - 0.086).abs() < 0.01, "margin {}", cert.margin);
}

#[test]
fn case_ii_absent_without_long_range_attraction() {
    let grid = GridSpec::new(512, 12.0 * PI).unwrap();
    let search = CertificateSearch::default_for(&grid);
    let u = make_gaussian(grid, 16.0 * PI, [0.0, 0.0], 0.2).unwrap();
    // the screening factor kills the kernel term for large gamma; for
    // gamma = 1 the outer-mass penalty at the admissible radii still wins
    assert!(check_case_ii(&u, 1e4, &search).unwrap().is_none());
    assert!(check_case_ii(&u, 1.0, &search).unwrap().is_none());
    let sub = make_gaussian(grid, 4.0 * PI, [0.0, 0.0], 0.2).unwrap();
    assert!(check_case_ii(&sub, 0.01, &search).unwrap().is_none());
    assert!(check_case_ii(&u, 0.0, &search).is_err());
}

#[test]
fn case_iii_certificate_and_rescaling() {
    let alpha = 1.5;
    let grid = GridSpec::new(512, 8.0).unwrap();
    let search = CertificateSearch::default_for(&grid);
    let u = make_gaussian(grid, 40.0, [0.0, 0.0], 0.05).unwrap();
    let cert = check_case_iii(&u, alpha, 0.0, &search)
        .unwrap()
        .expect("certificate");
    assert!(cert.margin > 0.0);

    // u_lambda(x) = lambda^alpha u(lambda x) keeps R^(alpha-2) M_R fixed
    let lambda = 4.0;
    let small = grid.rescaled(1.0 / lambda).unwrap();
    let u_l = ScalarField::new(
        small,
        u.values().iter().map(|v| lambda.powf(alpha) * v).collect(),
    )
    .unwrap();
    let search_l = CertificateSearch {
        radii: search.radii.iter().map(|r| r / lambda).collect(),
        ..search.clone()
    };
    let cert_l = check_case_iii(&u_l, alpha, 0.0, &search_l)
        .unwrap()
        .expect("rescaled certificate");
    assert!((cert_l.radius * lambda - cert.radius).abs() < 1e-9);

    // too little mass, or too spread out
    let light = make_gaussian(grid, 1.0, [0.0, 0.0], 0.05).unwrap();
    assert!(check_case_iii(&light, alpha, 0.0, &search)
        .unwrap()
        .is_none());
    let wide_grid = GridSpec::new(256, 64.0).unwrap();
    let wide = make_gaussian(wide_grid, 40.0, [0.0, 0.0], 5.0).unwrap();
    let wide_search = CertificateSearch::default_for(&wide_grid);
    assert!(check_case_iii(&wide, alpha, 0.0, &wide_search)
        .unwrap()
        .is_none());
    assert!(check_case_iii(&u, 2.0, 0.0, &search).is_err());
}
