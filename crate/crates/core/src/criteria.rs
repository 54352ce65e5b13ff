//! Morrey-norm estimation and the three sufficient blowup criteria.
//!
//! Local masses `M_R(x0)` and moments `w_R(x0)` are evaluated for every grid
//! point at once as periodic convolutions, so searches cover the full
//! grid-point lattice of admissible centers (balls must stay inside the box).

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{GridSpec, Point, ScalarField};
use crate::kernel::{check_alpha, check_gamma};
use crate::moments::{psi_r, BoundConstants, EPSILON_MAX};
use crate::spectral::Fft2;

/// Largest admissible ball radius as a fraction of the box length.
pub const MAX_RADIUS_FRACTION: f64 = 0.25;

/// Best scaled ball mass found by [`morrey_norm`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MorreyEstimate {
    pub p: f64,
    pub value: f64,
    pub center: Point,
    pub radius: f64,
    pub ball_mass: f64,
}

/// Finite search set: radii times grid-point centers on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct MorreySearch {
    pub radii: Vec<f64>,
    /// Lattice stride in grid points; the lattice always contains the origin.
    pub center_stride: usize,
}

impl MorreySearch {
    /// 16 log-spaced radii in `[4 dx, L/8]`, every grid point as a center.
    pub fn default_for(grid: &GridSpec) -> Self {
        Self {
            radii: log_space(4.0 * grid.dx(), grid.box_length() / 8.0, 16),
            center_stride: 1,
        }
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| match i {
            0 => lo,
            i if i == count - 1 => hi,
            i => (a + (b - a) * i as f64 / (count - 1) as f64).exp(),
        })
        .collect()
}

/// Ball sums for one radius at every grid point (row-major, row = x).
struct BallSums {
    radius: f64,
    mass: Vec<f64>,
    moment: Vec<f64>,
}

fn ball_sums(u: &ScalarField, radii: &[f64], with_moment: bool) -> Vec<BallSums> {
    let grid = *u.grid();
    let n = grid.n();
    let mut fft = Fft2::new(n);
    let u_hat = fft.forward_real(u.values());
    radii
        .par_iter()
        .map_init(
            || Fft2::new(n),
            |fft, &r| {
                let dx = grid.dx();
                let disp = |i: usize| {
                    let m = if i <= n / 2 {
                        i as f64
                    } else {
                        i as f64 - n as f64
                    };
                    m * dx
                };
                let r2 = r * r;
                let convolve = |fft: &mut Fft2, kernel: Vec<f64>| -> Vec<f64> {
                    let mut k_hat = fft.forward_real(&kernel);
                    for (k, &v) in k_hat.iter_mut().zip(&u_hat) {
                        *k *= v;
                    }
                    let area = grid.cell_area();
                    fft.inverse_real(&mut k_hat)
                        .into_iter()
                        .map(|s| s * area)
                        .collect()
                };
                let mut indicator = vec![0.0; n * n];
                let mut bump = vec![0.0; n * n];
                for i in 0..n {
                    let x = disp(i);
                    for j in 0..n {
                        let y = disp(j);
                        if x * x + y * y < r2 {
                            indicator[i * n + j] = 1.0;
                        }
                        bump[i * n + j] = psi_r([x, y], r);
                    }
                }
                let mass = convolve(fft, indicator);
                let moment = if with_moment {
                    convolve(fft, bump)
                } else {
                    Vec::new()
                };
                BallSums {
                    radius: r,
                    mass,
                    moment,
                }
            },
        )
        .collect()
}

/// Grid points on the lattice whose ball of radius `r` stays inside the box.
fn admissible_centers(grid: &GridSpec, r: f64, stride: usize) -> Vec<(usize, usize)> {
    let n = grid.n();
    let half = 0.5 * grid.box_length();
    let stride = stride.max(1);
    let origin = n / 2;
    let axis: Vec<usize> = (0..n)
        .filter(|&i| (i as i64 - origin as i64).rem_euclid(stride as i64) == 0)
        .filter(|&i| grid.coord(i).abs() + r <= half)
        .collect();
    let mut out = Vec::with_capacity(axis.len() * axis.len());
    for &i in &axis {
        for &j in &axis {
            out.push((i, j));
        }
    }
    out
}

fn check_radii(grid: &GridSpec, radii: &[f64]) -> Result<()> {
    let cap = MAX_RADIUS_FRACTION * grid.box_length();
    for &r in radii {
        if !(r > 0.0 && r <= cap) {
            return Err(Error::out_of_range(
                "radius",
                format!("search radius {r} outside (0, L/4 = {cap}]"),
            ));
        }
    }
    Ok(())
}

/// Lower estimate of `sup_{R, x} R^{2(1/p - 1)} int_{|y - x| < R} u` over the
/// search set. Ties go to the smallest radius, then the smallest center
/// (x first, then y).
pub fn morrey_norm(u: &ScalarField, p: f64, search: &MorreySearch) -> Result<MorreyEstimate> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::out_of_range("p", format!("need p >= 1, got {p}")));
    }
    let grid = *u.grid();
    check_radii(&grid, &search.radii)?;
    let mut radii = search.radii.clone();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let exponent = 2.0 * (1.0 / p - 1.0);
    let n = grid.n();
    let mut best: Option<MorreyEstimate> = None;
    for sums in ball_sums(u, &radii, false) {
        let scale = sums.radius.powf(exponent);
        for (i, j) in admissible_centers(&grid, sums.radius, search.center_stride) {
            let m = sums.mass[i * n + j];
            let value = scale * m;
            if best.is_none_or(|b| value > b.value) {
                best = Some(MorreyEstimate {
                    p,
                    value,
                    center: grid.point(i, j),
                    radius: sums.radius,
                    ball_mass: m,
                });
            }
        }
    }
    best.ok_or(Error::EmptySearch)
}

/// Rejects data whose negative part carries more than `1e-10` mass.
fn check_nonnegative(u0: &ScalarField) -> Result<()> {
    let neg = u0.negative_mass();
    if neg > 1e-10 {
        Err(Error::NegativeData(neg))
    } else {
        Ok(())
    }
}

/// Case (i): classical diffusion without consumption blows up iff `M > 8 pi`.
pub fn check_case_i(u0: &ScalarField) -> Result<bool> {
    check_nonnegative(u0)?;
    Ok(u0.total_mass() > 8.0 * PI)
}

/// Which sufficient condition a certificate was searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    I,
    Ii,
    Iii,
}

/// Radii, concavity radii and center lattice for a certificate search.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateSearch {
    pub radii: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub center_stride: usize,
}

impl CertificateSearch {
    /// 24 log-spaced radii in `[4 dx, L/4]`, `epsilon` in
    /// `{0.05, 0.10, ..., 0.55}` and every grid point as a center.
    pub fn default_for(grid: &GridSpec) -> Self {
        Self {
            radii: log_space(4.0 * grid.dx(), MAX_RADIUS_FRACTION * grid.box_length(), 24),
            epsilons: default_epsilons(),
            center_stride: 1,
        }
    }
}

/// `{0.05, 0.10, ..., 0.55}`, all below `1/sqrt(3)`.
pub fn default_epsilons() -> Vec<f64> {
    (1..=11)
        .map(|k| 0.05 * k as f64)
        .filter(|&e| e < EPSILON_MAX)
        .collect()
}

/// Witness and the full constant ledger of a certificate search.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BlowupCertificate {
    pub case: Case,
    pub center: Point,
    pub radius: f64,
    pub epsilon: f64,
    pub mass: f64,
    /// `M_R` at the witness.
    pub ball_mass: f64,
    /// `w_R` at the witness.
    pub local_moment: f64,
    /// Mass outside the ball, `M - M_R`.
    pub outer_mass: f64,
    /// Case (ii): `exp(-sqrt(gamma) R) M_R`; case (iii): `R^{alpha-2} M_R`.
    pub lhs: f64,
    /// Case (ii): `8 pi`; case (iii): the computed threshold `C` that
    /// `R^{alpha-2} M_R` has to exceed.
    pub threshold: f64,
    /// Admissible deficit `((theta/4pi) R^{a-2} g M_R - k_alpha) / (C(eps) R^{a-2})`;
    /// positivity holds iff `M - w_R < nu`.
    pub nu: f64,
    pub constants: BoundConstants,
    /// The bracketed factor of the moment bound at `t = 0`; positive iff the
    /// growth condition holds.
    pub margin: f64,
}

impl BlowupCertificate {
    pub fn holds(&self) -> bool {
        self.margin > 0.0
    }
}

/// Best certificate over the search set, whether or not its margin is
/// positive. Ties go to the smallest radius, then the smallest epsilon, then
/// the smallest center.
pub fn best_certificate(
    u0: &ScalarField,
    alpha: f64,
    gamma: f64,
    case: Case,
    search: &CertificateSearch,
) -> Result<BlowupCertificate> {
    check_alpha(alpha)?;
    check_gamma(gamma)?;
    check_nonnegative(u0)?;
    let grid = *u0.grid();
    check_radii(&grid, &search.radii)?;
    let mut radii = search.radii.clone();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let mut epsilons = search.epsilons.clone();
    epsilons.sort_by(f64::total_cmp);
    epsilons.dedup();
    let mass = u0.total_mass();
    let n = grid.n();
    let mut best: Option<BlowupCertificate> = None;
    for sums in ball_sums(u0, &radii, true) {
        let r = sums.radius;
        let centers = admissible_centers(&grid, r, search.center_stride);
        for &eps in &epsilons {
            let constants = BoundConstants::new(alpha, gamma, r, eps)?;
            let scale = r.powf(alpha - 2.0);
            for &(i, j) in &centers {
                let w = sums.moment[i * n + j];
                let m = sums.mass[i * n + j];
                let margin = constants.evaluate(w, m, mass).parenthesized;
                if best.as_ref().is_none_or(|b| margin > b.margin) {
                    let gain = constants.theta / (4.0 * PI) * constants.g;
                    let (lhs, threshold) = match case {
                        Case::Ii => ((-gamma.sqrt() * r).exp() * m, 8.0 * PI),
                        _ => (
                            scale * m,
                            (constants.k_alpha + constants.c_of_eps * scale * (mass - w)) / gain,
                        ),
                    };
                    best = Some(BlowupCertificate {
                        case,
                        center: grid.point(i, j),
                        radius: r,
                        epsilon: eps,
                        mass,
                        ball_mass: m,
                        local_moment: w,
                        outer_mass: mass - m,
                        lhs,
                        threshold,
                        nu: (gain * scale * m - constants.k_alpha) / (constants.c_of_eps * scale),
                        constants,
                        margin,
                    });
                }
            }
        }
    }
    best.ok_or(Error::EmptySearch)
}

/// Case (ii): classical diffusion with consumption `gamma > 0`.
pub fn check_case_ii(
    u0: &ScalarField,
    gamma: f64,
    search: &CertificateSearch,
) -> Result<Option<BlowupCertificate>> {
    if !(gamma > 0.0) {
        return Err(Error::out_of_range("gamma", "case (ii) needs gamma > 0"));
    }
    let best = best_certificate(u0, 2.0, gamma, Case::Ii, search)?;
    Ok(best.holds().then_some(best))
}

/// Case (iii): fractional diffusion `0 < alpha < 2`.
pub fn check_case_iii(
    u0: &ScalarField,
    alpha: f64,
    gamma: f64,
    search: &CertificateSearch,
) -> Result<Option<BlowupCertificate>> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::out_of_range(
            "alpha",
            "case (iii) needs 0 < alpha < 2",
        ));
    }
    let best = best_certificate(u0, alpha, gamma, Case::Iii, search)?;
    Ok(best.holds().then_some(best))
}
