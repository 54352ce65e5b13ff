//! Fourier-multiplier operators and the radial Bessel-potential kernel.

use std::f64::consts::PI;

use crate::bessel;
use crate::error::{Error, Result};
use crate::field::{Point, ScalarField};
use crate::spectral::Spectral;

/// Diagonal operator in Fourier space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierOp {
    /// Symbol `|k|^alpha`.
    FractionalLaplacian { alpha: f64 },
    /// Symbol `1/(|k|^2 + gamma)`, zero mode set to 0 when `gamma = 0`.
    HelmholtzInverse { gamma: f64 },
    /// Symbol `exp(-t |k|^alpha)`.
    HeatPropagator { t: f64, alpha: f64 },
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::out_of_range(
            "alpha",
            format!("need 0 < alpha <= 2, got {alpha}"),
        ))
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range(
            "gamma",
            format!("need gamma >= 0, got {gamma}"),
        ))
    }
}

/// `|k|^alpha` from `|k|^2`, exact for `alpha = 2`.
pub(crate) fn frac_power(k2: f64, alpha: f64) -> f64 {
    if alpha == 2.0 {
        k2
    } else if k2 == 0.0 {
        0.0
    } else {
        k2.powf(0.5 * alpha)
    }
}

impl MultiplierOp {
    pub fn fractional_laplacian(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self::FractionalLaplacian { alpha })
    }

    pub fn helmholtz_inverse(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self::HelmholtzInverse { gamma })
    }

    pub fn heat_propagator(t: f64, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::out_of_range("t", format!("need t >= 0, got {t}")));
        }
        Ok(Self::HeatPropagator { t, alpha })
    }

    /// Symbol value at `|k|^2`.
    pub fn symbol(&self, k2: f64) -> f64 {
        match *self {
            Self::FractionalLaplacian { alpha } => frac_power(k2, alpha),
            Self::HelmholtzInverse { gamma } => {
                let d = k2 + gamma;
                if d == 0.0 {
                    0.0
                } else {
                    1.0 / d
                }
            }
            Self::HeatPropagator { t, alpha } => (-t * frac_power(k2, alpha)).exp(),
        }
    }

    /// Applies the operator using a caller-owned plan.
    pub fn apply_with(&self, spectral: &mut Spectral, f: &ScalarField) -> Result<ScalarField> {
        if spectral.grid() != f.grid() {
            return Err(Error::GridMismatch);
        }
        let mut modes = spectral.forward(f.values());
        for (c, &k2) in modes.iter_mut().zip(spectral.k_squared()) {
            *c *= self.symbol(k2);
        }
        Ok(ScalarField::from_raw(*f.grid(), spectral.inverse(modes)))
    }

    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        self.apply_with(&mut Spectral::new(*f.grid()), f)
    }
}

pub fn apply_frac_laplacian(f: &ScalarField, alpha: f64) -> Result<ScalarField> {
    MultiplierOp::fractional_laplacian(alpha)?.apply(f)
}

pub fn helmholtz_inverse(u: &ScalarField, gamma: f64) -> Result<ScalarField> {
    MultiplierOp::helmholtz_inverse(gamma)?.apply(u)
}

pub fn propagate_heat(f: &ScalarField, t: f64, alpha: f64) -> Result<ScalarField> {
    MultiplierOp::heat_propagator(t, alpha)?.apply(f)
}

/// Radial profile `g_gamma(r) = sqrt(gamma) r K1(sqrt(gamma) r)`, with
/// `g_0 = 1` and `g_gamma(0) = 1`.
pub fn g_gamma(r: f64, gamma: f64) -> f64 {
    if gamma == 0.0 || r == 0.0 {
        1.0
    } else {
        bessel::x_k1(gamma.sqrt() * r)
    }
}

/// `grad K_gamma(x) = -(1/2pi) (x/|x|^2) g_gamma(|x|)`.
pub fn grad_k_gamma(x: Point, gamma: f64) -> Result<[f64; 2]> {
    check_gamma(gamma)?;
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2 == 0.0 {
        return Err(Error::SingularPoint);
    }
    let s = -g_gamma(r2.sqrt(), gamma) / (2.0 * PI * r2);
    Ok([s * x[0], s * x[1]])
}

/// Radial Bessel-potential kernel profile for one consumption rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelProfile {
    gamma: f64,
}

/// One row of the kernel table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KernelRow {
    pub r: f64,
    pub gamma: f64,
    pub g_gamma: f64,
    #[serde(rename = "grad_K_radial")]
    pub grad_k_radial: f64,
    pub bound_rhs: f64,
}

impl KernelProfile {
    pub fn new(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn g(&self, r: f64) -> f64 {
        g_gamma(r, self.gamma)
    }

    pub fn grad(&self, x: Point) -> Result<[f64; 2]> {
        grad_k_gamma(x, self.gamma)
    }

    /// Radial component `-(1/2pi) g(r)/r` of the kernel gradient.
    pub fn radial_gradient(&self, r: f64) -> f64 {
        -self.g(r) / (2.0 * PI * r)
    }

    /// `x . grad K(x) = -(1/2pi) g(|x|)`.
    pub fn x_dot_grad(&self, r: f64) -> f64 {
        -self.g(r) / (2.0 * PI)
    }

    /// Right-hand side of the one-sided bound `x . grad K <= -(1/2pi) e^{-sqrt(gamma) r}`.
    pub fn bound_rhs(&self, r: f64) -> f64 {
        -(-self.gamma.sqrt() * r).exp() / (2.0 * PI)
    }

    pub fn row(&self, r: f64) -> KernelRow {
        KernelRow {
            r,
            gamma: self.gamma,
            g_gamma: self.g(r),
            grad_k_radial: self.radial_gradient(r),
            bound_rhs: self.bound_rhs(r),
        }
    }
}

/// Kernel table over the cross product of radii and rates.
pub fn kernel_table(radii: &[f64], gammas: &[f64]) -> Result<Vec<KernelRow>> {
    let mut rows = Vec::with_capacity(radii.len() * gammas.len());
    for &gamma in gammas {
        let profile = KernelProfile::new(gamma)?;
        for &r in radii {
            if !(r > 0.0) {
                return Err(Error::out_of_range(
                    "r",
                    format!("radii must be positive, got {r}"),
                ));
            }
            rows.push(profile.row(r));
        }
    }
    Ok(rows)
}

pub fn write_kernel_table(rows: &[KernelRow], w: impl std::io::Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_gaussian, GridSpec};

    fn grid() -> GridSpec {
        GridSpec::new(64, 2.0 * PI).unwrap()
    }

    #[test]
    fn eigenfunction_scaling() {
        let g = grid();
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x + 2.0 * y).cos());
        let k = 13.0f64.sqrt();
        for &alpha in &[0.5, 1.0, 1.5, 2.0] {
            let out = apply_frac_laplacian(&f, alpha).unwrap();
            let want = f.scaled(k.powf(alpha));
            assert!(out.sub(&want).unwrap().max_abs() < 1e-11);
        }
        assert!(apply_frac_laplacian(&f, 0.0).is_err());
        assert!(apply_frac_laplacian(&f, 2.5).is_err());
    }

    #[test]
    fn helmholtz_single_mode_and_constant() {
        let g = grid();
        let f = ScalarField::from_fn(g, |x, _| (2.0 * x).cos());
        let v = helmholtz_inverse(&f, 3.0).unwrap();
        assert!(v.sub(&f.scaled(1.0 / 7.0)).unwrap().max_abs() < 1e-13);
        let c = helmholtz_inverse(&ScalarField::constant(g, 2.0), 4.0).unwrap();
        assert!((c.max() - 0.5).abs() < 1e-13 && (c.min() - 0.5).abs() < 1e-13);
        let z = helmholtz_inverse(&ScalarField::constant(g, 2.0), 0.0).unwrap();
        assert!(z.max_abs() < 1e-13);
        assert!(helmholtz_inverse(&f, -1.0).is_err());
    }

    #[test]
    fn heat_identity_and_mass() {
        let g = GridSpec::new(64, 20.0).unwrap();
        let u = make_gaussian(g, 3.0, [1.0, 0.0], 0.7).unwrap();
        let same = propagate_heat(&u, 0.0, 1.3).unwrap();
        assert!(same.sub(&u).unwrap().max_abs() < 1e-14);
        let later = propagate_heat(&u, 0.8, 1.3).unwrap();
        assert!((later.total_mass() - u.total_mass()).abs() < 1e-12);
        assert!(propagate_heat(&u, -1.0, 2.0).is_err());
    }

    #[test]
    fn heat_gaussian_spreads() {
        let g = GridSpec::new(256, 40.0).unwrap();
        let s0 = 0.5;
        let t = 0.7;
        let u = make_gaussian(g, 1.0, [0.0, 0.0], s0).unwrap();
        let out = propagate_heat(&u, t, 2.0).unwrap();
        let s2 = s0 * s0 + 2.0 * t;
        let peak = 1.0 / (2.0 * PI * s2);
        assert!((out.max() - peak).abs() / peak < 1e-3);
        let want = make_gaussian(g, 1.0, [0.0, 0.0], s2.sqrt()).unwrap();
        assert!(out.sub(&want).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn g_gamma_limits() {
        assert_eq!(g_gamma(3.0, 0.0), 1.0);
        assert_eq!(g_gamma(0.0, 5.0), 1.0);
        assert!((g_gamma(1e-9, 1.0) - 1.0).abs() < 1e-6);
        let mut prev = 1.0;
        for i in 1..200 {
            let v = g_gamma(0.05 * i as f64, 2.0);
            assert!(v <= prev && v >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn grad_k_formula() {
        let g = grad_k_gamma([1.0, 0.0], 0.0).unwrap();
        assert!((g[0] + 1.0 / (2.0 * PI)).abs() < 1e-15 && g[1] == 0.0);
        assert!(matches!(
            grad_k_gamma([0.0, 0.0], 1.0),
            Err(Error::SingularPoint)
        ));
        let a = grad_k_gamma([0.6, 0.8], 2.0).unwrap();
        let b = grad_k_gamma([1.0, 0.0], 2.0).unwrap();
        assert!((a[0].hypot(a[1]) - b[0].hypot(b[1])).abs() < 1e-15);
    }

    #[test]
    fn table_csv_header() {
        let rows = kernel_table(&[0.5, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(rows.len(), 4);
        let mut buf = Vec::new();
        write_kernel_table(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,gamma,g_gamma,grad_K_radial,bound_rhs\n"));
        assert!(kernel_table(&[0.0], &[1.0]).is_err());
    }
}
