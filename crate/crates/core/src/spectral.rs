//! Two-dimensional FFT plans and per-grid spectral tables.
//!
//! A plan owns scratch space, so each worker keeps its own [`Spectral`].

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::GridSpec;

/// Square 2D complex FFT built from row transforms and transposes.
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::default(); len],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        let plan = Arc::clone(&self.forward);
        self.pass(plan.as_ref(), data);
    }

    /// Unnormalized inverse transform in place (no `1/N^2` factor).
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let plan = Arc::clone(&self.inverse);
        self.pass(plan.as_ref(), data);
    }

    fn pass(&mut self, plan: &dyn Fft<f64>, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n * self.n, "buffer does not match plan");
        plan.process_with_scratch(data, &mut self.scratch);
        transpose(data, self.n);
        plan.process_with_scratch(data, &mut self.scratch);
        transpose(data, self.n);
    }

    pub fn forward_real(&mut self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    /// Inverse transform with `1/N^2` normalization, keeping the real part.
    pub fn inverse_real(&mut self, modes: &mut [Complex64]) -> Vec<f64> {
        self.inverse(modes);
        let scale = 1.0 / (self.n * self.n) as f64;
        modes.iter().map(|c| c.re * scale).collect()
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// FFT plan plus wavenumber tables for one grid.
#[derive(Debug)]
pub struct Spectral {
    grid: GridSpec,
    fft: Fft2,
    /// Wavenumber per FFT index for first derivatives (Nyquist zeroed so
    /// derivatives of real fields stay real).
    k_deriv: Vec<f64>,
    /// `|k|^2` per mode, row-major.
    k2: Vec<f64>,
    /// Dealiasing weight per mode (see [`dealias_weight`]).
    weight: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.n();
        let k: Vec<f64> = (0..n).map(|i| grid.wavenumber(i)).collect();
        let k_deriv: Vec<f64> = (0..n)
            .map(|i| if i == n / 2 { 0.0 } else { k[i] })
            .collect();
        let mut k2 = Vec::with_capacity(n * n);
        let mut weight = Vec::with_capacity(n * n);
        let axis: Vec<f64> = (0..n)
            .map(|i| dealias_weight(grid.mode_number(i), n))
            .collect();
        for i in 0..n {
            for j in 0..n {
                k2.push(k[i] * k[i] + k[j] * k[j]);
                weight.push(axis[i] * axis[j]);
            }
        }
        Self {
            grid,
            fft: Fft2::new(n),
            k_deriv,
            k2,
            weight,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn k_squared(&self) -> &[f64] {
        &self.k2
    }

    pub fn k_deriv(&self) -> &[f64] {
        &self.k_deriv
    }

    pub fn dealias_weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn forward(&mut self, values: &[f64]) -> Vec<Complex64> {
        self.fft.forward_real(values)
    }

    pub fn inverse(&mut self, mut modes: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse_real(&mut modes)
    }

    /// Real-space samples of `i k_x f` and `i k_y f` for spectral `f`.
    pub fn gradient(&mut self, modes: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.n();
        let mut gx = Vec::with_capacity(n * n);
        let mut gy = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let c = modes[i * n + j];
                let ic = Complex64::new(-c.im, c.re);
                gx.push(ic * self.k_deriv[i]);
                gy.push(ic * self.k_deriv[j]);
            }
        }
        (self.inverse(gx), self.inverse(gy))
    }

    /// Spectral divergence `i k_x a + i k_y b` of two spectral components.
    pub fn divergence_hat(&self, ax: &[Complex64], ay: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let s = ax[k] * self.k_deriv[i] + ay[k] * self.k_deriv[j];
                out.push(Complex64::new(-s.im, s.re));
            }
        }
        out
    }

    /// Applies the dealiasing weights in place.
    pub fn dealias(&self, modes: &mut [Complex64]) {
        for (c, w) in modes.iter_mut().zip(&self.weight) {
            *c *= *w;
        }
    }

    /// Fraction of the combined spectral energy of `parts` carried by modes
    /// beyond the 2/3 cutoff (the modes [`Spectral::dealias`] zeroes).
    pub fn energy_beyond_cutoff(&self, parts: &[&[Complex64]]) -> f64 {
        let mut total = 0.0;
        let mut removed = 0.0;
        for modes in parts {
            for (c, w) in modes.iter().zip(&self.weight) {
                let e = c.norm_sqr();
                total += e;
                if *w == 0.0 {
                    removed += e;
                }
            }
        }
        if total > 0.0 {
            removed / total
        } else {
            0.0
        }
    }
}

/// Start of the roll-off, as a fraction of the 2/3 cutoff `N/3`.
pub const ROLL_OFF_START: f64 = 0.6;

/// Per-axis dealiasing weight of signed mode `m` on an `n`-point axis.
///
/// Modes with `|m| > n/3` are removed (the 2/3 rule). Below the cutoff the
/// weight rolls off smoothly from 1 at `ROLL_OFF_START * n/3` to 0 at `n/3`
/// so the truncation does not ring across the whole box.
pub fn dealias_weight(m: i64, n: usize) -> f64 {
    let q = 3.0 * m.unsigned_abs() as f64 / n as f64;
    if q > 1.0 {
        return 0.0;
    }
    let x = (q - ROLL_OFF_START) / (1.0 - ROLL_OFF_START);
    1.0 - smooth_step(x)
}

/// C-infinity step from 0 (x <= 0) to 1 (x >= 1).
fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / x).exp();
        let b = (-1.0 / (1.0 - x)).exp();
        a / (a + b)
    }
}
