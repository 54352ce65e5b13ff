//! Periodic-box discretization of the plane.
//!
//! The box is `[-L/2, L/2)^2` sampled on an `N x N` uniform grid. Samples are
//! stored row-major with the first (row) index running along `x` and the
//! second along `y`, so `values[i * n + j]` is the sample at `(x_i, y_j)`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::Fft2;

pub type Point = [f64; 2];

/// Uniform periodic grid on `[-L/2, L/2)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    box_length: f64,
}

impl GridSpec {
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 4, got {n}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box length must be positive, got {box_length}"
            )));
        }
        Ok(Self { n, box_length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn dx(&self) -> f64 {
        self.box_length / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.box_length + i as f64 * self.dx()
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        [self.coord(i), self.coord(j)]
    }

    /// Signed mode number of FFT index `i`; the Nyquist index maps to `-n/2`.
    pub fn mode_number(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavenumber `2 pi m / L` of FFT index `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * PI / self.box_length * self.mode_number(i) as f64
    }

    /// Same grid on a box scaled by `factor` (point count unchanged).
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.n, self.box_length * factor)
    }

    /// Wraps a coordinate into `[-L/2, L/2)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.box_length;
        (x + 0.5 * l).rem_euclid(l) - 0.5 * l
    }

    /// Minimum-image displacement `a - b` on the torus.
    pub fn displacement(&self, a: Point, b: Point) -> Point {
        [self.wrap(a[0] - b[0]), self.wrap(a[1] - b[1])]
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Real samples of a density on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::out_of_range(
                "values",
                format!("non-finite sample at index {bad}"),
            ));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field without checking finiteness; used on hot paths that
    /// check separately.
    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::from_raw(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            let x = grid.coord(i);
            for j in 0..n {
                values.push(f(x, grid.coord(j)));
            }
        }
        Self::from_raw(grid, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &ScalarField) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        ))
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.add_scaled(1.0, other)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.add_scaled(-1.0, other)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index `(i, j)` of the largest sample.
    pub fn argmax(&self) -> (usize, usize) {
        let n = self.grid.n();
        let k = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                if v > best.1 {
                    (k, v)
                } else {
                    best
                }
            })
            .0;
        (k / n, k % n)
    }

    /// Riemann-sum `L^p` norm; `p = f64::INFINITY` gives the max norm.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(self, p)
    }

    pub fn total_mass(&self) -> f64 {
        total_mass(self)
    }

    /// Mass of `|f|` outside the disc `|x| < radius` centred at the origin.
    pub fn tail_mass(&self, radius: f64) -> f64 {
        let n = self.grid.n();
        let r2 = radius * radius;
        let mut acc = 0.0;
        for i in 0..n {
            let x = self.grid.coord(i);
            for j in 0..n {
                let y = self.grid.coord(j);
                if x * x + y * y >= r2 {
                    acc += self.values[i * n + j].abs();
                }
            }
        }
        acc * self.grid.cell_area()
    }

    /// Mass of the negative part.
    pub fn negative_mass(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| **v < 0.0)
            .map(|v| -v)
            .sum::<f64>()
            * self.grid.cell_area()
    }
}

/// Unnormalized discrete Fourier coefficients of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    modes: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: GridSpec, modes: Vec<Complex64>) -> Result<Self> {
        if modes.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} modes, got {}",
                grid.len(),
                modes.len()
            )));
        }
        Ok(Self { grid, modes })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn modes(&self) -> &[Complex64] {
        &self.modes
    }

    pub fn modes_mut(&mut self) -> &mut [Complex64] {
        &mut self.modes
    }

    pub fn mode(&self, i: usize, j: usize) -> Complex64 {
        self.modes[i * self.grid.n() + j]
    }
}

/// Two real components on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: GridSpec, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != grid.len() || y.len() != grid.len() {
            return Err(Error::InvalidGrid("component length mismatch".into()));
        }
        Ok(Self { grid, x, y })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn at(&self, i: usize, j: usize) -> [f64; 2] {
        let k = i * self.grid.n() + j;
        [self.x[k], self.y[k]]
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn max_norm(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }
}

pub fn forward_transform(f: &ScalarField) -> SpectralField {
    let mut fft = Fft2::new(f.grid().n());
    let modes = fft.forward_real(f.values());
    SpectralField {
        grid: *f.grid(),
        modes,
    }
}

/// Inverse of [`forward_transform`]; the imaginary residue is discarded.
pub fn inverse_transform(s: &SpectralField) -> ScalarField {
    let mut fft = Fft2::new(s.grid().n());
    let mut modes = s.modes.clone();
    let values = fft.inverse_real(&mut modes);
    ScalarField::from_raw(s.grid, values)
}

pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::out_of_range("p", format!("need p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let da = f.grid().cell_area();
    if p == 1.0 {
        return Ok(f.values().iter().map(|v| v.abs()).sum::<f64>() * da);
    }
    if p == 2.0 {
        return Ok((f.values().iter().map(|v| v * v).sum::<f64>() * da).sqrt());
    }
    // scale by the max to keep |f|^p in range
    let m = f.max_abs();
    if m == 0.0 {
        return Ok(0.0);
    }
    let s: f64 = f.values().iter().map(|v| (v.abs() / m).powf(p)).sum();
    Ok(m * (s * da).powf(1.0 / p))
}

pub fn total_mass(f: &ScalarField) -> f64 {
    f.values().iter().sum::<f64>() * f.grid().cell_area()
}

/// Periodized isotropic Gaussian with standard deviation `width` and the
/// given total mass.
pub fn make_gaussian(grid: GridSpec, mass: f64, center: Point, width: f64) -> Result<ScalarField> {
    let dx = grid.dx();
    let l = grid.box_length();
    if !(width > 2.0 * dx && width < l / 8.0) {
        return Err(Error::Unresolvable(format!(
            "width {width} must lie in (2 dx, L/8) = ({}, {})",
            2.0 * dx,
            l / 8.0
        )));
    }
    let c = [grid.wrap(center[0]), grid.wrap(center[1])];
    let peak = mass / (2.0 * PI * width * width);
    let inv = 1.0 / (2.0 * width * width);
    let n = grid.n();
    // per-axis periodized factors; the Gaussian separates
    let axis = |c0: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let x = grid.coord(i) - c0;
                (-3..=3)
                    .map(|m| {
                        let d = x + m as f64 * l;
                        (-d * d * inv).exp()
                    })
                    .sum()
            })
            .collect()
    };
    let gx = axis(c[0]);
    let gy = axis(c[1]);
    let mut values = Vec::with_capacity(grid.len());
    for a in &gx {
        for b in &gy {
            values.push(peak * a * b);
        }
    }
    Ok(ScalarField::from_raw(grid, values))
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"KSF1";
const SNAPSHOT_NAME_LEN: usize = 16;

/// A field tagged with a time and a short name, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub name: String,
    pub t: f64,
    pub field: ScalarField,
}

impl Snapshot {
    /// Binary layout: `"KSF1"`, `N: u32`, `L: f64`, `t: f64`, 16 name bytes
    /// (UTF-8, zero padded), then `N^2` row-major `f64` samples; all
    /// little-endian.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let grid = self.field.grid();
        let n = u32::try_from(grid.n())
            .map_err(|_| Error::Format("grid too large for snapshot".into()))?;
        let mut name = [0u8; SNAPSHOT_NAME_LEN];
        let bytes = self.name.as_bytes();
        if bytes.len() > SNAPSHOT_NAME_LEN {
            return Err(Error::Format(format!(
                "name longer than {SNAPSHOT_NAME_LEN} bytes"
            )));
        }
        name[..bytes.len()].copy_from_slice(bytes);
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&grid.box_length().to_le_bytes())?;
        w.write_all(&self.t.to_le_bytes())?;
        w.write_all(&name)?;
        let mut buf = Vec::with_capacity(grid.len() * 8);
        for v in self.field.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let l = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let t = f64::from_le_bytes(b8);
        let mut name = [0u8; SNAPSHOT_NAME_LEN];
        r.read_exact(&mut name)?;
        let end = name
            .iter()
            .position(|b| *b == 0)
            .unwrap_or(SNAPSHOT_NAME_LEN);
        let name = std::str::from_utf8(&name[..end])
            .map_err(|_| Error::Format("name is not UTF-8".into()))?
            .to_string();
        let grid = GridSpec::new(n, l)?;
        let mut raw = vec![0u8; grid.len() * 8];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            name,
            t,
            field: ScalarField::new(grid, values)?,
        })
    }
}
