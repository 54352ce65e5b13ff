//! Numerical laboratory for the two-dimensional Keller–Segel chemotaxis
//! system with classical or fractional diffusion.
//!
//! The crate is organized by concern:
//!
//! * [`field`] — periodic grids, scalar fields, norms, initial data.
//! * [`spectral`] — FFT plans and wavenumber tables.
//! * [`kernel`] — Fourier multipliers and the Bessel-potential kernel.
//! * [`dynamics`] — time integration with blowup detection.
//! * [`moments`] — bump function, truncated moments and the moment bound.
//! * [`criteria`] — Morrey-norm search and blowup certificates.
//! * [`mild`] — Duhamel formulation and Picard iteration.
//! * [`config`], [`sweep`] — experiment description and batch execution.

pub mod bessel;
pub mod config;
pub mod criteria;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod kernel;
pub mod mild;
pub mod moments;
pub mod quad;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};
