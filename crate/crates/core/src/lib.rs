//! Pseudospectral toolkit for the fractional nonlinear Schrödinger equation
//! with a singular inhomogeneous nonlinearity,
//!
//! ```text
//!   i ∂_t u − (−Δ)^s u ± |x|^{−b} |u|^{p−1} u = 0,   x ∈ ℝ^N,  N ∈ {2, 3},
//! ```
//!
//! discretized on a periodic box `[−L, L)^N`.  The fractional Laplacian and
//! every other multiplier operator are exact on the discrete torus; the box
//! size stands in for ℝ^N and must be chosen large enough that the solution
//! never reaches the boundary at significant amplitude.
//!
//! The crate is organised around the objects of the energy-space theory:
//!
//! * [`spectral`] — grids, fields, transforms, multiplier operators
//!   (`D^σ`, the free propagator, resolvents `(m−Δ)^{−1}`), Sobolev norms.
//! * [`model`] — parameter admissibility, derived exponents, the weight
//!   `|x|^{−b}`, and the conserved/threshold functionals `M`, `E`, `P`, `I`,
//!   `ME`, `MG` with the ground-state dichotomy classifier.
//! * [`ground`] — the stationary profile `Q` by stabilized (Petviashvili)
//!   fixed-point iteration, plus the sharp Gagliardo–Nirenberg constant.
//! * [`dynamics`] — Strang-split time evolution, adaptive stepping, blow-up
//!   detection, scattering and linear-decay monitors.
//! * [`diagnostics`] — cutoff templates, the localized virial and its
//!   time derivative through the resolvent representation of `(−Δ)^s`,
//!   Morawetz-type space-time bounds, local decay scans, and the radial
//!   Sobolev inequality check.
//! * [`quadrature`] — Gauss–Legendre panels shared by the resolvent
//!   `m`-integrals and the weight-cell averages.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod ground;
pub mod model;
pub mod quadrature;
pub mod spectral;

pub use error::CoreError;
pub use spectral::{Field, Grid, Representation};

/// Convenient alias used throughout the crate.
pub type Complex = num_complex::Complex64;

/// Result alias for fallible core operations.
pub type Result<T> = std::result::Result<T, CoreError>;
