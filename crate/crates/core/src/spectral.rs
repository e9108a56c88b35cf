//! Discrete Fourier backbone on a periodic box approximating ℝ^N.
//!
//! A [`Grid`] is the uniform lattice `x_k = −L + k·h`, `h = 2L/M`, per axis,
//! with angular frequencies `ξ_j = π·j/L` for signed mode indices
//! `j ∈ {−M/2, …, M/2−1}`.  A [`Field`] stores complex samples either in
//! physical space or as plane-wave coefficients `c_j` with
//!
//! ```text
//!   u(x) = Σ_j c_j e^{i ξ_j · x},
//! ```
//!
//! so a multiplier operator with symbol `σ(ξ)` acts as `c_j ↦ σ(ξ_j) c_j`.
//! The transform pair is exact (up to rounding) on the lattice, which makes
//! `D^σ`, the free propagator `e^{−itD^{2s}}` and the resolvents
//! `(m−Δ)^{−1}` exact on the torus.
//!
//! All norms are uniform-grid Riemann sums `h^N Σ` in physical space and the
//! Parseval-equivalent `(2L)^N Σ` over coefficients in frequency space.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::CoreError;
use crate::Result;

/// Which space the sample values of a [`Field`] live in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Physical,
    Frequency,
}

/// Periodic box discretization: `[−L, L)^N` with `M` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    points_per_axis: usize,
    half_width: f64,
}

impl Grid {
    /// Validates `dim ∈ {2, 3}`, `M` a power of two with `M ≥ 16`, `L > 0`.
    pub fn new(dim: usize, points_per_axis: usize, half_width: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(CoreError::Validation(format!(
                "grid dim must be 2 or 3, got {dim}"
            )));
        }
        if points_per_axis < 16 || !points_per_axis.is_power_of_two() {
            return Err(CoreError::Validation(format!(
                "points per axis must be a power of two >= 16, got {points_per_axis}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(CoreError::Validation(format!(
                "half width must be positive and finite, got {half_width}"
            )));
        }
        Ok(Grid {
            dim,
            points_per_axis,
            half_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Grid spacing `h = 2L/M`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    /// Total number of lattice points `M^N`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one cell, `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Volume of the box, `(2L)^N`.
    pub fn box_volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Physical coordinates along one axis: `x_k = −L + k·h`.
    pub fn axis_coords(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points_per_axis)
            .map(|k| -self.half_width + k as f64 * h)
            .collect()
    }

    /// Angular frequencies along one axis in storage order:
    /// index `j` maps to `π·ĵ/L` with `ĵ = j` for `j < M/2` and `ĵ = j − M`
    /// otherwise.  Symmetric about zero except the single Nyquist mode.
    pub fn axis_freqs(&self) -> Vec<f64> {
        let m = self.points_per_axis;
        let base = std::f64::consts::PI / self.half_width;
        (0..m)
            .map(|j| {
                let signed = if j < m / 2 {
                    j as isize
                } else {
                    j as isize - m as isize
                };
                base * signed as f64
            })
            .collect()
    }

    /// Largest |ξ| on the lattice (the corner mode).
    pub fn max_freq_radius(&self) -> f64 {
        let axis_max = std::f64::consts::PI / self.half_width * (self.points_per_axis / 2) as f64;
        axis_max * (self.dim as f64).sqrt()
    }

    /// Smallest nonzero |ξ|² on the lattice.
    pub fn min_nonzero_freq_sq(&self) -> f64 {
        let f = std::f64::consts::PI / self.half_width;
        f * f
    }

    /// Decomposes a linear index into per-axis indices (row-major).
    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let m = self.points_per_axis;
        match self.dim {
            2 => [idx / m, idx % m, 0],
            _ => {
                let k = idx % m;
                let rest = idx / m;
                [rest / m, rest % m, k]
            }
        }
    }

    /// Linear index of per-axis indices (row-major).
    #[inline]
    pub fn ravel(&self, ix: [usize; 3]) -> usize {
        let m = self.points_per_axis;
        match self.dim {
            2 => ix[0] * m + ix[1],
            _ => (ix[0] * m + ix[1]) * m + ix[2],
        }
    }

    /// Squared radius |x|² of a lattice point by linear index.
    pub fn radius_sq_table(&self) -> Vec<f64> {
        let xs = self.axis_coords();
        let m = self.points_per_axis;
        let mut out = vec![0.0; self.len()];
        match self.dim {
            2 => {
                for i in 0..m {
                    let xi2 = xs[i] * xs[i];
                    for j in 0..m {
                        out[i * m + j] = xi2 + xs[j] * xs[j];
                    }
                }
            }
            _ => {
                for i in 0..m {
                    let xi2 = xs[i] * xs[i];
                    for j in 0..m {
                        let xij2 = xi2 + xs[j] * xs[j];
                        for k in 0..m {
                            out[(i * m + j) * m + k] = xij2 + xs[k] * xs[k];
                        }
                    }
                }
            }
        }
        out
    }

    /// Squared frequency |ξ|² of each mode by linear index.
    pub fn freq_sq_table(&self) -> Vec<f64> {
        let fs = self.axis_freqs();
        let m = self.points_per_axis;
        let mut out = vec![0.0; self.len()];
        match self.dim {
            2 => {
                for i in 0..m {
                    let f2 = fs[i] * fs[i];
                    for j in 0..m {
                        out[i * m + j] = f2 + fs[j] * fs[j];
                    }
                }
            }
            _ => {
                for i in 0..m {
                    let f2 = fs[i] * fs[i];
                    for j in 0..m {
                        let fij2 = f2 + fs[j] * fs[j];
                        for k in 0..m {
                            out[(i * m + j) * m + k] = fij2 + fs[k] * fs[k];
                        }
                    }
                }
            }
        }
        out
    }
}

/// Complex-valued state on a [`Grid`], in physical or frequency representation.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    representation: Representation,
    values: Vec<Complex64>,
}

impl Field {
    /// Zero field in physical representation.
    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            representation: Representation::Physical,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Builds a field from raw values.
    pub fn from_values(
        grid: Grid,
        representation: Representation,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CoreError::Contract(format!(
                "value buffer has {} entries, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid,
            representation,
            values,
        })
    }

    /// Samples a function of the physical coordinates.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let xs = grid.axis_coords();
        let m = grid.points_per_axis();
        let mut values = Vec::with_capacity(grid.len());
        match grid.dim() {
            2 => {
                for i in 0..m {
                    for j in 0..m {
                        values.push(f(&[xs[i], xs[j]]));
                    }
                }
            }
            _ => {
                for i in 0..m {
                    for j in 0..m {
                        for k in 0..m {
                            values.push(f(&[xs[i], xs[j], xs[k]]));
                        }
                    }
                }
            }
        }
        Field {
            grid,
            representation: Representation::Physical,
            values,
        }
    }

    /// Isotropic Gaussian `a·exp(−|x|²/(2σ²))`, optionally with a plane-wave
    /// drift `e^{i v·x}`.
    pub fn gaussian(grid: Grid, amplitude: f64, width: f64, drift: &[f64]) -> Self {
        let mut v = [0.0; 3];
        v[..drift.len().min(3)].copy_from_slice(&drift[..drift.len().min(3)]);
        Field::from_fn(grid, |x| {
            let r2: f64 = x.iter().map(|xi| xi * xi).sum();
            let phase: f64 = x.iter().zip(v.iter()).map(|(xi, vi)| xi * vi).sum();
            Complex64::from_polar(amplitude * (-r2 / (2.0 * width * width)).exp(), phase)
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `true` if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Pointwise maximum modulus.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Discrete L² norm in the native representation.
    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|z| z.norm_sqr()).sum();
        let w = match self.representation {
            Representation::Physical => self.grid.cell_volume(),
            Representation::Frequency => self.grid.box_volume(),
        };
        (w * sum).sqrt()
    }

    /// Discrete L² inner product ⟨f, g⟩ (conjugate-linear in `f`).
    pub fn l2_inner(&self, other: &Field) -> Result<Complex64> {
        if self.grid != other.grid || self.representation != other.representation {
            return Err(CoreError::Contract(
                "inner product requires matching grid and representation".into(),
            ));
        }
        let sum: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        let w = match self.representation {
            Representation::Physical => self.grid.cell_volume(),
            Representation::Frequency => self.grid.box_volume(),
        };
        Ok(sum * w)
    }

    pub fn scaled(&self, c: Complex64) -> Field {
        let mut out = self.clone();
        for z in out.values.iter_mut() {
            *z *= c;
        }
        out
    }

    /// Takes the real part pointwise (physical representation only).
    pub fn real_part(&self) -> Result<Field> {
        if self.representation != Representation::Physical {
            return Err(CoreError::Contract(
                "real_part expects a physical-space field".into(),
            ));
        }
        let mut out = self.clone();
        for z in out.values.iter_mut() {
            *z = Complex64::new(z.re, 0.0);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// FFT engine
// ---------------------------------------------------------------------------

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static PLAN_CACHE: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLAN_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        cache
            .entry((len, inverse))
            .or_insert_with(|| {
                PLANNER.with(|p| {
                    let mut p = p.borrow_mut();
                    if inverse {
                        p.plan_fft_inverse(len)
                    } else {
                        p.plan_fft_forward(len)
                    }
                })
            })
            .clone()
    })
}

/// Runs a 1-D FFT along every lane of `axis` in the row-major buffer.
fn fft_axis(values: &mut [Complex64], grid: Grid, axis: usize, inverse: bool) {
    let m = grid.points_per_axis();
    let dim = grid.dim();
    let fft = plan(m, inverse);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let stride = m.pow((dim - 1 - axis) as u32);
    let lanes = values.len() / m;
    let mut lane = vec![Complex64::new(0.0, 0.0); m];
    if stride == 1 {
        for row in values.chunks_exact_mut(m) {
            fft.process_with_scratch(row, &mut scratch);
        }
    } else {
        // Lanes are strided: gather, transform, scatter.
        for l in 0..lanes {
            let block = l / stride;
            let offset = l % stride;
            let base = block * stride * m + offset;
            for (t, slot) in lane.iter_mut().enumerate() {
                *slot = values[base + t * stride];
            }
            fft.process_with_scratch(&mut lane, &mut scratch);
            for (t, slot) in lane.iter().enumerate() {
                values[base + t * stride] = *slot;
            }
        }
    }
}

/// Sign (−1)^{j₁+…+j_N} of a mode, accounting for the `x = −L` grid origin so
/// that frequency-space values are true plane-wave coefficients.
fn checkerboard_sign(grid: Grid, idx: usize) -> f64 {
    let ix = grid.unravel(idx);
    let s = ix[..grid.dim()].iter().sum::<usize>();
    if s % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn apply_checkerboard(values: &mut [Complex64], grid: Grid, scale: f64) {
    let m = grid.points_per_axis();
    match grid.dim() {
        2 => {
            for i in 0..m {
                for j in 0..m {
                    let sgn = if (i + j) % 2 == 0 { scale } else { -scale };
                    values[i * m + j] *= sgn;
                }
            }
        }
        _ => {
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let sgn = if (i + j + k) % 2 == 0 { scale } else { -scale };
                        values[(i * m + j) * m + k] *= sgn;
                    }
                }
            }
        }
    }
}

pub(crate) fn forward_in_place(values: &mut [Complex64], grid: Grid) {
    for axis in 0..grid.dim() {
        fft_axis(values, grid, axis, false);
    }
    let scale = 1.0 / grid.len() as f64;
    apply_checkerboard(values, grid, scale);
}

pub(crate) fn inverse_in_place(values: &mut [Complex64], grid: Grid) {
    apply_checkerboard(values, grid, 1.0);
    for axis in 0..grid.dim() {
        fft_axis(values, grid, axis, true);
    }
}

// ---------------------------------------------------------------------------
// Transforms and multiplier operators
// ---------------------------------------------------------------------------

/// Forward transform: physical samples to plane-wave coefficients.
pub fn forward_transform(f: &Field) -> Result<Field> {
    if f.representation != Representation::Physical {
        return Err(CoreError::Contract(
            "forward_transform expects a physical-space field".into(),
        ));
    }
    let mut values = f.values.clone();
    forward_in_place(&mut values, f.grid);
    Ok(Field {
        grid: f.grid,
        representation: Representation::Frequency,
        values,
    })
}

/// Inverse transform: plane-wave coefficients to physical samples.
pub fn inverse_transform(f: &Field) -> Result<Field> {
    if f.representation != Representation::Frequency {
        return Err(CoreError::Contract(
            "inverse_transform expects a frequency-space field".into(),
        ));
    }
    let mut values = f.values.clone();
    inverse_in_place(&mut values, f.grid);
    Ok(Field {
        grid: f.grid,
        representation: Representation::Physical,
        values,
    })
}

/// Returns the field in frequency representation (no-op if already there).
pub fn to_frequency(f: &Field) -> Result<Field> {
    match f.representation {
        Representation::Frequency => Ok(f.clone()),
        Representation::Physical => forward_transform(f),
    }
}

/// Returns the field in physical representation (no-op if already there).
pub fn to_physical(f: &Field) -> Result<Field> {
    match f.representation {
        Representation::Physical => Ok(f.clone()),
        Representation::Frequency => inverse_transform(f),
    }
}

/// Applies a Fourier multiplier with a general symbol `ξ ↦ σ(ξ)`.
///
/// The symbol is evaluated at every lattice frequency; a non-finite value
/// anywhere is a domain error (callers must regularize singular symbols at
/// `ξ = 0` themselves).  The output representation matches the input.
pub fn apply_multiplier(
    f: &Field,
    symbol: impl Fn(&[f64]) -> Complex64,
) -> Result<Field> {
    let grid = f.grid;
    let fs = grid.axis_freqs();
    let m = grid.points_per_axis();
    let mut hat = to_frequency(f)?;
    let mut bad: Option<String> = None;
    {
        let values = hat.values_mut();
        match grid.dim() {
            2 => {
                'outer2: for i in 0..m {
                    for j in 0..m {
                        let s = symbol(&[fs[i], fs[j]]);
                        if !(s.re.is_finite() && s.im.is_finite()) {
                            bad = Some(format!("symbol not finite at xi = ({}, {})", fs[i], fs[j]));
                            break 'outer2;
                        }
                        values[i * m + j] *= s;
                    }
                }
            }
            _ => {
                'outer3: for i in 0..m {
                    for j in 0..m {
                        for k in 0..m {
                            let s = symbol(&[fs[i], fs[j], fs[k]]);
                            if !(s.re.is_finite() && s.im.is_finite()) {
                                bad = Some(format!(
                                    "symbol not finite at xi = ({}, {}, {})",
                                    fs[i], fs[j], fs[k]
                                ));
                                break 'outer3;
                            }
                            values[(i * m + j) * m + k] *= s;
                        }
                    }
                }
            }
        }
    }
    if let Some(msg) = bad {
        return Err(CoreError::Domain(msg));
    }
    match f.representation {
        Representation::Physical => inverse_transform(&hat),
        Representation::Frequency => Ok(hat),
    }
}

/// Fast path for isotropic symbols `σ = g(|ξ|²)`.
pub(crate) fn apply_isotropic(f: &Field, g: impl Fn(f64) -> Complex64) -> Result<Field> {
    let grid = f.grid;
    let xi2 = grid.freq_sq_table();
    let mut hat = to_frequency(f)?;
    {
        let values = hat.values_mut();
        for (v, &q) in values.iter_mut().zip(&xi2) {
            *v *= g(q);
        }
    }
    match f.representation {
        Representation::Physical => inverse_transform(&hat),
        Representation::Frequency => Ok(hat),
    }
}

/// Fractional Laplacian power `D^σ` with symbol `|ξ|^σ`; the zero mode maps
/// to zero for `σ > 0` and to itself for `σ = 0`.
pub fn frac_laplacian(f: &Field, order: f64) -> Result<Field> {
    if !(order >= 0.0) {
        return Err(CoreError::Domain(format!(
            "frac_laplacian order must be >= 0, got {order}"
        )));
    }
    let half = order / 2.0;
    apply_isotropic(f, |xi2| Complex64::new(xi2.powf(half), 0.0))
}

/// Free propagator `e^{−it D^{2s}}` (exactly unitary on the lattice).
pub fn free_propagator(f: &Field, t: f64, s: f64) -> Result<Field> {
    apply_isotropic(f, |xi2| {
        Complex64::from_polar(1.0, -t * xi2.powf(s))
    })
}

/// Normalization `c_s = sqrt(sin(πs)/π)` of the resolvent family.
pub fn resolvent_normalization(s: f64) -> f64 {
    ((std::f64::consts::PI * s).sin() / std::f64::consts::PI).sqrt()
}

/// Resolvent field `u_m = c_s (m − Δ)^{−1} u` with multiplier `c_s/(m+|ξ|²)`.
pub fn resolvent(f: &Field, m: f64, s: f64) -> Result<Field> {
    if !(m > 0.0) {
        return Err(CoreError::Domain(format!(
            "resolvent mass parameter must be positive, got {m}"
        )));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(CoreError::Domain(format!(
            "resolvent order must lie in (0, 1), got {s}"
        )));
    }
    let cs = resolvent_normalization(s);
    apply_isotropic(f, |xi2| Complex64::new(cs / (m + xi2), 0.0))
}

/// Homogeneous Sobolev seminorm `‖D^σ f‖_{L²}` via Parseval.
pub fn sobolev_seminorm(f: &Field, order: f64) -> Result<f64> {
    if !(order >= 0.0) {
        return Err(CoreError::Domain(format!(
            "sobolev order must be >= 0, got {order}"
        )));
    }
    let hat = to_frequency(f)?;
    let xi2 = f.grid.freq_sq_table();
    let sum: f64 = hat
        .values()
        .iter()
        .zip(&xi2)
        .map(|(c, &q)| q.powf(order) * c.norm_sqr())
        .sum();
    Ok((f.grid.box_volume() * sum).sqrt())
}

/// Inhomogeneous `H^s` norm `(‖f‖² + ‖D^s f‖²)^{1/2}`.
pub fn hs_norm(f: &Field, s: f64) -> Result<f64> {
    let hat = to_frequency(f)?;
    let xi2 = f.grid.freq_sq_table();
    let sum: f64 = hat
        .values()
        .iter()
        .zip(&xi2)
        .map(|(c, &q)| (1.0 + q.powf(s)) * c.norm_sqr())
        .sum();
    Ok((f.grid.box_volume() * sum).sqrt())
}

/// Spectral gradient: the `N` fields `∂_a f` with symbols `iξ_a`.
pub fn gradient(f: &Field) -> Result<Vec<Field>> {
    let grid = f.grid;
    let fs = grid.axis_freqs();
    let m = grid.points_per_axis();
    let hat = to_frequency(f)?;
    let mut out = Vec::with_capacity(grid.dim());
    for axis in 0..grid.dim() {
        let mut comp = hat.clone();
        {
            let values = comp.values_mut();
            for (idx, v) in values.iter_mut().enumerate() {
                let ix = grid.unravel(idx);
                let xi = fs[ix[axis]];
                *v *= Complex64::new(0.0, xi);
            }
            let _ = m;
        }
        out.push(match f.representation {
            Representation::Physical => inverse_transform(&comp)?,
            Representation::Frequency => comp,
        });
    }
    Ok(out)
}

/// L^r norm for finite even r ≥ 2, `(h^N Σ |f|^r)^{1/r}` (physical space).
pub fn lr_norm(f: &Field, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(CoreError::Domain(format!("L^r norm needs r >= 1, got {r}")));
    }
    let phys = to_physical(f)?;
    let sum: f64 = phys.values().iter().map(|z| z.norm().powf(r)).sum();
    Ok((f.grid.cell_volume() * sum).powf(1.0 / r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn small_grid() -> Grid {
        Grid::new(2, 32, 8.0).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid::new(1, 32, 8.0).is_err());
        assert!(Grid::new(4, 32, 8.0).is_err());
        assert!(Grid::new(2, 24, 8.0).is_err());
        assert!(Grid::new(2, 8, 8.0).is_err());
        assert!(Grid::new(2, 32, 0.0).is_err());
        assert!(Grid::new(3, 16, 4.0).is_ok());
    }

    #[test]
    fn spacing_is_exact() {
        let g = Grid::new(2, 64, 10.0).unwrap();
        assert_eq!(g.spacing(), 20.0 / 64.0);
    }

    #[test]
    fn freq_lattice_symmetric_except_nyquist() {
        let g = small_grid();
        let fs = g.axis_freqs();
        let m = g.points_per_axis();
        for j in 1..m / 2 {
            assert_eq!(fs[j], -fs[m - j]);
        }
        // Single unpaired Nyquist mode.
        assert!(fs[m / 2] < 0.0);
        assert_eq!(fs[0], 0.0);
    }

    #[test]
    fn constant_field_concentrates_on_zero_mode() {
        let g = small_grid();
        let f = Field::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let hat = forward_transform(&f).unwrap();
        let vals = hat.values();
        assert!((vals[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let off: f64 = vals[1..].iter().map(|z| z.norm()).sum();
        assert!(off < 1e-10, "off-mode mass {off}");
    }

    #[test]
    fn plane_wave_hits_single_coefficient() {
        let g = small_grid();
        let xi1 = std::f64::consts::PI / g.half_width(); // mode (1, 0)
        let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, xi1 * x[0]));
        let hat = forward_transform(&f).unwrap();
        let m = g.points_per_axis();
        for (idx, v) in hat.values().iter().enumerate() {
            let expect = if idx == m { 1.0 } else { 0.0 }; // [1, 0] ravels to m
            assert!(
                (v.norm() - expect).abs() < 1e-10,
                "coefficient {idx} = {v}"
            );
        }
    }

    #[test]
    fn round_trip_reproduces_field() {
        let g = small_grid();
        let f = Field::gaussian(g, 1.3, 1.0, &[0.7, -0.3]);
        let back = inverse_transform(&forward_transform(&f).unwrap()).unwrap();
        let diff: f64 = f
            .values()
            .iter()
            .zip(back.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff / f.l2_norm() < 1e-12);
    }

    #[test]
    fn wrong_representation_is_contract_error() {
        let g = small_grid();
        let f = Field::gaussian(g, 1.0, 1.0, &[]);
        let hat = forward_transform(&f).unwrap();
        assert!(matches!(
            forward_transform(&hat),
            Err(CoreError::Contract(_))
        ));
        assert!(matches!(
            inverse_transform(&f),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn parseval_holds_to_machine_precision() {
        let g = small_grid();
        let f = Field::gaussian(g, 2.0, 1.5, &[0.4, 0.0]);
        let phys_norm = f.l2_norm();
        let freq_norm = forward_transform(&f).unwrap().l2_norm();
        assert!(rel_err(phys_norm, freq_norm) < 1e-12);
    }

    #[test]
    fn identity_multiplier_is_identity() {
        let g = small_grid();
        let f = Field::gaussian(g, 1.0, 1.2, &[]);
        let out = apply_multiplier(&f, |_| Complex64::new(1.0, 0.0)).unwrap();
        let diff: f64 = f
            .values()
            .iter()
            .zip(out.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn laplacian_symbol_on_plane_wave() {
        let g = small_grid();
        let xi1 = std::f64::consts::PI / g.half_width();
        let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, xi1 * x[0]));
        let out = apply_multiplier(&f, |xi| {
            Complex64::new(xi.iter().map(|v| v * v).sum(), 0.0)
        })
        .unwrap();
        for (a, b) in f.values().iter().zip(out.values()) {
            assert!((b - a * (xi1 * xi1)).norm() < 1e-10);
        }
    }

    #[test]
    fn non_finite_symbol_is_domain_error() {
        let g = small_grid();
        let f = Field::gaussian(g, 1.0, 1.0, &[]);
        let r = apply_multiplier(&f, |xi| {
            let q: f64 = xi.iter().map(|v| v * v).sum();
            Complex64::new(1.0 / q, 0.0) // singular at xi = 0
        });
        assert!(matches!(r, Err(CoreError::Domain(_))));
    }

    #[test]
    fn frac_laplacian_rejects_negative_order() {
        let g = small_grid();
        let f = Field::gaussian(g, 1.0, 1.0, &[]);
        assert!(matches!(
            frac_laplacian(&f, -0.5),
            Err(CoreError::Domain(_))
        ));
    }

    #[test]
    fn frac_laplacian_order_zero_is_identity() {
        let g = small_grid();
        let f = Field::gaussian(g, 1.0, 1.1, &[0.3, 0.1]);
        let out = frac_laplacian(&f, 0.0).unwrap();
        let diff: f64 = f
            .values()
            .iter()
            .zip(out.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn free_propagator_unitary_group() {
        let g = small_grid();
        let f = Field::gaussian(g, 1.0, 1.0, &[0.5, 0.0]);
        let s = 0.8;
        // t = 0 is the identity.
        let id = free_propagator(&f, 0.0, s).unwrap();
        let diff0: f64 = f
            .values()
            .iter()
            .zip(id.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff0 < 1e-14);
        // Unitarity.
        let u = free_propagator(&f, 0.37, s).unwrap();
        assert!(rel_err(u.l2_norm(), f.l2_norm()) < 1e-12);
        // Group law.
        let two_step = free_propagator(&free_propagator(&f, 0.21, s).unwrap(), 0.16, s).unwrap();
        let diff: f64 = u
            .values()
            .iter()
            .zip(two_step.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff / f.l2_norm() < 1e-12);
    }

    #[test]
    fn resolvent_inverse_relation() {
        let g = small_grid();
        let s = 0.8;
        let f = Field::gaussian(g, 1.0, 1.0, &[]);
        let m = 2.5;
        let um = resolvent(&f, m, s).unwrap();
        // (m − Δ) u_m = c_s f
        let back = apply_multiplier(&um, |xi| {
            Complex64::new(m + xi.iter().map(|v| v * v).sum::<f64>(), 0.0)
        })
        .unwrap();
        let cs = resolvent_normalization(s);
        let diff: f64 = back
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a - b * cs).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff / (cs * f.l2_norm()) < 1e-10);
    }

    #[test]
    fn resolvent_large_mass_limit() {
        let g = small_grid();
        let s = 0.8;
        let f = Field::gaussian(g, 1.0, 1.0, &[]);
        let m = 1.0e4;
        let um = resolvent(&f, m, s).unwrap();
        let cs = resolvent_normalization(s);
        let scaled = um.scaled(Complex64::new(m / cs, 0.0));
        let num: f64 = scaled
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let lap = frac_laplacian(&f, 2.0).unwrap();
        let bound = 2.0 / m * lap.l2_norm() / f.l2_norm();
        assert!(num * g.cell_volume().sqrt() / f.l2_norm() <= bound);
    }

    #[test]
    fn resolvent_rejects_nonpositive_mass() {
        let g = small_grid();
        let f = Field::gaussian(g, 1.0, 1.0, &[]);
        assert!(matches!(
            resolvent(&f, 0.0, 0.8),
            Err(CoreError::Domain(_))
        ));
        assert!(matches!(
            resolvent(&f, -1.0, 0.8),
            Err(CoreError::Domain(_))
        ));
    }

    #[test]
    fn resolvent_derivative_bound() {
        // ‖D^α u_m‖ ≤ c_s · sup_t t^α/(m+t²) · ‖u‖ with the sup attained at
        // t² = αm/(2−α); spot-check α = 1 where the constant is c_s/(2√m).
        let g = small_grid();
        let s = 0.8;
        let f = Field::gaussian(g, 1.0, 1.0, &[]);
        let cs = resolvent_normalization(s);
        for &m in &[0.1, 1.0, 10.0] {
            let um = resolvent(&f, m, s).unwrap();
            let lhs = sobolev_seminorm(&um, 1.0).unwrap();
            let rhs = cs / (2.0 * m.sqrt()) * f.l2_norm();
            assert!(
                lhs <= rhs * (1.0 + 1e-12),
                "m = {m}: {lhs} > {rhs}"
            );
        }
    }

    #[test]
    fn seminorm_order_zero_is_l2() {
        let g = small_grid();
        let f = Field::gaussian(g, 1.7, 0.9, &[]);
        let a = sobolev_seminorm(&f, 0.0).unwrap();
        assert!(rel_err(a, f.l2_norm()) < 1e-12);
    }

    #[test]
    fn seminorm_on_plane_wave_is_eigenvalue() {
        let g = small_grid();
        let xi1 = 3.0 * std::f64::consts::PI / g.half_width();
        let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, xi1 * x[0]));
        let sigma = 0.8;
        let a = sobolev_seminorm(&f, sigma).unwrap();
        assert!(rel_err(a, xi1.powf(sigma) * f.l2_norm()) < 1e-12);
    }

    #[test]
    fn seminorm_rejects_negative_order() {
        let g = small_grid();
        let f = Field::gaussian(g, 1.0, 1.0, &[]);
        assert!(matches!(
            sobolev_seminorm(&f, -0.1),
            Err(CoreError::Domain(_))
        ));
    }

    #[test]
    fn interpolation_inequality_on_random_band_limited_fields() {
        // ‖D^α f‖ ≤ ‖f‖^{1−α/s} ‖D^s f‖^{α/s}: exact Hölder in frequency.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let g = small_grid();
        let s = 0.8;
        let alpha = 0.5;
        let xi2 = g.freq_sq_table();
        for _ in 0..20 {
            let coeffs: Vec<Complex64> = xi2
                .iter()
                .map(|&q| {
                    if q < 40.0 {
                        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                            * (-q / 8.0).exp()
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            let hat = Field::from_values(g, Representation::Frequency, coeffs).unwrap();
            let f = inverse_transform(&hat).unwrap();
            let l2 = f.l2_norm();
            let ds = sobolev_seminorm(&f, s).unwrap();
            let da = sobolev_seminorm(&f, alpha).unwrap();
            let bound = l2.powf(1.0 - alpha / s) * ds.powf(alpha / s);
            assert!(da <= bound * (1.0 + 1e-12), "{da} > {bound}");
        }
    }

    #[test]
    fn frac_laplacian_order_two_matches_finite_differences() {
        // Observed order of agreement with the 5-point Laplacian under one
        // dyadic refinement must be at least 1.9.
        let err_at = |m: usize| -> f64 {
            let g = Grid::new(2, m, 8.0).unwrap();
            let f = Field::gaussian(g, 1.0, 1.4, &[]);
            let spec = frac_laplacian(&f, 2.0).unwrap();
            let h = g.spacing();
            let n = g.points_per_axis();
            let v = f.values();
            let mut worst = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let ip = (i + 1) % n;
                    let im = (i + n - 1) % n;
                    let jp = (j + 1) % n;
                    let jm = (j + n - 1) % n;
                    let fd = -(v[ip * n + j] + v[im * n + j] + v[i * n + jp] + v[i * n + jm]
                        - 4.0 * v[i * n + j])
                        / (h * h);
                    worst = worst.max((fd - spec.values()[i * n + j]).norm());
                }
            }
            worst
        };
        let e1 = err_at(64);
        let e2 = err_at(128);
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn gradient_of_plane_wave() {
        let g = small_grid();
        let xi1 = 2.0 * std::f64::consts::PI / g.half_width();
        let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, xi1 * x[0]));
        let grads = gradient(&f).unwrap();
        for (a, b) in grads[0].values().iter().zip(f.values()) {
            assert!((a - b * Complex64::new(0.0, xi1)).norm() < 1e-10);
        }
        let g1: f64 = grads[1].values().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(g1 < 1e-10);
    }
}
