//! Numerically checkable forms of the localized-virial / Morawetz machinery.
//!
//! Two radial cutoff templates are used throughout:
//!
//! * a bump `ψ` with `ψ ≡ 1` on `B(1/2)`, `ψ ≡ 0` outside `B(1)` and
//!   `0 ≤ ψ ≤ 1`, rescaled as `ψ_R(x) = ψ(|x|/R)`;
//! * a virial weight `f` with `f(r) = r²/2` on `[0,1]` and `f` constant
//!   beyond `r = 2`, rescaled as `f_R(x) = R² f(|x|/R)`.
//!
//! Both are C⁴ piecewise polynomials built from the 7th-order smoothstep, so
//! `Δψ_R`, `Δf_R` and `Δ²f_R` are evaluated in closed form (the virial
//! evolution needs fourth derivatives, which differencing would wreck).
//!
//! The constant-plateau tail of `f` is load-bearing: it makes `Δ²f_R`
//! compactly supported with `∫ Δ²f_R dx = 0`, without which the `m`-integral
//! of the bilaplacian term diverges at `m → 0` through the mean mode.  A
//! consequence is that `f''` must be negative on part of the transition
//! annulus — `f'` has to come down from 1 to 0 — so only the one-sided bound
//! `f'' ≤ 1` holds there, together with `f'(r) ≤ r` and `N − Δf_R ≥ 0`
//! everywhere.
//!
//! The localized virial of a state is
//!
//! ```text
//!   M_R[u] = 2 Im ∫ ū ∇f_R · ∇u dx,
//! ```
//!
//! and its time derivative along the flow is evaluated term by term through
//! the resolvent representation of `(−Δ)^s`: with `u_m = c_s (m−Δ)^{−1} u`,
//!
//! ```text
//!   d/dt M_R[u] =  4∫₀^∞ m^s ∫_{|x|<R} |∇u_m|² dx dm
//!               + 4∫₀^∞ m^s ∫_{R<|x|<2R} f''(|x|/R) |∇u_m|² dx dm
//!               − ∫₀^∞ m^s ∫ Δ²f_R |u_m|² dx dm
//!               − (4sB/(1+p)) ∫_{|x|<R} |x|^{−b} |u|^{p+1} dx
//!               + (2(p−1)/(1+p)) ∫_{|x|>R} (N − Δf_R) |x|^{−b} |u|^{p+1} dx
//!               − (4b/(1+p)) ∫_{|x|>R} (x·∇f_R/|x|²) |x|^{−b} |u|^{p+1} dx,
//! ```
//!
//! valid for radial states.  The identity
//! `s‖D^s u‖² = ∫₀^∞ m^s ∫ |∇u_m|² dx dm` is exposed as a standalone
//! two-route check: the left side evaluates the fractional symbol, the right
//! side only rational resolvent symbols plus the `m`-quadrature.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::model::WeightField;
use crate::quadrature::MQuadrature;
use crate::spectral::{self, Field, Grid};
use crate::Result;

// ---------------------------------------------------------------------------
// Smoothstep templates
// ---------------------------------------------------------------------------

/// 7th-order smoothstep: `S(0)=0`, `S(1)=1`, three vanishing derivatives at
/// both ends.
fn s7(t: f64) -> f64 {
    ((( -20.0 * t + 70.0) * t - 84.0) * t + 35.0) * t.powi(4)
}

fn s7_d1(t: f64) -> f64 {
    140.0 * t.powi(3) * (1.0 - t).powi(3)
}

fn s7_d2(t: f64) -> f64 {
    420.0 * t * t * (1.0 - t) * (1.0 - t) * (1.0 - 2.0 * t)
}

fn s7_d3(t: f64) -> f64 {
    840.0 * t * (1.0 - t) * (1.0 - 5.0 * t + 5.0 * t * t)
}

/// ∫₀^t S7.
fn s7_i1(t: f64) -> f64 {
    (((-2.5 * t + 10.0) * t - 14.0) * t + 7.0) * t.powi(5)
}

/// ∫₀^t ∫₀^τ S7.
fn s7_i2(t: f64) -> f64 {
    ((((-5.0 / 18.0) * t + 1.25) * t - 2.0) * t + 7.0 / 6.0) * t.powi(6)
}

/// Peak of S7′, used to normalize the correction bump.
const S7_D1_MAX: f64 = 2.1875; // 140/64
/// Weight of the correction bump so that f′(2) = 0 exactly.
const F_BETA: f64 = 3.28125; // 1.5 · S7_D1_MAX

// Virial template on the transition interval, t = ρ − 1 ∈ [0, 1]:
//   f''(1+t) = 1 − S7(t) − β·S7′(t)/S7′max
// which starts at 1, ends at 0 with three flat derivatives at both ends, and
// integrates to −1 so the slope plateaus: f′(2) = 0.

fn f_template_d2(t: f64) -> f64 {
    1.0 - s7(t) - F_BETA * s7_d1(t) / S7_D1_MAX
}

fn f_template_d1(t: f64) -> f64 {
    1.0 + t - s7_i1(t) - F_BETA * s7(t) / S7_D1_MAX
}

fn f_template_val(t: f64) -> f64 {
    0.5 + t + 0.5 * t * t - s7_i2(t) - F_BETA * s7_i1(t) / S7_D1_MAX
}

fn f_template_d3(t: f64) -> f64 {
    -s7_d1(t) - F_BETA * s7_d2(t) / S7_D1_MAX
}

fn f_template_d4(t: f64) -> f64 {
    -s7_d2(t) - F_BETA * s7_d3(t) / S7_D1_MAX
}

/// Plateau value `f(ρ)` for `ρ ≥ 2` (equals 10/9).
fn f_plateau() -> f64 {
    f_template_val(1.0)
}

/// Which cutoff template a [`Cutoff`] carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    /// Bump `ψ_R`: 1 on `B(R/2)`, 0 outside `B(R)`.
    Bump,
    /// Virial weight `f_R = R² f(|x|/R)`.
    Virial,
}

/// A radial cutoff at scale `R` with analytic derivatives.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Cutoff {
    pub kind: CutoffKind,
    pub radius: f64,
}

impl Cutoff {
    pub fn bump(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(CoreError::Domain(format!(
                "cutoff radius must be positive, got {radius}"
            )));
        }
        Ok(Cutoff {
            kind: CutoffKind::Bump,
            radius,
        })
    }

    pub fn virial(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(CoreError::Domain(format!(
                "cutoff radius must be positive, got {radius}"
            )));
        }
        Ok(Cutoff {
            kind: CutoffKind::Virial,
            radius,
        })
    }

    /// Template value: `ψ(r/R)` for the bump, `R² f(r/R)` for the virial
    /// weight.
    pub fn value(&self, r: f64) -> f64 {
        let rho = r / self.radius;
        match self.kind {
            CutoffKind::Bump => {
                if rho <= 0.5 {
                    1.0
                } else if rho >= 1.0 {
                    0.0
                } else {
                    1.0 - s7(2.0 * rho - 1.0)
                }
            }
            CutoffKind::Virial => {
                let f = if rho <= 1.0 {
                    0.5 * rho * rho
                } else if rho >= 2.0 {
                    f_plateau()
                } else {
                    f_template_val(rho - 1.0)
                };
                self.radius * self.radius * f
            }
        }
    }

    /// Radial derivative of the rescaled cutoff (`ψ_R'` or `f_R'`).
    pub fn derivative(&self, r: f64) -> f64 {
        let rho = r / self.radius;
        match self.kind {
            CutoffKind::Bump => {
                if rho <= 0.5 || rho >= 1.0 {
                    0.0
                } else {
                    -2.0 * s7_d1(2.0 * rho - 1.0) / self.radius
                }
            }
            CutoffKind::Virial => {
                let fp = if rho <= 1.0 {
                    rho
                } else if rho >= 2.0 {
                    0.0
                } else {
                    f_template_d1(rho - 1.0)
                };
                self.radius * fp
            }
        }
    }

    /// Second radial derivative (`ψ_R''` or `f_R''`).
    pub fn second_derivative(&self, r: f64) -> f64 {
        let rho = r / self.radius;
        match self.kind {
            CutoffKind::Bump => {
                if rho <= 0.5 || rho >= 1.0 {
                    0.0
                } else {
                    -4.0 * s7_d2(2.0 * rho - 1.0) / (self.radius * self.radius)
                }
            }
            CutoffKind::Virial => {
                if rho <= 1.0 {
                    1.0
                } else if rho >= 2.0 {
                    0.0
                } else {
                    f_template_d2(rho - 1.0)
                }
            }
        }
    }

    /// `∇cutoff·x/|x|² = cutoff'(r)/r`, with the `r → 0` limit filled in.
    pub fn slope_over_r(&self, r: f64) -> f64 {
        if r == 0.0 {
            return match self.kind {
                CutoffKind::Bump => 0.0,
                CutoffKind::Virial => 1.0,
            };
        }
        self.derivative(r) / r
    }

    /// Laplacian of the rescaled cutoff in dimension `dim`.
    pub fn laplacian(&self, r: f64, dim: usize) -> f64 {
        let n1 = (dim - 1) as f64;
        self.second_derivative(r) + n1 * self.slope_over_r(r)
    }

    /// Bilaplacian `Δ²` of the virial weight (zero for `r ≤ R` and `r ≥ 2R`).
    ///
    /// With `ρ = r/R`:
    /// `Δ²f_R = R^{−2} [ f⁗(ρ) + 2(N−1) f‴(ρ)/ρ + (N−1)(N−3)(f''(ρ)ρ − f'(ρ))/ρ³ ]`.
    pub fn bilaplacian(&self, r: f64, dim: usize) -> Result<f64> {
        if self.kind != CutoffKind::Virial {
            return Err(CoreError::Contract(
                "bilaplacian is defined for the virial cutoff".into(),
            ));
        }
        let rho = r / self.radius;
        if !(1.0..2.0).contains(&rho) {
            return Ok(0.0);
        }
        let t = rho - 1.0;
        let n1 = (dim - 1) as f64;
        let n3 = (dim - 3) as f64;
        let val = f_template_d4(t)
            + 2.0 * n1 * f_template_d3(t) / rho
            + n1 * n3 * (f_template_d2(t) * rho - f_template_d1(t)) / (rho * rho * rho);
        Ok(val / (self.radius * self.radius))
    }

    /// Samples the cutoff (by kind-appropriate value) at every grid point.
    pub fn sample(&self, grid: Grid) -> Vec<f64> {
        grid.radius_sq_table()
            .iter()
            .map(|&q| self.value(q.sqrt()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Local quantities and trajectory records
// ---------------------------------------------------------------------------

/// Mass and weighted potential inside the ball `|x| < R`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LocalQuantities {
    pub radius: f64,
    pub mass: f64,
    pub potential: f64,
}

/// `∫_{|x|<R} |u|² dx`.
pub fn local_mass(u: &Field, radius: f64) -> Result<f64> {
    let phys = spectral::to_physical(u)?;
    let r2 = u.grid().radius_sq_table();
    let rr = radius * radius;
    let sum: f64 = phys
        .values()
        .iter()
        .zip(&r2)
        .filter(|(_, &q)| q < rr)
        .map(|(z, _)| z.norm_sqr())
        .sum();
    Ok(u.grid().cell_volume() * sum)
}

/// `∫_{|x|<R} |x|^{−b} |u|^{p+1} dx`.
pub fn local_potential(u: &Field, w: &WeightField, p: f64, radius: f64) -> Result<f64> {
    let phys = spectral::to_physical(u)?;
    let r2 = u.grid().radius_sq_table();
    let rr = radius * radius;
    let e = (p + 1.0) / 2.0;
    let sum: f64 = phys
        .values()
        .iter()
        .zip(w.values())
        .zip(&r2)
        .filter(|(_, &q)| q < rr)
        .map(|((z, &wv), _)| wv * z.norm_sqr().powf(e))
        .sum();
    Ok(u.grid().cell_volume() * sum)
}

/// Max |u| on the outer shell of the box (within two cells of the seam).
pub fn boundary_tail(u: &Field) -> Result<f64> {
    let phys = spectral::to_physical(u)?;
    let grid = u.grid();
    let m = grid.points_per_axis();
    let xs = grid.axis_coords();
    let cut = grid.half_width() - 2.0 * grid.spacing();
    let mut worst = 0.0f64;
    for (idx, z) in phys.values().iter().enumerate() {
        let ix = grid.unravel(idx);
        let mut near = false;
        for a in 0..grid.dim() {
            if xs[ix[a]].abs() >= cut {
                near = true;
                break;
            }
        }
        if near {
            worst = worst.max(z.norm());
        }
    }
    Ok(worst)
}

/// One time-sample of every monitored functional along a trajectory.
///
/// `me`/`mg` are NaN when no ground-state reference is available.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    /// `‖D^s u‖²`.
    pub kinetic_sq: f64,
    pub potential: f64,
    pub virial: f64,
    /// Localized virial at the primary radius.
    pub m_r: f64,
    pub local: Vec<LocalQuantities>,
    pub me: f64,
    pub mg: f64,
    pub sup_norm: f64,
    pub boundary_tail: f64,
}

// ---------------------------------------------------------------------------
// Localized virial and its evolution
// ---------------------------------------------------------------------------

/// `M_R[u] = 2 Im ∫ ū ∇f_R·∇u dx`.
pub fn localized_virial(u: &Field, cutoff: &Cutoff) -> Result<f64> {
    if cutoff.kind != CutoffKind::Virial {
        return Err(CoreError::Contract(
            "localized_virial needs the virial cutoff".into(),
        ));
    }
    let phys = spectral::to_physical(u)?;
    let grads = spectral::gradient(&phys)?;
    let grid = u.grid();
    let xs = grid.axis_coords();
    let r2 = grid.radius_sq_table();
    let mut acc = 0.0f64;
    for (idx, z) in phys.values().iter().enumerate() {
        let ix = grid.unravel(idx);
        let slope = cutoff.slope_over_r(r2[idx].sqrt());
        let mut dot = Complex64::new(0.0, 0.0);
        for a in 0..grid.dim() {
            dot += grads[a].values()[idx] * xs[ix[a]];
        }
        acc += slope * (z.conj() * dot).im;
    }
    Ok(2.0 * grid.cell_volume() * acc)
}

/// Per-term breakdown of the virial evolution formula.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VirialRhs {
    /// `4∫ m^s ∫_{|x|<R} |∇u_m|²`.
    pub hessian_ball: f64,
    /// `4∫ m^s ∫_{R<|x|<2R} f''(|x|/R) |∇u_m|²`.
    pub hessian_annulus: f64,
    /// `−∫ m^s ∫ Δ²f_R |u_m|²`.
    pub bilaplacian: f64,
    /// `−4sB/(1+p) ∫_{|x|<R} w |u|^{p+1}`.
    pub potential_ball: f64,
    /// `+2(p−1)/(1+p) ∫_{|x|>R} (N−Δf_R) w |u|^{p+1}`.
    pub potential_exterior: f64,
    /// `−4b/(1+p) ∫_{|x|>R} (f_R'(r)/r) w |u|^{p+1}`.
    pub weight_exterior: f64,
    pub total: f64,
}

/// Evaluates the six-term right-hand side of `d/dt M_R` for a (radial) state.
///
/// The sign convention of the potential terms follows the focusing equation;
/// for defocusing runs the three potential terms flip sign.
pub fn virial_rhs(
    u: &Field,
    w: &WeightField,
    params: &crate::model::ModelParams,
    exps: &crate::model::DerivedExponents,
    cutoff: &Cutoff,
    quad: &MQuadrature,
) -> Result<VirialRhs> {
    if cutoff.kind != CutoffKind::Virial {
        return Err(CoreError::Contract(
            "virial_rhs needs the virial cutoff".into(),
        ));
    }
    let grid = u.grid();
    let dim = grid.dim();
    let h_n = grid.cell_volume();
    let r2 = grid.radius_sq_table();
    let rr = cutoff.radius * cutoff.radius;
    let rr2 = 4.0 * rr;
    let cs = spectral::resolvent_normalization(params.s);

    // Geometric tables.
    let mut annulus_fpp = vec![0.0f64; grid.len()];
    let mut bilap = vec![0.0f64; grid.len()];
    for (idx, &q) in r2.iter().enumerate() {
        let r = q.sqrt();
        if q >= rr && q < rr2 {
            annulus_fpp[idx] = cutoff.second_derivative(r);
        }
        bilap[idx] = cutoff.bilaplacian(r, dim)?;
    }
    // Δ²f_R integrates to zero over ℝ^N (compact support); enforce the same
    // for the lattice table so the mean Fourier mode drops out exactly.
    let mean = bilap.iter().sum::<f64>() / bilap.len() as f64;
    for v in bilap.iter_mut() {
        *v -= mean;
    }

    // Frequency data of u, shared across quadrature nodes.
    let hat = spectral::to_frequency(u)?;
    let xi2 = grid.freq_sq_table();
    let fs = grid.axis_freqs();

    let mut t1 = 0.0f64;
    let mut t2 = 0.0f64;
    let mut t3 = 0.0f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut grad_sq = vec![0.0f64; grid.len()];

    for &(m, wgt) in &quad.nodes {
        // |∇u_m|² accumulated over components.
        grad_sq.iter_mut().for_each(|v| *v = 0.0);
        for axis in 0..dim {
            for (idx, dst) in buf.iter_mut().enumerate() {
                let ix = grid.unravel(idx);
                let xi_a = fs[ix[axis]];
                let sym = Complex64::new(0.0, xi_a * cs / (m + xi2[idx]));
                *dst = hat.values()[idx] * sym;
            }
            spectral::inverse_in_place(&mut buf, grid);
            for (g, z) in grad_sq.iter_mut().zip(&buf) {
                *g += z.norm_sqr();
            }
        }
        let mut ball = 0.0f64;
        let mut ann = 0.0f64;
        for (idx, &g) in grad_sq.iter().enumerate() {
            if r2[idx] < rr {
                ball += g;
            } else if r2[idx] < rr2 {
                ann += annulus_fpp[idx] * g;
            }
        }
        t1 += wgt * ball;
        t2 += wgt * ann;

        // |u_m|² against Δ²f_R.
        for (idx, dst) in buf.iter_mut().enumerate() {
            *dst = hat.values()[idx] * (cs / (m + xi2[idx]));
        }
        spectral::inverse_in_place(&mut buf, grid);
        let dot: f64 = buf
            .iter()
            .zip(&bilap)
            .map(|(z, &bv)| bv * z.norm_sqr())
            .sum();
        t3 += wgt * dot;
    }
    t1 *= 4.0 * h_n;
    t2 *= 4.0 * h_n;
    t3 *= -h_n;

    if !(t1.is_finite() && t2.is_finite() && t3.is_finite()) {
        return Err(CoreError::Quadrature(
            "resolvent quadrature produced non-finite terms".into(),
        ));
    }

    // Potential terms (physical space).
    let phys = spectral::to_physical(u)?;
    let e = (params.p + 1.0) / 2.0;
    let mut pot_ball = 0.0f64;
    let mut pot_ext_weighted = 0.0f64;
    let mut pot_ext_slope = 0.0f64;
    for (idx, z) in phys.values().iter().enumerate() {
        let dens = w.values()[idx] * z.norm_sqr().powf(e);
        let r = r2[idx].sqrt();
        if r2[idx] < rr {
            pot_ball += dens;
        } else {
            pot_ext_weighted += (dim as f64 - cutoff.laplacian(r, dim)) * dens;
            pot_ext_slope += cutoff.slope_over_r(r) * dens;
        }
    }
    let sign = params.sign.sign();
    let t4 = sign * -4.0 * params.s * exps.gn_b / (1.0 + params.p) * pot_ball * h_n;
    let t5 = sign * 2.0 * (params.p - 1.0) / (1.0 + params.p) * pot_ext_weighted * h_n;
    let t6 = sign * -4.0 * params.b / (1.0 + params.p) * pot_ext_slope * h_n;

    Ok(VirialRhs {
        hessian_ball: t1,
        hessian_annulus: t2,
        bilaplacian: t3,
        potential_ball: t4,
        potential_exterior: t5,
        weight_exterior: t6,
        total: t1 + t2 + t3 + t4 + t5 + t6,
    })
}

// ---------------------------------------------------------------------------
// Balakrishnan identity and the localized energy inequality
// ---------------------------------------------------------------------------

/// Two routes to `s‖D^s u‖²`: the fractional symbol (lhs) and the resolvent
/// quadrature `∫₀^∞ m^s ‖∇u_m‖² dm` (rhs).
pub fn balakrishnan_identity(u: &Field, s: f64, quad: &MQuadrature) -> Result<(f64, f64)> {
    if !(s > 0.0 && s < 1.0) {
        return Err(CoreError::Domain(format!(
            "balakrishnan identity needs s in (0,1), got {s}"
        )));
    }
    let lhs = {
        let d = spectral::sobolev_seminorm(u, s)?;
        s * d * d
    };
    let hat = spectral::to_frequency(u)?;
    let xi2 = u.grid().freq_sq_table();
    let cs2 = spectral::resolvent_normalization(s).powi(2);
    let vol = u.grid().box_volume();
    // Mode-wise power spectrum once; quadrature weights applied per node.
    let spectrum: Vec<f64> = hat
        .values()
        .iter()
        .zip(&xi2)
        .map(|(c, &q)| q * c.norm_sqr())
        .collect();
    let mut rhs = 0.0f64;
    for &(m, wgt) in &quad.nodes {
        let node_sum: f64 = spectrum
            .iter()
            .zip(&xi2)
            .map(|(&pw, &q)| {
                let d = m + q;
                pw / (d * d)
            })
            .sum();
        rhs += wgt * node_sum;
    }
    rhs *= cs2 * vol;
    if !rhs.is_finite() {
        return Err(CoreError::Quadrature(
            "balakrishnan quadrature non-finite".into(),
        ));
    }
    Ok((lhs, rhs))
}

/// One radius of the localized-energy comparison
/// `s‖D^s(ψ_R u)‖² ≤ ∫ m^s ψ_R²|∇u_m|² + O(1/R) ≤ s‖D^s u‖² + O(1/R)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LocalizedEnergy {
    pub radius: f64,
    /// `s‖D^s(ψ_R u)‖²`.
    pub lhs: f64,
    /// `∫₀^∞ m^s ∫ ψ_R² |∇u_m|² dx dm`.
    pub middle: f64,
    /// `s‖D^s u‖²`.
    pub rhs: f64,
}

pub fn localized_energy_inequality(
    u: &Field,
    s: f64,
    radius: f64,
    quad: &MQuadrature,
) -> Result<LocalizedEnergy> {
    let grid = u.grid();
    let cutoff = Cutoff::bump(radius)?;
    let psi = cutoff.sample(grid);

    let phys = spectral::to_physical(u)?;
    let mut cut = phys.clone();
    for (z, &p) in cut.values_mut().iter_mut().zip(&psi) {
        *z *= p;
    }
    let lhs = {
        let d = spectral::sobolev_seminorm(&cut, s)?;
        s * d * d
    };
    let rhs = {
        let d = spectral::sobolev_seminorm(&phys, s)?;
        s * d * d
    };

    let hat = spectral::to_frequency(&phys)?;
    let xi2 = grid.freq_sq_table();
    let fs = grid.axis_freqs();
    let cs = spectral::resolvent_normalization(s);
    let psi_sq: Vec<f64> = psi.iter().map(|&p| p * p).collect();
    let mut middle = 0.0f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
    for &(m, wgt) in &quad.nodes {
        let mut node = 0.0f64;
        for axis in 0..grid.dim() {
            for (idx, dst) in buf.iter_mut().enumerate() {
                let ix = grid.unravel(idx);
                let sym = Complex64::new(0.0, fs[ix[axis]] * cs / (m + xi2[idx]));
                *dst = hat.values()[idx] * sym;
            }
            spectral::inverse_in_place(&mut buf, grid);
            node += buf
                .iter()
                .zip(&psi_sq)
                .map(|(z, &p)| p * z.norm_sqr())
                .sum::<f64>();
        }
        middle += wgt * node;
    }
    middle *= grid.cell_volume();

    Ok(LocalizedEnergy {
        radius,
        lhs,
        middle,
        rhs,
    })
}

// ---------------------------------------------------------------------------
// Morawetz bound, decay scan, radial Sobolev
// ---------------------------------------------------------------------------

/// Space-time local potential against its `R + T·R^{−b}` envelope.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MorawetzBound {
    pub radius: f64,
    pub horizon: f64,
    /// `∫₀^T ∫_{|x|<R} |x|^{−b}|u|^{p+1} dx dt` (trapezoid in `t`).
    pub spacetime_integral: f64,
    /// `R + T·R^{−b}`.
    pub envelope: f64,
    pub ratio: f64,
}

/// Integrates the recorded local potential at one radius over the trajectory.
pub fn morawetz_spacetime(records: &[DiagnosticsRecord], radius: f64, b: f64) -> Result<MorawetzBound> {
    if records.len() < 2 {
        return Err(CoreError::InsufficientData(
            "morawetz bound needs at least two records".into(),
        ));
    }
    let series: Vec<(f64, f64)> = records
        .iter()
        .map(|rec| {
            rec.local
                .iter()
                .find(|lq| (lq.radius - radius).abs() < 1e-9)
                .map(|lq| (rec.t, lq.potential))
                .ok_or_else(|| {
                    CoreError::Contract(format!(
                        "records do not carry local potential at R = {radius}"
                    ))
                })
        })
        .collect::<Result<_>>()?;
    let mut integral = 0.0;
    for pair in series.windows(2) {
        let (t0, v0) = pair[0];
        let (t1, v1) = pair[1];
        integral += 0.5 * (v0 + v1) * (t1 - t0);
    }
    let horizon = series.last().unwrap().0 - series.first().unwrap().0;
    let envelope = radius + horizon * radius.powf(-b);
    Ok(MorawetzBound {
        radius,
        horizon,
        spacetime_integral: integral,
        envelope,
        ratio: integral / envelope,
    })
}

/// One row of the local decay table.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayRow {
    pub radius: f64,
    /// Value at the start of the scan window `[T/2, T]`.
    pub start_mass: f64,
    pub start_potential: f64,
    /// Minima over the window — the scattering signal.
    pub min_mass: f64,
    pub min_potential: f64,
    pub decaying: bool,
}

/// Scans the last half of a trajectory for local-mass/potential decay.
pub fn local_decay_scan(records: &[DiagnosticsRecord], radii: &[f64]) -> Result<Vec<DecayRow>> {
    if records.len() < 4 {
        return Err(CoreError::InsufficientData(
            "decay scan needs at least four records".into(),
        ));
    }
    let t_end = records.last().unwrap().t;
    let t_half = records.first().unwrap().t + 0.5 * (t_end - records.first().unwrap().t);
    let window: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.t >= t_half).collect();
    if window.len() < 2 {
        return Err(CoreError::InsufficientData(
            "decay scan window has fewer than two records".into(),
        ));
    }
    let mut out = Vec::with_capacity(radii.len());
    for &radius in radii {
        let series: Vec<(f64, f64)> = window
            .iter()
            .map(|rec| {
                rec.local
                    .iter()
                    .find(|lq| (lq.radius - radius).abs() < 1e-9)
                    .map(|lq| (lq.mass, lq.potential))
                    .ok_or_else(|| {
                        CoreError::Contract(format!(
                            "records do not carry local quantities at R = {radius}"
                        ))
                    })
            })
            .collect::<Result<_>>()?;
        let (start_mass, start_potential) = series[0];
        let min_mass = series.iter().map(|&(m, _)| m).fold(f64::MAX, f64::min);
        let min_potential = series.iter().map(|&(_, p)| p).fold(f64::MAX, f64::min);
        out.push(DecayRow {
            radius,
            start_mass,
            start_potential,
            min_mass,
            min_potential,
            decaying: min_mass < 0.5 * start_mass.max(1e-300),
        });
    }
    Ok(out)
}

/// Radial Sobolev check: `sup_{|x|≥h} |x|^{N/2−α}|u|` against `‖D^α u‖`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RadialSobolev {
    pub lhs_sup: f64,
    pub rhs: f64,
    pub ratio: f64,
}

pub fn radial_sobolev_check(u: &Field, alpha: f64) -> Result<RadialSobolev> {
    let n = u.grid().dim() as f64;
    if !(alpha > 0.5 && alpha < n / 2.0) {
        return Err(CoreError::Domain(format!(
            "radial Sobolev exponent must lie in (1/2, N/2), got {alpha}"
        )));
    }
    let phys = spectral::to_physical(u)?;
    let r2 = u.grid().radius_sq_table();
    let h2 = u.grid().spacing() * u.grid().spacing();
    let expo = n / 2.0 - alpha;
    let lhs_sup = phys
        .values()
        .iter()
        .zip(&r2)
        .filter(|(_, &q)| q >= h2 * (1.0 - 1e-12))
        .map(|(z, &q)| q.powf(expo / 2.0) * z.norm())
        .fold(0.0, f64::max);
    let rhs = spectral::sobolev_seminorm(&phys, alpha)?;
    Ok(RadialSobolev {
        lhs_sup,
        rhs,
        ratio: lhs_sup / rhs.max(1e-300),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, Nonlinearity, WeightField};
    use crate::quadrature::MQuadrature;
    use num_complex::Complex64;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn virial_template_pointwise_properties() {
        // f'' ≤ 1, f'(r) ≤ r, N − Δf_R ≥ 0 — exact on a dense radius sweep;
        // plateau beyond 2R and the quadratic core are exact.
        let c = Cutoff::virial(4.0).unwrap();
        for dim in [2usize, 3] {
            for i in 0..=4000 {
                let r = i as f64 * 0.004; // up to 4R
                let fpp = c.second_derivative(r);
                assert!(fpp <= 1.0 + 1e-12, "f'' = {fpp} at r = {r}");
                assert!(c.derivative(r) <= r + 1e-12, "f' > r at r = {r}");
                let nd = dim as f64 - c.laplacian(r, dim);
                assert!(nd >= -1e-12, "N - Δf_R = {nd} at r = {r}, dim {dim}");
            }
        }
        // Quadratic core and plateau.
        assert!(rel_err(c.value(2.0), 0.5 * 2.0 * 2.0) < 1e-15);
        assert!((c.value(9.0) - c.value(8.0)).abs() < 1e-12);
        assert!((c.derivative(8.5)).abs() < 1e-15);
        // f''(0) = 1 inside the ball, Δf_R = N there.
        assert_eq!(c.second_derivative(1.0), 1.0);
        assert!(rel_err(c.laplacian(3.0, 2), 2.0) < 1e-15);
        assert!(rel_err(c.laplacian(3.0, 3), 3.0) < 1e-15);
    }

    #[test]
    fn virial_template_slope_must_descend() {
        // The plateau forces f'' < 0 somewhere on the annulus: ∫₁² f'' = −1.
        let c = Cutoff::virial(1.0).unwrap();
        let min_fpp = (0..1000)
            .map(|i| c.second_derivative(1.0 + i as f64 * 0.001))
            .fold(f64::MAX, f64::min);
        assert!(min_fpp < -0.5, "expected a negative dip, min f'' = {min_fpp}");
    }

    #[test]
    fn bump_template_support_and_range() {
        let c = Cutoff::bump(2.0).unwrap();
        for i in 0..=3000 {
            let r = i as f64 * 0.002;
            let v = c.value(r);
            assert!((0.0..=1.0).contains(&v));
            if r <= 1.0 {
                assert_eq!(v, 1.0);
            }
            if r >= 2.0 {
                assert_eq!(v, 0.0);
            }
        }
        // C¹ sanity at the joints.
        assert!(c.derivative(1.0 - 1e-12).abs() < 1e-6);
        assert!(c.derivative(2.0 + 1e-12).abs() < 1e-6);
    }

    #[test]
    fn bilaplacian_is_compactly_supported_and_mean_free() {
        let c = Cutoff::virial(3.0).unwrap();
        assert_eq!(c.bilaplacian(1.0, 2).unwrap(), 0.0);
        assert_eq!(c.bilaplacian(7.0, 2).unwrap(), 0.0);
        // On a grid, the lattice sum of Δ²f_R is a small discretization
        // remainder of the exact zero integral.
        let g = Grid::new(2, 128, 12.0).unwrap();
        let r2 = g.radius_sq_table();
        let sum: f64 = r2
            .iter()
            .map(|&q| c.bilaplacian(q.sqrt(), 2).unwrap())
            .sum::<f64>()
            * g.cell_volume();
        let scale: f64 = r2
            .iter()
            .map(|&q| c.bilaplacian(q.sqrt(), 2).unwrap().abs())
            .sum::<f64>()
            * g.cell_volume();
        assert!(sum.abs() < 1e-3 * scale, "sum {sum}, scale {scale}");
    }

    #[test]
    fn localized_virial_vanishes_on_real_fields() {
        let g = Grid::new(2, 64, 8.0).unwrap();
        let u = Field::gaussian(g, 1.3, 1.0, &[]);
        let c = Cutoff::virial(2.0).unwrap();
        let m = localized_virial(&u, &c).unwrap();
        assert!(m.abs() < 1e-12, "M_R = {m}");
    }

    #[test]
    fn localized_virial_matches_finite_difference_oracle() {
        // Drifting Gaussian: compare against direct quadrature of the
        // defining integral with a 4th-order finite-difference gradient.
        let g = Grid::new(2, 128, 10.0).unwrap();
        let v = [0.9, -0.4];
        let u = Field::gaussian(g, 1.0, 1.0, &v);
        let c = Cutoff::virial(4.0).unwrap();
        let spectral_val = localized_virial(&u, &c).unwrap();

        let m = g.points_per_axis();
        let h = g.spacing();
        let xs = g.axis_coords();
        let r2 = g.radius_sq_table();
        let vals = u.values();
        let mut oracle = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let idx = i * m + j;
                let stencil = |di: isize, dj: isize| {
                    let ii = (i as isize + di).rem_euclid(m as isize) as usize;
                    let jj = (j as isize + dj).rem_euclid(m as isize) as usize;
                    vals[ii * m + jj]
                };
                let dx = (8.0 * (stencil(1, 0) - stencil(-1, 0))
                    - (stencil(2, 0) - stencil(-2, 0)))
                    / (12.0 * h);
                let dy = (8.0 * (stencil(0, 1) - stencil(0, -1))
                    - (stencil(0, 2) - stencil(0, -2)))
                    / (12.0 * h);
                let slope = c.slope_over_r(r2[idx].sqrt());
                let dot = dx * xs[i] + dy * xs[j];
                oracle += slope * (vals[idx].conj() * dot).im;
            }
        }
        oracle *= 2.0 * g.cell_volume();
        assert!(
            rel_err(spectral_val, oracle) < 1e-4,
            "spectral {spectral_val} vs oracle {oracle}"
        );
    }

    #[test]
    fn balakrishnan_on_zero_and_plane_wave() {
        let g = Grid::new(2, 64, 8.0).unwrap();
        let quad = MQuadrature::build(0.8, g.min_nonzero_freq_sq(), g.max_freq_radius().powi(2), 128, 1e-8)
            .unwrap();
        let zero = Field::zeros(g);
        let (l0, r0) = balakrishnan_identity(&zero, 0.8, &quad).unwrap();
        assert_eq!(l0, 0.0);
        assert!(r0.abs() < 1e-300);

        // Single mode: both sides reduce to s|ξ|^{2s} M[u].
        let xi1 = 3.0 * std::f64::consts::PI / g.half_width();
        let u = Field::from_fn(g, |x| Complex64::from_polar(1.0, xi1 * x[0]));
        let (lhs, rhs) = balakrishnan_identity(&u, 0.8, &quad).unwrap();
        let exact = 0.8 * xi1.powf(1.6) * crate::model::mass(&u);
        assert!(rel_err(lhs, exact) < 1e-12);
        assert!(rel_err(rhs, exact) < 1e-3, "rhs {rhs} vs {exact}");
    }

    #[test]
    fn balakrishnan_on_gaussian_half_s() {
        let g = Grid::new(2, 128, 12.0).unwrap();
        let quad = MQuadrature::build(0.5, g.min_nonzero_freq_sq(), g.max_freq_radius().powi(2), 128, 1e-8)
            .unwrap();
        let u = Field::gaussian(g, 1.0, 1.0, &[]);
        let (lhs, rhs) = balakrishnan_identity(&u, 0.5, &quad).unwrap();
        assert!(rel_err(lhs, rhs) < 5e-3, "lhs {lhs} vs rhs {rhs}");
        // Refinement stability.
        let (_, rhs2) = balakrishnan_identity(&u, 0.5, &quad.refined()).unwrap();
        assert!(rel_err(rhs, rhs2) < 1e-3);
    }

    #[test]
    fn localized_energy_trivial_when_cutoff_covers_box() {
        let g = Grid::new(2, 64, 8.0).unwrap();
        let quad = MQuadrature::build(0.8, g.min_nonzero_freq_sq(), g.max_freq_radius().powi(2), 96, 1e-7)
            .unwrap();
        let u = Field::gaussian(g, 1.0, 1.2, &[0.3, 0.0]);
        // R large enough that ψ_R ≡ 1 on the whole box (corner radius √2 L).
        let le = localized_energy_inequality(&u, 0.8, 3.0 * g.half_width(), &quad).unwrap();
        assert!(rel_err(le.lhs, le.rhs) < 1e-12);
    }

    #[test]
    fn localized_energy_sweep_has_bounded_slack() {
        let g = Grid::new(2, 64, 8.0).unwrap();
        let quad = MQuadrature::build(0.8, g.min_nonzero_freq_sq(), g.max_freq_radius().powi(2), 96, 1e-7)
            .unwrap();
        let u = Field::gaussian(g, 1.0, 1.0, &[]);
        let radii = [1.0, 2.0, 4.0];
        let mut gaps = Vec::new();
        for &r in &radii {
            let le = localized_energy_inequality(&u, 0.8, r, &quad).unwrap();
            // The chain lhs ≤ middle + O(1/R) ≤ rhs + O(1/R).
            gaps.push(((le.lhs - le.rhs) * r, (le.lhs - le.middle) * r));
        }
        // gap·R stays bounded across the dyadic sweep.
        let worst = gaps
            .iter()
            .map(|&(a, b)| a.abs().max(b.abs()))
            .fold(0.0, f64::max);
        assert!(worst < 10.0, "gap·R = {worst}");
    }

    #[test]
    fn local_mass_is_monotone_in_radius() {
        let g = Grid::new(2, 64, 8.0).unwrap();
        let u = Field::gaussian(g, 1.0, 1.5, &[]);
        let mut prev = 0.0;
        for r in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let lm = local_mass(&u, r).unwrap();
            assert!(lm >= prev);
            prev = lm;
        }
        assert!(prev <= crate::model::mass(&u) + 1e-12);
    }

    #[test]
    fn radial_sobolev_scaling_invariance_and_corpus() {
        let g = Grid::new(2, 128, 16.0).unwrap();
        let alpha = 0.8;
        let mut ratios = Vec::new();
        for i in 0..20 {
            let width = 0.5 + 0.15 * i as f64;
            let u = Field::gaussian(g, 1.0, width, &[]);
            let rs = radial_sobolev_check(&u, alpha).unwrap();
            ratios.push(rs.ratio);
        }
        let mut sorted = ratios.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        for &r in &ratios {
            assert!(r < 2.0 * median && r > median / 2.0, "ratio {r} vs median {median}");
        }
        assert!(matches!(
            radial_sobolev_check(&Field::gaussian(g, 1.0, 1.0, &[]), 0.3),
            Err(CoreError::Domain(_))
        ));
    }

    #[test]
    fn virial_rhs_bilaplacian_term_scales_like_r_to_minus_2s() {
        let params = ModelParams::new(2, 0.8, 0.4, 3.0, Nonlinearity::Focusing).unwrap();
        let exps = params.derive();
        let g = Grid::new(2, 128, 16.0).unwrap();
        let w = WeightField::build(g, params.b).unwrap();
        let u = Field::gaussian(g, 1.0, 1.0, &[]);
        let quad = MQuadrature::build(
            params.s,
            g.min_nonzero_freq_sq(),
            g.max_freq_radius().powi(2),
            128,
            1e-7,
        )
        .unwrap();
        let mut vals = Vec::new();
        for &r in &[2.0f64, 4.0, 8.0] {
            let c = Cutoff::virial(r).unwrap();
            let rhs = virial_rhs(&u, &w, &params, &exps, &c, &quad).unwrap();
            vals.push((r, rhs.bilaplacian.abs()));
        }
        // log-log slope across the dyadic sweep within ±0.3 of −2s.
        let slope = ((vals[2].1 / vals[0].1).ln()) / ((vals[2].0 / vals[0].0).ln());
        assert!(
            (slope + 2.0 * params.s).abs() < 0.3,
            "slope {slope}, expected {}",
            -2.0 * params.s
        );
    }

    #[test]
    fn decay_scan_flags_static_profile() {
        // A trajectory whose local mass never decays must not be marked
        // decaying.
        let rec = |t: f64, mass: f64| DiagnosticsRecord {
            t,
            mass: 1.0,
            energy: 1.0,
            kinetic_sq: 1.0,
            potential: 1.0,
            virial: 0.0,
            m_r: 0.0,
            local: vec![LocalQuantities {
                radius: 4.0,
                mass,
                potential: mass,
            }],
            me: f64::NAN,
            mg: f64::NAN,
            sup_norm: 1.0,
            boundary_tail: 0.0,
        };
        let records: Vec<_> = (0..10).map(|i| rec(i as f64, 1.0)).collect();
        let rows = local_decay_scan(&records, &[4.0]).unwrap();
        assert!(!rows[0].decaying);
        let records: Vec<_> = (0..10)
            .map(|i| rec(i as f64, 1.0 / (1.0 + i as f64)))
            .collect();
        let rows = local_decay_scan(&records, &[4.0]).unwrap();
        assert!(rows[0].decaying);
    }
}
