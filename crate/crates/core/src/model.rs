//! Model parameters, derived exponents, the singular weight `|x|^{−b}` and
//! the conserved/threshold functionals.
//!
//! The admissible (inter-critical) parameter window is
//!
//! ```text
//!   N ∈ {2,3},   N/(2N−1) < s < 1,   0 < b < 2s,   p_* < p < p^*,
//!   p_* = 1 + 2(2s−b)/N,   p^* = 1 + 2(2s−b)/(N−2s),
//! ```
//!
//! equivalent to `0 < s_c < s` for the critical index
//! `s_c = N/2 − (2s−b)/(p−1)`.  The Gagliardo–Nirenberg pair
//!
//! ```text
//!   B = (N(p−1) + 2b)/(2s),   A = p + 1 − B
//! ```
//!
//! satisfies `A + B = p+1`, `(p−1)·s_c = s·(B−2)` and `γ_c (B−2) = A` with
//! `γ_c = (s−s_c)/s_c`; these identities are load-bearing for the threshold
//! algebra and are asserted in tests to machine precision.
//!
//! Functionals (all with the uniform-grid quadrature):
//!
//! * mass `M[u] = ∫|u|²`,
//! * potential `P[u] = ∫|x|^{−b}|u|^{p+1}`,
//! * energy `E[u] = ‖D^s u‖² ∓ 2/(p+1)·P[u]` (− focusing, + defocusing),
//! * virial `I[u] = ‖D^s u‖² − B/(p+1)·P[u]`,
//! * the scale-invariant ratios `ME`, `MG` against the ground state, where
//!   `MG` uses the fractional seminorm `‖D^s·‖` throughout.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::quadrature::integrate_adaptive;
use crate::spectral::{self, Field, Grid};
use crate::Result;

/// Sign of the nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Focusing,
    Defocusing,
}

impl Nonlinearity {
    /// +1 for focusing, −1 for defocusing (the sign of the potential term in
    /// the equation's right-hand side, and of the nonlinear phase rotation).
    pub fn sign(self) -> f64 {
        match self {
            Nonlinearity::Focusing => 1.0,
            Nonlinearity::Defocusing => -1.0,
        }
    }
}

/// Physical parameters of the equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dim: usize,
    pub s: f64,
    pub b: f64,
    pub p: f64,
    pub sign: Nonlinearity,
}

impl ModelParams {
    /// Validates the inter-critical admissibility window; the error names the
    /// violated bound.
    pub fn new(dim: usize, s: f64, b: f64, p: f64, sign: Nonlinearity) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(CoreError::Validation(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        let n = dim as f64;
        let s_low = n / (2.0 * n - 1.0);
        if !(s > s_low && s < 1.0) {
            return Err(CoreError::Validation(format!(
                "fractional order must satisfy N/(2N-1) = {s_low} < s < 1, got s = {s}"
            )));
        }
        if !(b > 0.0 && b < 2.0 * s) {
            return Err(CoreError::Validation(format!(
                "weight exponent must satisfy 0 < b < 2s = {}, got b = {b}",
                2.0 * s
            )));
        }
        let p_lower = 1.0 + 2.0 * (2.0 * s - b) / n;
        let p_upper = 1.0 + 2.0 * (2.0 * s - b) / (n - 2.0 * s);
        if !(p > p_lower && p < p_upper) {
            return Err(CoreError::Validation(format!(
                "nonlinearity power must satisfy p_* = {p_lower} < p < p^* = {p_upper}, got p = {p}"
            )));
        }
        let params = ModelParams { dim, s, b, p, sign };
        let exps = params.derive_unchecked();
        if !(exps.s_c > 0.0 && exps.s_c < s) {
            return Err(CoreError::Validation(format!(
                "critical index s_c = {} must lie in (0, s)",
                exps.s_c
            )));
        }
        Ok(params)
    }

    fn derive_unchecked(&self) -> DerivedExponents {
        let n = self.dim as f64;
        let s_c = n / 2.0 - (2.0 * self.s - self.b) / (self.p - 1.0);
        let gamma_c = (self.s - s_c) / s_c;
        let gn_b = (n * (self.p - 1.0) + 2.0 * self.b) / (2.0 * self.s);
        let gn_a = self.p + 1.0 - gn_b;
        DerivedExponents {
            s_c,
            gamma_c,
            gn_b,
            gn_a,
            p_lower: 1.0 + 2.0 * (2.0 * self.s - self.b) / n,
            p_upper: 1.0 + 2.0 * (2.0 * self.s - self.b) / (n - 2.0 * self.s),
        }
    }

    /// Derived exponents for admissible parameters.
    pub fn derive(&self) -> DerivedExponents {
        self.derive_unchecked()
    }
}

/// Exponents derived from [`ModelParams`].
///
/// `gn_a`/`gn_b` are the mass and kinetic exponents of the sharp
/// Gagliardo–Nirenberg inequality `P[u] ≤ K_opt ‖u‖^A ‖D^s u‖^B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedExponents {
    pub s_c: f64,
    pub gamma_c: f64,
    pub gn_a: f64,
    pub gn_b: f64,
    pub p_lower: f64,
    pub p_upper: f64,
}

// ---------------------------------------------------------------------------
// The singular weight
// ---------------------------------------------------------------------------

/// `|x|^{−b}` sampled on the grid, with the origin cell replaced by its cell
/// average so the quadrature of `w·|u|^{p+1}` stays consistent with the
/// integrable singularity (`b < 2s < N`).
#[derive(Clone, Debug)]
pub struct WeightField {
    grid: Grid,
    exponent: f64,
    values: Vec<f64>,
    max_off_origin: f64,
}

/// Cell average `(2h)^{−N} ∫_{[−h,h]^N} |x|^{−b} dx`, reduced to a smooth
/// one- or two-dimensional integral in polar form and evaluated to near
/// machine precision.
pub fn origin_cell_average(dim: usize, b: f64, h: f64) -> f64 {
    let c = match dim {
        2 => {
            let inner = integrate_adaptive(
                |theta: f64| theta.cos().powf(b - 2.0),
                0.0,
                std::f64::consts::FRAC_PI_4,
                1e-13,
            );
            8.0 / (2.0 - b) * inner
        }
        _ => {
            // ∫_{[−1,1]²} (1+u²+v²)^{−b/2} du dv by iterated quadrature.
            let inner = integrate_adaptive(
                |u: f64| {
                    integrate_adaptive(
                        |v: f64| (1.0 + u * u + v * v).powf(-b / 2.0),
                        0.0,
                        1.0,
                        1e-12,
                    )
                },
                0.0,
                1.0,
                1e-12,
            ) * 4.0;
            6.0 / (3.0 - b) * inner
        }
    };
    // (2h)^{−N} · h^{N−b} · C_N(b)
    h.powf(-b) * c / (2.0f64).powi(dim as i32)
}

impl WeightField {
    pub fn build(grid: Grid, b: f64) -> Result<WeightField> {
        if !(b > 0.0 && b < grid.dim() as f64) {
            return Err(CoreError::Validation(format!(
                "weight exponent must satisfy 0 < b < N = {}, got {b}",
                grid.dim()
            )));
        }
        let r2 = grid.radius_sq_table();
        let origin = origin_cell_average(grid.dim(), b, grid.spacing());
        let values = r2
            .iter()
            .map(|&q| if q == 0.0 { origin } else { q.powf(-b / 2.0) })
            .collect();
        Ok(WeightField {
            grid,
            exponent: b,
            values,
        })
    }

    /// Uniform weight (used for linear runs where the nonlinearity is off).
    pub fn constant(grid: Grid, exponent: f64, value: f64) -> WeightField {
        WeightField {
            grid,
            exponent,
            values: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest weight value away from the origin cell (attained at the
    /// nearest neighbor, `h^{−b}`); used by the time-step controller.
    pub fn max_off_origin(&self) -> f64 {
        self.grid.spacing().powf(-self.exponent)
    }
}

// ---------------------------------------------------------------------------
// Functionals
// ---------------------------------------------------------------------------

/// Mass `M[u] = ∫|u|²` (representation-independent by Parseval).
pub fn mass(u: &Field) -> f64 {
    let n = u.l2_norm();
    n * n
}

/// Potential `P[u] = ∫|x|^{−b}|u|^{p+1}`.
pub fn potential(u: &Field, w: &WeightField, p: f64) -> Result<f64> {
    if u.grid() != w.grid() {
        return Err(CoreError::Contract(
            "potential: field and weight grids differ".into(),
        ));
    }
    let phys = spectral::to_physical(u)?;
    let e = (p + 1.0) / 2.0;
    let sum: f64 = phys
        .values()
        .iter()
        .zip(w.values())
        .map(|(z, &wv)| wv * z.norm_sqr().powf(e))
        .sum();
    Ok(u.grid().cell_volume() * sum)
}

/// Energy `E[u] = ‖D^s u‖² − sign·2/(p+1)·P[u]`.
pub fn energy(u: &Field, w: &WeightField, params: &ModelParams) -> Result<f64> {
    let kin = spectral::sobolev_seminorm(u, params.s)?;
    let pot = potential(u, w, params.p)?;
    Ok(kin * kin - params.sign.sign() * 2.0 / (params.p + 1.0) * pot)
}

/// Virial functional `I[u] = ‖D^s u‖² − B/(p+1)·P[u]`.
pub fn virial_functional(
    u: &Field,
    w: &WeightField,
    params: &ModelParams,
    exps: &DerivedExponents,
) -> Result<f64> {
    let kin = spectral::sobolev_seminorm(u, params.s)?;
    let pot = potential(u, w, params.p)?;
    Ok(kin * kin - exps.gn_b / (params.p + 1.0) * pot)
}

/// All scalar functionals of a state, computed together.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FunctionalSet {
    pub mass: f64,
    /// `‖D^s u‖²`.
    pub kinetic_sq: f64,
    pub potential: f64,
    pub energy: f64,
    pub virial: f64,
}

pub fn evaluate_functionals(
    u: &Field,
    w: &WeightField,
    params: &ModelParams,
    exps: &DerivedExponents,
) -> Result<FunctionalSet> {
    let kin = spectral::sobolev_seminorm(u, params.s)?;
    let kinetic_sq = kin * kin;
    let pot = potential(u, w, params.p)?;
    Ok(FunctionalSet {
        mass: mass(u),
        kinetic_sq,
        potential: pot,
        energy: kinetic_sq - params.sign.sign() * 2.0 / (params.p + 1.0) * pot,
        virial: kinetic_sq - exps.gn_b / (params.p + 1.0) * pot,
    })
}

// ---------------------------------------------------------------------------
// Threshold quantities and the dichotomy classifier
// ---------------------------------------------------------------------------

/// The ground-state norms the scale-invariant ratios are measured against.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GroundReference {
    pub mass: f64,
    /// `‖D^s Q‖²`.
    pub kinetic_sq: f64,
    pub potential: f64,
    pub energy: f64,
}

/// `ME[u] = (M[u]/M[Q])^{γ_c} · E[u]/E[Q]` and
/// `MG[u] = (‖u‖/‖Q‖)^{γ_c} · ‖D^s u‖/‖D^s Q‖`.
pub fn me_mg(
    u: &Field,
    w: &WeightField,
    params: &ModelParams,
    exps: &DerivedExponents,
    ground: &GroundReference,
) -> Result<(f64, f64)> {
    if !(ground.energy > 0.0) || !(ground.mass > 0.0) || !(ground.kinetic_sq > 0.0) {
        return Err(CoreError::Contract(format!(
            "ground reference is inconsistent: M = {}, E = {}, K = {}",
            ground.mass, ground.energy, ground.kinetic_sq
        )));
    }
    let m_u = mass(u);
    let e_u = energy(u, w, params)?;
    let kin = spectral::sobolev_seminorm(u, params.s)?;
    let me = (m_u / ground.mass).powf(exps.gamma_c) * (e_u / ground.energy);
    let mg = (m_u / ground.mass).powf(exps.gamma_c / 2.0) * (kin / ground.kinetic_sq.sqrt());
    Ok((me, mg))
}

/// Regime predicted by the scale-invariant ratios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdClass {
    GlobalScatteringRegime,
    BlowupRegime,
    Indeterminate,
}

/// Extra hypotheses under which the global branch is known to scatter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScatteringConditions {
    pub satisfied: bool,
    pub detail: String,
}

/// Width of the boundary band around `ME = 1`, `MG = 1` that is reported as
/// indeterminate (the threshold inequalities are strict).
pub const THRESHOLD_BOUNDARY_TOL: f64 = 1e-6;

/// Classifier output plus the instantaneous monitor quantities.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub class: ThresholdClass,
    pub me: f64,
    pub mg: f64,
    /// `P[u]·M[u]^{γ_c}` — the quantity whose sub-threshold bound propagates
    /// along the flow.
    pub potential_mass: f64,
    /// Same quantity at the ground state.
    pub potential_mass_ground: f64,
    /// `I[u]`, whose negativity drives blow-up.
    pub virial: f64,
    pub scattering_conditions: ScatteringConditions,
}

fn scattering_side_conditions(params: &ModelParams) -> ScatteringConditions {
    let n = params.dim as f64;
    if params.dim >= 3 {
        let mut ok = true;
        let mut notes = Vec::new();
        if !(params.s > n / (n + 1.0)) {
            ok = false;
            notes.push(format!("needs s > N/(N+1) = {}", n / (n + 1.0)));
        }
        if !(params.p > 2.0 * (1.0 - params.b / n)) {
            ok = false;
            notes.push(format!(
                "needs p > 2(1 - b/N) = {}",
                2.0 * (1.0 - params.b / n)
            ));
        }
        let p3_cap = (n - 2.0 * params.b) / (n - 2.0 * params.s);
        if params.dim == 3 && !(params.p < p3_cap) {
            ok = false;
            notes.push(format!("needs p < (N-2b)/(N-2s) = {p3_cap} in dimension 3"));
        }
        ScatteringConditions {
            satisfied: ok,
            detail: if ok {
                "dimension >= 3 scattering hypotheses hold".into()
            } else {
                notes.join("; ")
            },
        }
    } else {
        // Two-dimensional window.
        let lo = (1.0 + params.b / params.s).max(2.0);
        let hi = 1.0
            + params.b / params.s
            + (1.0 - params.b / params.s) * n / (n - 2.0 * params.s);
        let ok = params.p >= lo && params.p <= hi;
        ScatteringConditions {
            satisfied: ok,
            detail: format!(
                "dimension-2 window {} <= p <= {} is {}",
                lo,
                hi,
                if ok { "satisfied" } else { "violated" }
            ),
        }
    }
}

/// Classifies initial data against the ground-state threshold.
pub fn classify_threshold(
    u: &Field,
    w: &WeightField,
    params: &ModelParams,
    exps: &DerivedExponents,
    ground: &GroundReference,
) -> Result<ThresholdReport> {
    let (me, mg) = me_mg(u, w, params, exps, ground)?;
    let pot = potential(u, w, params.p)?;
    let m_u = mass(u);
    let virial = virial_functional(u, w, params, exps)?;
    let tol = THRESHOLD_BOUNDARY_TOL;
    let class = if me < 1.0 - tol && mg < 1.0 - tol {
        ThresholdClass::GlobalScatteringRegime
    } else if me < 1.0 - tol && mg > 1.0 + tol {
        ThresholdClass::BlowupRegime
    } else {
        ThresholdClass::Indeterminate
    };
    Ok(ThresholdReport {
        class,
        me,
        mg,
        potential_mass: pot * m_u.powf(exps.gamma_c),
        potential_mass_ground: ground.potential * ground.mass.powf(exps.gamma_c),
        virial,
        scattering_conditions: scattering_side_conditions(params),
    })
}
