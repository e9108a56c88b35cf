//! Time evolution by Strang splitting.
//!
//! One step of size `dt` is
//!
//! ```text
//!   u ← e^{−i(dt/2)D^{2s}} ∘ N_dt ∘ e^{−i(dt/2)D^{2s}} u,
//!   N_dt:  u ↦ u · exp(i·dt·sign·|x|^{−b}|u|^{p−1}),
//! ```
//!
//! where the nonlinear substep is solved in closed form (the pointwise
//! modulus is invariant under pure phase rotation), so both substeps conserve
//! the discrete mass exactly and the composition is second order in `dt`.
//! An optional 2/3-rule spectral truncation after the nonlinear substep
//! bounds aliasing from the `p`-th power.
//!
//! The step size follows `dt = dt_base / (1 + κ·‖u‖_∞^{p−1}·w_eff)` with the
//! weight evaluated away from the origin cell.  Blow-up is declared only when
//! the controller sits at its floor *and* `‖D^s u‖` has grown past
//! `gradient_cap` times its initial value; a fixed grid cannot follow
//! self-similar collapse further, so the declaration is grid-level evidence,
//! not proof.
//!
//! Scattering is monitored through back-propagated profiles
//! `φ(t) = e^{+itD^{2s}} u(t)` sampled over the last third of the run: the
//! run is a numerical scattering witness when their `H^s` Cauchy differences
//! decrease monotonically below a tolerance.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    boundary_tail, local_mass, local_potential, localized_virial, Cutoff, DiagnosticsRecord,
    LocalQuantities,
};
use crate::error::CoreError;
use crate::model::{self, DerivedExponents, GroundReference, ModelParams, WeightField};
use crate::spectral::{self, Field, Grid, Representation};
use crate::Result;

/// Number of back-propagated profiles kept for the scattering monitor,
/// spread over the last third of the run.
pub const SCATTERING_SNAPSHOTS: usize = 6;

/// Boundary-tail amplitude that flags a run as suspect.
pub const BOUNDARY_WARN_TAIL: f64 = 1e-6;

/// Time-stepping controls.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvolveControls {
    /// Base time step.
    pub dt: f64,
    /// Horizon.
    pub t_end: f64,
    /// Steps between diagnostics records.
    pub snapshot_stride: usize,
    /// Minimal step before blow-up can be declared.
    pub dt_floor: f64,
    /// `‖D^s u‖` growth factor that, together with the floor, declares
    /// blow-up.
    pub gradient_cap: f64,
    /// 2/3-rule spectral truncation after the nonlinear substep.
    pub dealias: bool,
    /// κ in the step controller `dt/(1 + κ‖u‖_∞^{p−1} w_eff)`.
    #[serde(default = "default_rate_scale")]
    pub rate_scale: f64,
    /// Boundary tail amplitude that aborts the run as contaminated
    /// (the warn level `1e−6` only flags).
    #[serde(default = "default_boundary_abort")]
    pub boundary_abort_tail: f64,
}

fn default_rate_scale() -> f64 {
    0.05
}

fn default_boundary_abort() -> f64 {
    5e-2
}

impl EvolveControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > self.dt_floor && self.dt_floor > 0.0) {
            return Err(CoreError::Validation(format!(
                "need dt > dt_floor > 0, got dt = {}, dt_floor = {}",
                self.dt, self.dt_floor
            )));
        }
        if !(self.t_end > 0.0) {
            return Err(CoreError::Validation("t_end must be positive".into()));
        }
        if !(self.gradient_cap > 1.0) {
            return Err(CoreError::Validation(
                "gradient_cap must exceed 1".into(),
            ));
        }
        if self.snapshot_stride == 0 {
            return Err(CoreError::Validation(
                "snapshot_stride must be positive".into(),
            ));
        }
        if !(self.rate_scale >= 0.0) {
            return Err(CoreError::Validation("rate_scale must be >= 0".into()));
        }
        Ok(())
    }

    pub fn defaults_for(dt: f64, t_end: f64) -> Self {
        EvolveControls {
            dt,
            t_end,
            snapshot_stride: 50,
            dt_floor: dt / 1024.0,
            gradient_cap: 10.0,
            dealias: true,
            rate_scale: default_rate_scale(),
            boundary_abort_tail: default_boundary_abort(),
        }
    }
}

/// Diagnostics configuration for a trajectory.
#[derive(Clone, Debug)]
pub struct EvolveOptions {
    /// Radii for local mass/potential records (first entry is also the
    /// localized-virial radius unless `virial_radius` overrides it).
    pub radii: Vec<f64>,
    pub virial_radius: Option<f64>,
    /// Ground-state norms for ME/MG columns (absent → NaN columns).
    pub ground: Option<GroundReference>,
}

impl EvolveOptions {
    pub fn default_for(grid: Grid) -> Self {
        EvolveOptions {
            radii: vec![grid.half_width() / 4.0],
            virial_radius: None,
            ground: None,
        }
    }
}

/// How a trajectory ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    BlowUpDetected,
    BoundaryContaminated,
}

/// Full result of a time evolution.
#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub records: Vec<DiagnosticsRecord>,
    pub outcome: Outcome,
    pub final_state: Field,
    pub final_time: f64,
    /// `e^{+itD^{2s}} u(t)` at the final time (completed runs only).
    pub scattering_profile: Option<Field>,
    /// `(t, u(t))` snapshots over the last third, for the scattering monitor.
    pub profile_history: Vec<(f64, Field)>,
    pub boundary_flagged: bool,
    pub first_boundary_time: Option<f64>,
    /// First time both blow-up conditions held.
    pub collapse_time: Option<f64>,
    pub mass_drift: f64,
    pub energy_drift: f64,
    /// Mass drift ≤ 1e−10 and energy drift ≤ 1e−6 on a completed run.
    pub conservation_ok: bool,
}

/// Adapted step size `dt_base / (1 + κ·‖u‖_∞^{p−1}·w_eff)`, clamped at the
/// floor (reaching the floor alone does not declare blow-up).
pub fn adapt_dt(u: &Field, controls: &EvolveControls, w: &WeightField, p: f64) -> f64 {
    adapt_dt_from_sup(u.sup_norm(), controls, w.max_off_origin(), p)
}

fn adapt_dt_from_sup(sup: f64, controls: &EvolveControls, w_eff: f64, p: f64) -> f64 {
    let rate = sup.powf(p - 1.0) * w_eff;
    let dt = controls.dt / (1.0 + controls.rate_scale * rate);
    dt.max(controls.dt_floor)
}

struct StepTables {
    xi2s: Vec<f64>,
    half_mult: Vec<Complex64>,
    half_dt: f64,
    dealias_keep: Vec<bool>,
}

impl StepTables {
    fn new(grid: Grid, s: f64) -> Self {
        let xi2 = grid.freq_sq_table();
        let xi2s: Vec<f64> = xi2.iter().map(|&q| q.powf(s)).collect();
        let m = grid.points_per_axis();
        let keep_axis: Vec<bool> = (0..m)
            .map(|j| {
                let signed = if j < m / 2 { j } else { m - j };
                3 * signed <= m
            })
            .collect();
        let mut dealias_keep = vec![true; grid.len()];
        for (idx, keep) in dealias_keep.iter_mut().enumerate() {
            let ix = grid.unravel(idx);
            *keep = (0..grid.dim()).all(|a| keep_axis[ix[a]]);
        }
        StepTables {
            xi2s,
            half_mult: Vec::new(),
            half_dt: f64::NAN,
            dealias_keep,
        }
    }

    fn set_dt(&mut self, dt: f64) {
        let half = 0.5 * dt;
        if self.half_dt.to_bits() == half.to_bits() {
            return;
        }
        self.half_dt = half;
        self.half_mult = self
            .xi2s
            .iter()
            .map(|&q| Complex64::from_polar(1.0, -half * q))
            .collect();
    }
}

/// Advances the raw state by one Strang step; returns `‖D^s u‖²` measured in
/// the closing half-step.
fn strang_step_raw(
    state: &mut [Complex64],
    grid: Grid,
    tables: &StepTables,
    dt: f64,
    sign: f64,
    p: f64,
    w: &WeightField,
    dealias: bool,
    vol: f64,
) -> f64 {
    // Opening half linear step.
    spectral::forward_in_place(state, grid);
    for (c, mlt) in state.iter_mut().zip(&tables.half_mult) {
        *c *= mlt;
    }
    spectral::inverse_in_place(state, grid);

    // Exact nonlinear phase.
    let phase_scale = sign * dt;
    for (z, &wv) in state.iter_mut().zip(w.values()) {
        let a = z.norm();
        if a > 0.0 {
            let theta = phase_scale * wv * a.powf(p - 1.0);
            *z *= Complex64::from_polar(1.0, theta);
        }
    }

    // Closing half linear step, with dealiasing and the kinetic norm.
    spectral::forward_in_place(state, grid);
    let mut kinetic = 0.0f64;
    if dealias {
        for ((c, mlt), (&q, &keep)) in state
            .iter_mut()
            .zip(&tables.half_mult)
            .zip(tables.xi2s.iter().zip(&tables.dealias_keep))
        {
            if keep {
                *c *= mlt;
                kinetic += q * c.norm_sqr();
            } else {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    } else {
        for ((c, mlt), &q) in state.iter_mut().zip(&tables.half_mult).zip(&tables.xi2s) {
            *c *= mlt;
            kinetic += q * c.norm_sqr();
        }
    }
    spectral::inverse_in_place(state, grid);
    kinetic * vol
}

/// One Strang step as a pure function (the fast path lives inside
/// [`evolve`]).
pub fn strang_step(
    u: &Field,
    dt: f64,
    params: &ModelParams,
    w: &WeightField,
    dealias: bool,
) -> Result<Field> {
    if !(dt > 0.0) {
        return Err(CoreError::Domain(format!("dt must be positive, got {dt}")));
    }
    let phys = spectral::to_physical(u)?;
    let grid = u.grid();
    let mut tables = StepTables::new(grid, params.s);
    tables.set_dt(dt);
    let mut state = phys.into_values();
    strang_step_raw(
        &mut state,
        grid,
        &tables,
        dt,
        params.sign.sign(),
        params.p,
        w,
        dealias,
        grid.box_volume(),
    );
    Field::from_values(grid, Representation::Physical, state)
}

fn make_record(
    t: f64,
    u: &Field,
    w: &WeightField,
    params: &ModelParams,
    exps: &DerivedExponents,
    virial_cutoff: &Cutoff,
    radii: &[f64],
    ground: Option<&GroundReference>,
) -> Result<DiagnosticsRecord> {
    let fs = model::evaluate_functionals(u, w, params, exps)?;
    let m_r = localized_virial(u, virial_cutoff)?;
    let mut local = Vec::with_capacity(radii.len());
    for &r in radii {
        local.push(LocalQuantities {
            radius: r,
            mass: local_mass(u, r)?,
            potential: local_potential(u, w, params.p, r)?,
        });
    }
    let (me, mg) = match ground {
        Some(gr) => model::me_mg(u, w, params, exps, gr)?,
        None => (f64::NAN, f64::NAN),
    };
    Ok(DiagnosticsRecord {
        t,
        mass: fs.mass,
        energy: fs.energy,
        kinetic_sq: fs.kinetic_sq,
        potential: fs.potential,
        virial: fs.virial,
        m_r,
        local,
        me,
        mg,
        sup_norm: u.sup_norm(),
        boundary_tail: boundary_tail(u)?,
    })
}

/// Evolves initial data to `t_end`, recording diagnostics every stride.
pub fn evolve(
    u0: &Field,
    params: &ModelParams,
    w: &WeightField,
    controls: &EvolveControls,
    opts: &EvolveOptions,
) -> Result<TrajectoryResult> {
    controls.validate()?;
    if !u0.is_finite() {
        return Err(CoreError::Contract("initial data is not finite".into()));
    }
    let grid = u0.grid();
    if w.grid() != grid {
        return Err(CoreError::Contract("weight grid mismatch".into()));
    }
    let exps = params.derive();
    let virial_radius = opts
        .virial_radius
        .or_else(|| opts.radii.first().copied())
        .unwrap_or(grid.half_width() / 4.0);
    let virial_cutoff = Cutoff::virial(virial_radius)?;
    let sign = params.sign.sign();
    let vol = grid.box_volume();
    let w_eff = w.max_off_origin();

    let mut tables = StepTables::new(grid, params.s);
    let u0_phys = spectral::to_physical(u0)?;
    let mut state = u0_phys.clone().into_values();

    let kin0 = {
        let d = spectral::sobolev_seminorm(&u0_phys, params.s)?;
        d * d
    };
    let gradient_cap_sq = (controls.gradient_cap * controls.gradient_cap) * kin0;

    let mut records = Vec::new();
    records.push(make_record(
        0.0,
        &u0_phys,
        w,
        params,
        &exps,
        &virial_cutoff,
        &opts.radii,
        opts.ground.as_ref(),
    )?);

    // Snapshot targets for the scattering monitor: last third of the run.
    let snapshot_times: Vec<f64> = (0..SCATTERING_SNAPSHOTS)
        .map(|k| controls.t_end * (2.0 / 3.0 + (k as f64 + 1.0) / (3.0 * SCATTERING_SNAPSHOTS as f64)))
        .collect();
    let mut profile_history: Vec<(f64, Field)> = Vec::new();

    let mut t = 0.0f64;
    let mut step_idx = 0usize;
    let mut outcome = Outcome::Completed;
    let mut boundary_flagged = false;
    let mut first_boundary_time = None;
    let mut collapse_time = None;

    while t < controls.t_end - 1e-12 * controls.t_end {
        let sup = state.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !sup.is_finite() {
            return Err(CoreError::Numerical {
                time: t,
                reason: "state became non-finite".into(),
            });
        }
        let mut dt = adapt_dt_from_sup(sup, controls, w_eff, params.p);
        let at_floor = dt <= controls.dt_floor * (1.0 + 1e-12);
        if t + dt > controls.t_end {
            dt = controls.t_end - t;
        }
        tables.set_dt(dt);
        let kinetic_sq = strang_step_raw(
            &mut state,
            grid,
            &tables,
            dt,
            sign,
            params.p,
            w,
            controls.dealias,
            vol,
        );
        t += dt;
        step_idx += 1;

        if at_floor && kinetic_sq >= gradient_cap_sq {
            collapse_time = Some(t);
            outcome = Outcome::BlowUpDetected;
        }

        let due_record = step_idx % controls.snapshot_stride == 0
            || outcome != Outcome::Completed
            || t >= controls.t_end - 1e-12 * controls.t_end;
        if due_record {
            let field = Field::from_values(grid, Representation::Physical, state.clone())?;
            if !field.is_finite() {
                return Err(CoreError::Numerical {
                    time: t,
                    reason: "state became non-finite".into(),
                });
            }
            let rec = make_record(
                t,
                &field,
                w,
                params,
                &exps,
                &virial_cutoff,
                &opts.radii,
                opts.ground.as_ref(),
            )?;
            if rec.boundary_tail > BOUNDARY_WARN_TAIL && !boundary_flagged {
                boundary_flagged = true;
                first_boundary_time = Some(t);
            }
            let contaminated = rec.boundary_tail > controls.boundary_abort_tail;
            records.push(rec);

            if profile_history.len() < snapshot_times.len()
                && t >= snapshot_times[profile_history.len()]
            {
                profile_history.push((t, field.clone()));
            }

            if outcome == Outcome::BlowUpDetected {
                break;
            }
            if contaminated {
                outcome = Outcome::BoundaryContaminated;
                break;
            }
        }
    }

    let final_state = Field::from_values(grid, Representation::Physical, state)?;
    let scattering_profile = if outcome == Outcome::Completed {
        Some(spectral::apply_isotropic(&final_state, |q| {
            Complex64::from_polar(1.0, t * q.powf(params.s))
        })?)
    } else {
        None
    };

    let mass0 = records[0].mass;
    let energy0 = records[0].energy;
    let mut mass_drift = 0.0f64;
    let mut energy_drift = 0.0f64;
    for rec in &records {
        mass_drift = mass_drift.max((rec.mass - mass0).abs() / mass0.max(1e-300));
        energy_drift = energy_drift.max((rec.energy - energy0).abs() / energy0.abs().max(1e-300));
    }
    let conservation_ok =
        outcome != Outcome::Completed || (mass_drift <= 1e-10 && energy_drift <= 1e-6);

    Ok(TrajectoryResult {
        records,
        outcome,
        final_state,
        final_time: t,
        scattering_profile,
        profile_history,
        boundary_flagged,
        first_boundary_time,
        collapse_time,
        mass_drift,
        energy_drift,
        conservation_ok,
    })
}

// ---------------------------------------------------------------------------
// Scattering monitor and linear decay
// ---------------------------------------------------------------------------

/// Result of the back-propagation Cauchy test.
#[derive(Clone, Debug)]
pub struct ScatteringReport {
    pub converged: bool,
    /// Last back-propagated profile (the scattering-state candidate).
    pub profile: Field,
    /// Last `H^s` Cauchy difference.
    pub cauchy_tail: f64,
    /// Successive differences `‖φ(t_{k+1}) − φ(t_k)‖_{H^s}`.
    pub diffs: Vec<f64>,
    pub monotone: bool,
    /// Smallest recorded local mass inside the monitor radius over the
    /// snapshot window.
    pub local_mass_signal: f64,
}

/// Checks `φ(t) = e^{+itD^{2s}} u(t)` for Cauchy convergence in `H^s`.
pub fn scattering_monitor(
    trajectory: &TrajectoryResult,
    params: &ModelParams,
    tol: f64,
    local_radius: f64,
) -> Result<ScatteringReport> {
    if trajectory.outcome != Outcome::Completed {
        return Err(CoreError::NotApplicable(format!(
            "scattering monitor needs a completed trajectory, outcome was {:?}",
            trajectory.outcome
        )));
    }
    if trajectory.profile_history.len() < SCATTERING_SNAPSHOTS {
        return Err(CoreError::InsufficientData(format!(
            "need {} snapshots, trajectory holds {}",
            SCATTERING_SNAPSHOTS,
            trajectory.profile_history.len()
        )));
    }
    let mut profiles = Vec::with_capacity(trajectory.profile_history.len());
    let mut local_signal = f64::MAX;
    for (t, u) in &trajectory.profile_history {
        let phi = spectral::apply_isotropic(u, |q| {
            Complex64::from_polar(1.0, *t * q.powf(params.s))
        })?;
        local_signal = local_signal.min(local_mass(u, local_radius)?);
        profiles.push(phi);
    }
    let mut diffs = Vec::with_capacity(profiles.len() - 1);
    for pair in profiles.windows(2) {
        let mut d = pair[1].clone();
        for (z, a) in d.values_mut().iter_mut().zip(pair[0].values()) {
            *z -= a;
        }
        diffs.push(spectral::hs_norm(&d, params.s)?);
    }
    let monotone = diffs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    let tail = *diffs.last().unwrap();
    Ok(ScatteringReport {
        converged: monotone && tail <= tol,
        profile: profiles.pop().unwrap(),
        cauchy_tail: tail,
        diffs,
        monotone,
        local_mass_signal: local_signal,
    })
}

/// Fitted decay of the free flow in one `L^r` norm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecaySlope {
    /// `r` of the norm; `f64::INFINITY` for the sup norm.
    pub r: f64,
    pub slope: f64,
    /// `−N(1/2 − 1/r)`.
    pub predicted: f64,
    /// `(t, ‖e^{−itD^{2s}}φ‖_{L^r})` samples.
    pub samples: Vec<(f64, f64)>,
}

/// Least-squares decay exponents of `‖e^{−itD^{2s}}φ‖_{L^r}` over a time
/// window; errors if the box is contaminated within the window.
pub fn dispersive_decay_check(
    phi: &Field,
    s: f64,
    times: &[f64],
    r_values: &[f64],
) -> Result<Vec<DecaySlope>> {
    if times.len() < 3 {
        return Err(CoreError::InsufficientData(
            "decay fit needs at least three times".into(),
        ));
    }
    if times.iter().any(|&t| t <= 0.0) {
        return Err(CoreError::Domain("decay times must be positive".into()));
    }
    let n = phi.grid().dim() as f64;
    let mut norms: Vec<Vec<(f64, f64)>> = vec![Vec::new(); r_values.len()];
    for &t in times {
        let ut = spectral::free_propagator(phi, t, s)?;
        let tail = boundary_tail(&ut)?;
        if tail > BOUNDARY_WARN_TAIL {
            return Err(CoreError::Numerical {
                time: t,
                reason: format!(
                    "window too long: boundary tail {tail:.3e} at t = {t} exceeds {BOUNDARY_WARN_TAIL:.0e}"
                ),
            });
        }
        for (slot, &r) in norms.iter_mut().zip(r_values) {
            let val = if r.is_infinite() {
                ut.sup_norm()
            } else {
                spectral::lr_norm(&ut, r)?
            };
            slot.push((t, val));
        }
    }
    Ok(norms
        .into_iter()
        .zip(r_values)
        .map(|(samples, &r)| {
            let pts: Vec<(f64, f64)> = samples
                .iter()
                .map(|&(t, v)| (t.ln(), v.max(1e-300).ln()))
                .collect();
            let slope = linear_fit_slope(&pts);
            let predicted = if r.is_infinite() {
                -n / 2.0
            } else {
                -n * (0.5 - 1.0 / r)
            };
            DecaySlope {
                r,
                slope,
                predicted,
                samples,
            }
        })
        .collect())
}

fn linear_fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
