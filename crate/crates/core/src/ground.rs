//! Ground-state computation by stabilized fixed-point iteration.
//!
//! The stationary profile solves
//!
//! ```text
//!   (1 + D^{2s}) Q = |x|^{−b} Q^p,
//! ```
//!
//! so `Q` is a fixed point of `T(Q) = (1 + D^{2s})^{−1}(w·Q^p)`.  Plain
//! fixed-point iteration is unstable in amplitude; the Petviashvili factor
//!
//! ```text
//!   S_n = ⟨Q_n, (1+D^{2s})Q_n⟩ / ⟨Q_n, w·Q_n^p⟩,     Q_{n+1} = S_n^γ T(Q_n),
//! ```
//!
//! with `γ = p/(p−1)` removes the unstable amplitude mode (`S = 1` at the
//! solution).  Iterates are re-symmetrized over the lattice symmetry group
//! every few steps to suppress drift away from the radial profile.
//!
//! The converged profile is checked against the Pohozaev relations
//! `‖D^s Q‖² = (B/A)‖Q‖²` and `P[Q] = ((p+1)/A)‖Q‖²`, and it determines the
//! sharp Gagliardo–Nirenberg constant both in closed form,
//! `K_opt = ((p+1)/A)(A/B)^{B/2}‖Q‖^{1−p}`, and as the measured ratio
//! `P[Q]/(‖Q‖^A ‖D^s Q‖^B)`.

use num_complex::Complex64;

use crate::error::CoreError;
use crate::model::{self, DerivedExponents, GroundReference, ModelParams, WeightField};
use crate::spectral::{self, Field, Grid, Representation};
use crate::Result;

/// Iteration controls.
#[derive(Clone, Copy, Debug)]
pub struct GroundStateOptions {
    pub max_iterations: usize,
    /// Stop when `‖Q_{n+1} − Q_n‖ / ‖Q_n‖` falls below this.
    pub rel_change_tol: f64,
    /// Stop when the equation residual falls below `residual_target·‖Q‖`.
    pub residual_target: f64,
    /// Re-symmetrize every this many iterations (0 disables).
    pub radialize_every: usize,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        GroundStateOptions {
            max_iterations: 4000,
            rel_change_tol: 1e-10,
            residual_target: 1e-9,
            radialize_every: 10,
        }
    }
}

/// Converged profile with its norms and identity residuals.
#[derive(Clone, Debug)]
pub struct GroundStateResult {
    pub q: Field,
    pub mass: f64,
    /// `‖D^s Q‖²`.
    pub kinetic_sq: f64,
    /// `P[Q]`.
    pub potential: f64,
    /// `E[Q]` (focusing sign).
    pub energy: f64,
    /// Sharp Gagliardo–Nirenberg constant (closed form).
    pub k_opt: f64,
    /// L² norm of `−D^{2s}Q − Q + w·Q^p`.
    pub residual: f64,
    pub iterations: usize,
    /// `|‖D^sQ‖² − (B/A)‖Q‖²|`.
    pub pohozaev_kinetic_residual: f64,
    /// `|P[Q] − ((p+1)/A)‖Q‖²|`.
    pub pohozaev_potential_residual: f64,
}

impl GroundStateResult {
    /// Norms needed by the threshold classifier.
    pub fn reference(&self) -> GroundReference {
        GroundReference {
            mass: self.mass,
            kinetic_sq: self.kinetic_sq,
            potential: self.potential,
            energy: self.energy,
        }
    }
}

/// Default initial guess: isotropic Gaussian of width `L/6`.
pub fn default_init(grid: Grid) -> Field {
    Field::gaussian(grid, 1.0, grid.half_width() / 6.0, &[])
}

/// Averages a field over the symmetry group of the lattice (axis reflections
/// and axis permutations).  Exact on the periodic grid: `x ↦ −x` maps index
/// `j ↦ (M−j) mod M`.
pub fn radialize(f: &Field) -> Field {
    let grid = f.grid();
    let m = grid.points_per_axis();
    let v = f.values();
    let refl = |j: usize| (m - j) % m;
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    match grid.dim() {
        2 => {
            for i in 0..m {
                let ri = refl(i);
                for j in 0..m {
                    let rj = refl(j);
                    let sum = v[i * m + j]
                        + v[ri * m + j]
                        + v[i * m + rj]
                        + v[ri * m + rj]
                        + v[j * m + i]
                        + v[rj * m + i]
                        + v[j * m + ri]
                        + v[rj * m + ri];
                    out[i * m + j] = sum / 8.0;
                }
            }
        }
        _ => {
            let idx = |a: usize, b: usize, c: usize| (a * m + b) * m + c;
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let axes = [i, j, k];
                        let mut sum = Complex64::new(0.0, 0.0);
                        for perm in [
                            [0usize, 1, 2],
                            [0, 2, 1],
                            [1, 0, 2],
                            [1, 2, 0],
                            [2, 0, 1],
                            [2, 1, 0],
                        ] {
                            let (a, b, c) = (axes[perm[0]], axes[perm[1]], axes[perm[2]]);
                            for mask in 0..8usize {
                                let aa = if mask & 1 != 0 { refl(a) } else { a };
                                let bb = if mask & 2 != 0 { refl(b) } else { b };
                                let cc = if mask & 4 != 0 { refl(c) } else { c };
                                sum += v[idx(aa, bb, cc)];
                            }
                        }
                        out[idx(i, j, k)] = sum / 48.0;
                    }
                }
            }
        }
    }
    Field::from_values(grid, f.representation(), out).expect("same-size buffer")
}

/// Maximum deviation of a field from its reflection images, relative to the
/// sup norm.
pub fn radial_asymmetry(f: &Field) -> f64 {
    let r = radialize(f);
    let sup = f.sup_norm().max(1e-300);
    f.values()
        .iter()
        .zip(r.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / sup
}

fn nonlinear_term(q: &Field, w: &WeightField, p: f64) -> Field {
    let mut out = q.clone();
    for (z, &wv) in out.values_mut().iter_mut().zip(w.values()) {
        // |q|^{p−1} q, robust against tiny negative excursions of a real
        // iterate and non-integer p.
        let a = z.norm();
        *z *= wv * a.powf(p - 1.0);
    }
    out
}

/// Computes the ground state for admissible parameters on the given grid.
///
/// `init` must be real, nonnegative and nonzero; `None` uses the default
/// Gaussian.  The stabilization removes the initial amplitude dependence.
pub fn solve_ground_state(
    params: &ModelParams,
    grid: Grid,
    init: Option<Field>,
    opts: &GroundStateOptions,
) -> Result<GroundStateResult> {
    let exps = params.derive();
    let w = WeightField::build(grid, params.b)?;
    let init = init.unwrap_or_else(|| default_init(grid));
    if init.grid() != grid {
        return Err(CoreError::Contract("init grid mismatch".into()));
    }
    let sup = init.sup_norm();
    if !(sup > 0.0) {
        return Err(CoreError::Contract("init must be nonzero".into()));
    }
    let bad = init
        .values()
        .iter()
        .any(|z| z.im.abs() > 1e-12 * sup || z.re < -1e-12 * sup);
    if bad {
        return Err(CoreError::Contract(
            "init must be real and nonnegative".into(),
        ));
    }

    let xi2 = grid.freq_sq_table();
    let xi2s: Vec<f64> = xi2.iter().map(|&q| q.powf(params.s)).collect();
    let gamma = params.p / (params.p - 1.0);
    let vol = grid.box_volume();

    let mut q = spectral::to_physical(&init)?;
    let mut history: Vec<f64> = Vec::new();
    let mut last_rel_change = f64::INFINITY;

    for iter in 1..=opts.max_iterations {
        // Frequency data of the current iterate.
        let mut hat = q.clone().into_values();
        spectral::forward_in_place(&mut hat, grid);

        // ⟨Q, (1+D^{2s})Q⟩ by Parseval.
        let quad_form: f64 = hat
            .iter()
            .zip(&xi2s)
            .map(|(c, &q2s)| (1.0 + q2s) * c.norm_sqr())
            .sum::<f64>()
            * vol;

        // Nonlinear term and ⟨Q, w·Q^p⟩.
        let rhs = nonlinear_term(&q, &w, params.p);
        let pairing: f64 = q
            .values()
            .iter()
            .zip(rhs.values())
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>()
            * grid.cell_volume();

        if !(pairing.is_finite() && quad_form.is_finite()) || pairing.abs() < 1e-300 {
            return Err(CoreError::Convergence {
                reason: "stabilization pairing degenerated".into(),
                iterations: iter,
                history,
            });
        }
        let s_factor = quad_form / pairing;
        if !(1e-8..=1e8).contains(&s_factor) {
            return Err(CoreError::Convergence {
                reason: format!("stabilization factor diverged (S = {s_factor})"),
                iterations: iter,
                history,
            });
        }

        // Q_{n+1} = S^γ (1+D^{2s})^{−1} (w Q^p)
        let mut next_hat = rhs.into_values();
        spectral::forward_in_place(&mut next_hat, grid);
        let amp = s_factor.powf(gamma);
        for (c, &q2s) in next_hat.iter_mut().zip(&xi2s) {
            *c *= amp / (1.0 + q2s);
        }
        spectral::inverse_in_place(&mut next_hat, grid);
        let mut next =
            Field::from_values(grid, Representation::Physical, next_hat).expect("same size");

        if opts.radialize_every > 0 && iter % opts.radialize_every == 0 {
            next = radialize(&next).real_part()?;
        }

        let norm_q = q.l2_norm();
        if !(norm_q > 1e-300) {
            return Err(CoreError::Convergence {
                reason: "iterate collapsed to zero".into(),
                iterations: iter,
                history,
            });
        }
        let diff: f64 = next
            .values()
            .iter()
            .zip(q.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            * grid.cell_volume().sqrt();
        last_rel_change = diff / norm_q;
        history.push(last_rel_change);
        q = next;

        let converged_change = last_rel_change <= opts.rel_change_tol;
        // The residual is only worth measuring when close.
        if converged_change || last_rel_change < 1e-8 {
            let res = equation_residual(&q, &w, params, &xi2s)?;
            if converged_change || res <= opts.residual_target * q.l2_norm() {
                return finish(q, &w, params, &exps, res, iter);
            }
        }
    }

    Err(CoreError::Convergence {
        reason: format!(
            "maximum iterations exhausted (last relative change {last_rel_change:.3e})"
        ),
        iterations: opts.max_iterations,
        history,
    })
}

/// L² norm of `−D^{2s}Q − Q + w·Q^p`.
fn equation_residual(
    q: &Field,
    w: &WeightField,
    params: &ModelParams,
    xi2s: &[f64],
) -> Result<f64> {
    let grid = q.grid();
    let mut hat = q.clone().into_values();
    spectral::forward_in_place(&mut hat, grid);
    for (c, &q2s) in hat.iter_mut().zip(xi2s) {
        *c *= -(q2s + 1.0);
    }
    spectral::inverse_in_place(&mut hat, grid);
    let nl = nonlinear_term(q, w, params.p);
    let sum: f64 = hat
        .iter()
        .zip(nl.values())
        .map(|(lin, n)| (lin + n).norm_sqr())
        .sum();
    Ok((grid.cell_volume() * sum).sqrt())
}

fn finish(
    q: Field,
    w: &WeightField,
    params: &ModelParams,
    exps: &DerivedExponents,
    residual: f64,
    iterations: usize,
) -> Result<GroundStateResult> {
    let q = q.real_part()?;
    let mass = model::mass(&q);
    let kin = spectral::sobolev_seminorm(&q, params.s)?;
    let kinetic_sq = kin * kin;
    let potential = model::potential(&q, w, params.p)?;
    let energy = kinetic_sq - 2.0 / (params.p + 1.0) * potential;
    let k_opt = sharp_gn_closed_form(mass.sqrt(), params.p, exps);
    Ok(GroundStateResult {
        q,
        mass,
        kinetic_sq,
        potential,
        energy,
        k_opt,
        residual,
        iterations,
        pohozaev_kinetic_residual: (kinetic_sq - exps.gn_b / exps.gn_a * mass).abs(),
        pohozaev_potential_residual: (potential - (params.p + 1.0) / exps.gn_a * mass).abs(),
    })
}

/// Closed-form sharp constant `K_opt = ((p+1)/A)(A/B)^{B/2} ‖Q‖^{1−p}`.
pub fn sharp_gn_closed_form(q_l2: f64, p: f64, exps: &DerivedExponents) -> f64 {
    (p + 1.0) / exps.gn_a * (exps.gn_a / exps.gn_b).powf(exps.gn_b / 2.0) * q_l2.powf(1.0 - p)
}

/// Closed form and measured sharp constant from a converged profile.
#[derive(Clone, Copy, Debug)]
pub struct GnConstant {
    pub closed_form: f64,
    /// `P[Q] / (‖Q‖^A ‖D^s Q‖^B)` — equality case of the inequality.
    pub empirical_ratio: f64,
}

pub fn sharp_gn_constant(result: &GroundStateResult, exps: &DerivedExponents, p: f64) -> GnConstant {
    let q_l2 = result.mass.sqrt();
    let ds = result.kinetic_sq.sqrt();
    GnConstant {
        closed_form: sharp_gn_closed_form(q_l2, p, exps),
        empirical_ratio: result.potential / (q_l2.powf(exps.gn_a) * ds.powf(exps.gn_b)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Nonlinearity;

    fn params() -> ModelParams {
        ModelParams::new(2, 0.8, 0.4, 3.0, Nonlinearity::Focusing).unwrap()
    }

    fn test_grid() -> Grid {
        Grid::new(2, 128, 16.0).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn converges_and_satisfies_pohozaev() {
        let p = params();
        let g = test_grid();
        let r = solve_ground_state(&p, g, None, &GroundStateOptions::default()).unwrap();
        assert!(r.residual <= 1e-8 * r.mass.sqrt(), "residual {}", r.residual);
        // B/A = 3, (p+1)/A = 4 at these parameters.
        assert!(
            r.pohozaev_kinetic_residual <= 1e-3 * r.mass,
            "kinetic pohozaev {}",
            r.pohozaev_kinetic_residual
        );
        assert!(
            r.pohozaev_potential_residual <= 1e-3 * r.mass,
            "potential pohozaev {}",
            r.pohozaev_potential_residual
        );
        assert!(rel_err(r.kinetic_sq / r.mass, 3.0) < 1e-3);
        assert!(rel_err(r.potential / r.mass, 4.0) < 1e-3);
        // Profile quality.
        let min_re = r.q.values().iter().map(|z| z.re).fold(f64::MAX, f64::min);
        assert!(min_re >= -1e-10 * r.q.sup_norm());
        assert!(radial_asymmetry(&r.q) < 1e-8);
    }

    #[test]
    fn refeeding_converged_profile_stops_immediately() {
        let p = params();
        let g = test_grid();
        let first = solve_ground_state(&p, g, None, &GroundStateOptions::default()).unwrap();
        let again = solve_ground_state(
            &p,
            g,
            Some(first.q.clone()),
            &GroundStateOptions {
                radialize_every: 0,
                ..GroundStateOptions::default()
            },
        )
        .unwrap();
        assert!(again.iterations <= 2, "took {} iterations", again.iterations);
        assert!(rel_err(again.mass, first.mass) < 1e-10);
        assert!(rel_err(again.kinetic_sq, first.kinetic_sq) < 1e-10);
    }

    #[test]
    fn amplitude_of_init_does_not_matter() {
        let p = params();
        let g = test_grid();
        let base = solve_ground_state(&p, g, None, &GroundStateOptions::default()).unwrap();
        let big_init = default_init(g).scaled(num_complex::Complex64::new(5.0, 0.0));
        let other = solve_ground_state(&p, g, Some(big_init), &GroundStateOptions::default())
            .unwrap();
        let diff: f64 = base
            .q
            .values()
            .iter()
            .zip(other.q.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            * g.cell_volume().sqrt();
        assert!(diff / base.mass.sqrt() < 1e-6, "profiles differ by {diff}");
    }

    #[test]
    fn decreasing_radial_profile() {
        let p = params();
        let g = test_grid();
        let r = solve_ground_state(&p, g, None, &GroundStateOptions::default()).unwrap();
        let m = g.points_per_axis();
        let row = m / 2; // x = 0 section, radius = |y|
        let sup = r.q.sup_norm();
        for j in (m / 2)..(m - 1) {
            let a = r.q.values()[row * m + j].re;
            let b = r.q.values()[row * m + j + 1].re;
            assert!(b <= a + 1e-8 * sup, "profile increases at j = {j}");
        }
    }

    #[test]
    fn gn_constant_empirical_matches_closed_form() {
        let p = params();
        let exps = p.derive();
        let g = test_grid();
        let r = solve_ground_state(&p, g, None, &GroundStateOptions::default()).unwrap();
        let gn = sharp_gn_constant(&r, &exps, p.p);
        assert!(
            rel_err(gn.empirical_ratio, gn.closed_form) < 1e-3,
            "empirical {} vs closed {}",
            gn.empirical_ratio,
            gn.closed_form
        );
    }

    #[test]
    fn gn_empirical_ratio_is_scale_invariant() {
        let p = params();
        let exps = p.derive();
        let g = test_grid();
        let r = solve_ground_state(&p, g, None, &GroundStateOptions::default()).unwrap();
        let w = WeightField::build(g, p.b).unwrap();
        let c = 2.3;
        let scaled = r.q.scaled(num_complex::Complex64::new(c, 0.0));
        let pot = model::potential(&scaled, &w, p.p).unwrap();
        let l2 = scaled.l2_norm();
        let ds = spectral::sobolev_seminorm(&scaled, p.s).unwrap();
        let ratio = pot / (l2.powf(exps.gn_a) * ds.powf(exps.gn_b));
        let gn = sharp_gn_constant(&r, &exps, p.p);
        assert!(rel_err(ratio, gn.empirical_ratio) < 1e-10);
    }

    #[test]
    fn virial_signs_around_ground_state() {
        let p = params();
        let exps = p.derive();
        let g = test_grid();
        let r = solve_ground_state(&p, g, None, &GroundStateOptions::default()).unwrap();
        let w = WeightField::build(g, p.b).unwrap();
        let i_q = model::virial_functional(&r.q, &w, &p, &exps).unwrap();
        assert!(i_q.abs() <= 1e-3 * r.mass, "I[Q] = {i_q}");
        let stretched = r.q.scaled(num_complex::Complex64::new(1.5, 0.0));
        let i_big = model::virial_functional(&stretched, &w, &p, &exps).unwrap();
        assert!(i_big < 0.0, "I[1.5 Q] = {i_big}");
    }

    #[test]
    fn rejects_bad_init() {
        let p = params();
        let g = test_grid();
        let zero = Field::zeros(g);
        assert!(matches!(
            solve_ground_state(&p, g, Some(zero), &GroundStateOptions::default()),
            Err(CoreError::Contract(_))
        ));
        let negative = Field::from_fn(g, |_| num_complex::Complex64::new(-1.0, 0.0));
        assert!(matches!(
            solve_ground_state(&p, g, Some(negative), &GroundStateOptions::default()),
            Err(CoreError::Contract(_))
        ));
    }

    #[test]
    fn exhaustion_reports_history() {
        let p = params();
        let g = Grid::new(2, 32, 12.0).unwrap();
        let r = solve_ground_state(
            &p,
            g,
            None,
            &GroundStateOptions {
                max_iterations: 3,
                rel_change_tol: 1e-15,
                residual_target: 1e-15,
                radialize_every: 10,
            },
        );
        match r {
            Err(CoreError::Convergence {
                iterations,
                history,
                ..
            }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }
}
