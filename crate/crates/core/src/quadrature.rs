//! Gauss–Legendre quadrature, shared by the resolvent `m`-integrals and the
//! closed-form cell averages of the singular weight.
//!
//! The resolvent integrals `∫₀^∞ m^s F(m) dm` are evaluated after the
//! substitution `m = e^y`, which turns the algebraic decay on both ends into
//! exponential decay in `y`.  The `y` interval is covered by fixed-width
//! panels with a Gauss–Legendre rule on each; panel boundaries are chosen
//! from an analytic single-mode tail estimate so the truncation error is a
//! prescribed fraction of the integral.

use crate::error::CoreError;
use crate::Result;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Computed by Newton iteration on the Legendre recurrence; accurate to
/// machine precision for the small `n` used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Initial guess (Abramowitz–Stegun 25.4.30 style).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]` with `panels` panels of an `n`-point rule.
pub fn integrate_panels(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    panels: usize,
    n: usize,
) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        for (x, w) in nodes.iter().zip(&weights) {
            total += w * half * f(mid + half * x);
        }
    }
    total
}

/// Adaptive panel-doubling integration to a relative tolerance.  Intended
/// for smooth one-dimensional integrands (oracles and cell averages).
pub fn integrate_adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut panels = 4;
    let mut prev = integrate_panels(&f, a, b, panels, 12);
    loop {
        panels *= 2;
        let next = integrate_panels(&f, a, b, panels, 12);
        if (next - prev).abs() <= rel_tol * next.abs().max(1e-300) || panels > 4096 {
            return next;
        }
        prev = next;
    }
}

/// Quadrature rule for `∫₀^∞ m^s F(m) dm` on `m = e^y`.
///
/// Nodes carry the combined weight `w · e^{(1+s) y}` so the caller only sums
/// `weight · F(m)` — the `m^s dm = e^{(1+s)y} dy` factor is baked in.
#[derive(Clone, Debug)]
pub struct MQuadrature {
    /// `(m, weight)` pairs.
    pub nodes: Vec<(f64, f64)>,
    pub s: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl MQuadrature {
    /// Builds the rule for fractional order `s ∈ (0,1)` on a lattice whose
    /// nonzero `|ξ|²` range is `[k_min, k_max]`.
    ///
    /// The truncation points come from the single-mode integrand
    /// `m^s κ/(m+κ)²`: below `m_lo = κ_min δ` the remainder is
    /// `≤ δ^{1+s}/(1+s)` of the mode's integral, above `m_hi = κ_max η` it is
    /// `≤ η^{s−1}/(1−s)`.  Both are kept at or below `tail_tol`.
    ///
    /// `node_budget` is a target for the total node count; panels of width
    /// ~4 in `y` with at least 8 Gauss points each are used regardless, so
    /// very wide intervals may exceed the budget.
    pub fn build(s: f64, k_min: f64, k_max: f64, node_budget: usize, tail_tol: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(CoreError::Domain(format!(
                "m-quadrature order must be in (0,1), got {s}"
            )));
        }
        if !(k_min > 0.0 && k_max >= k_min) {
            return Err(CoreError::Domain(
                "m-quadrature needs a positive frequency range".into(),
            ));
        }
        let bala = std::f64::consts::PI * s / (std::f64::consts::PI * s).sin();
        // Low-end truncation: ∫₀^{m_lo} m^s/κ dm = (m_lo/κ)^{1+s} κ^s/(1+s).
        let delta = (tail_tol * (1.0 + s) * bala).powf(1.0 / (1.0 + s));
        let m_lo = k_min * delta;
        // High-end truncation: ∫_{m_hi}^∞ m^{s−2} κ dm = κ (m_hi/κ)^{s−1} κ^{s-1}/(1−s).
        let eta = (tail_tol * (1.0 - s) * bala).powf(1.0 / (s - 1.0));
        let m_hi = k_max * eta;
        let y_lo = m_lo.ln();
        // Cap the upper end so the e^{(1+s)y} node weights stay representable;
        // for s near 1 this floors the reachable tail accuracy (the remainder
        // beyond e^{340} is ~1e−8 of the integral at s = 0.95).
        let y_hi = m_hi.ln().min(680.0 / (1.0 + s));
        let span = y_hi - y_lo;
        let max_panel_width = 4.0;
        let min_panels = (span / max_panel_width).ceil() as usize;
        let per_panel = ((node_budget / min_panels.max(1)).max(8)).min(16);
        let panels = min_panels.max(node_budget / per_panel).max(1);
        let (gl_nodes, gl_weights) = gauss_legendre(per_panel);
        let width = span / panels as f64;
        let mut nodes = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let lo = y_lo + p as f64 * width;
            let mid = lo + 0.5 * width;
            let half = 0.5 * width;
            for (x, w) in gl_nodes.iter().zip(&gl_weights) {
                let y = mid + half * x;
                let m = y.exp();
                nodes.push((m, w * half * ((1.0 + s) * y).exp()));
            }
        }
        Ok(MQuadrature {
            nodes,
            s,
            y_lo,
            y_hi,
        })
    }

    /// A refined rule with twice the node density on the same interval
    /// (for convergence self-checks).
    pub fn refined(&self) -> MQuadrature {
        let n = self.nodes.len() * 2;
        let panels = (n / 12).max(2);
        let per_panel = (n / panels).max(8);
        let (gl_nodes, gl_weights) = gauss_legendre(per_panel);
        let width = (self.y_hi - self.y_lo) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let lo = self.y_lo + p as f64 * width;
            let mid = lo + 0.5 * width;
            let half = 0.5 * width;
            for (x, w) in gl_nodes.iter().zip(&gl_weights) {
                let y = mid + half * x;
                nodes.push((y.exp(), w * half * ((1.0 + self.s) * y).exp()));
            }
        }
        MQuadrature {
            nodes,
            s: self.s,
            y_lo: self.y_lo,
            y_hi: self.y_hi,
        }
    }

    /// Evaluates `∫ m^s F(m) dm ≈ Σ weight·F(m)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(m, w)| w * f(m)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // n-point rule is exact through degree 2n−1.
        let (nodes, weights) = gauss_legendre(8);
        let val: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * (x.powi(14) + 3.0 * x.powi(7) + 1.0))
            .sum();
        let exact = 2.0 / 15.0 + 2.0; // odd term vanishes
        assert!((val - exact).abs() < 1e-14);
    }

    #[test]
    fn panel_rule_handles_smooth_integrands() {
        let v = integrate_panels(|x: f64| (-x * x).exp(), -8.0, 8.0, 16, 12);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn adaptive_rule_meets_tolerance() {
        let v = integrate_adaptive(|x: f64| x.sin().powi(2), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - std::f64::consts::PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn m_quadrature_reproduces_single_mode_closed_form() {
        // ∫₀^∞ m^s κ/(m+κ)² dm = κ^s · πs/sin(πs).
        for &s in &[0.55, 0.7, 0.8, 0.95] {
            for &kappa in &[0.04, 1.0, 900.0] {
                let q = MQuadrature::build(s, 0.04, 900.0, 128, 1e-8).unwrap();
                let val = q.integrate(|m| kappa / ((m + kappa) * (m + kappa)));
                let exact =
                    kappa.powf(s) * std::f64::consts::PI * s / (std::f64::consts::PI * s).sin();
                assert!(
                    ((val - exact) / exact).abs() < 1e-6,
                    "s={s} kappa={kappa}: rel err {}",
                    ((val - exact) / exact).abs()
                );
            }
        }
    }

    #[test]
    fn m_quadrature_refinement_is_stable() {
        let s = 0.8;
        let q = MQuadrature::build(s, 0.04, 2500.0, 128, 1e-8).unwrap();
        let f = |m: f64| 3.0 / ((m + 3.0) * (m + 3.0));
        let a = q.integrate(f);
        let b = q.refined().integrate(f);
        assert!(((a - b) / b).abs() < 1e-3);
    }

    #[test]
    fn m_quadrature_rejects_bad_order() {
        assert!(MQuadrature::build(1.0, 0.1, 10.0, 64, 1e-6).is_err());
        assert!(MQuadrature::build(0.8, 0.0, 10.0, 64, 1e-6).is_err());
    }
}
