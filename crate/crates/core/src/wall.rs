//! Wetting potential on the substrate and the two boundary treatments.

use std::f64::consts::{PI, SQRT_2};

use crate::config::ModelParams;
use crate::error::{Error, Result};
use crate::grid::{Grid, State};

/// `γ_ωf(φ) = −(√2/3) cos θ_s sin(πφ/2) + (γ₁ + γ₂)/2` on the substrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPotential {
    pub theta_s: f64,
    pub gamma_sum: f64,
}

impl WallPotential {
    pub fn from_params(p: &ModelParams) -> Self {
        Self { theta_s: p.theta_s, gamma_sum: p.gamma_sum() }
    }

    pub fn gamma_wf(&self, phi: f64) -> f64 {
        -(SQRT_2 / 3.0) * self.theta_s.cos() * (0.5 * PI * phi).sin() + 0.5 * self.gamma_sum
    }

    pub fn gamma_wf_prime(&self, phi: f64) -> f64 {
        -(SQRT_2 * PI / 6.0) * self.theta_s.cos() * (0.5 * PI * phi).cos()
    }
}

/// Which initial-guess rule of the equilibrium root solve was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootCase {
    /// `φ₁ ∈ [−1, 1]`, `θ_s < π/2`: start at 1.
    InsideHydrophilic = 1,
    /// `φ₁ ∈ [−1, 1]`, `θ_s ≥ π/2`: start at −1.
    InsideHydrophobic = 2,
    /// `φ₁ < −1`, `θ_s < π/2`: start at the lower bracket end.
    BelowHydrophilic = 3,
    /// `φ₁ < −1`, `θ_s ≥ π/2`: start at −1.
    BelowHydrophobic = 4,
    /// `φ₁ > 1`, `θ_s < π/2`: start at 1.
    AboveHydrophilic = 5,
    /// `φ₁ > 1`, `θ_s ≥ π/2`: start at the upper bracket end.
    AboveHydrophobic = 6,
}

/// Outcome of one scalar equilibrium-boundary root solve.
#[derive(Debug, Clone, Copy)]
pub struct RootSolve {
    pub root: f64,
    pub iterations: usize,
    pub case: RootCase,
    pub used_bisection: bool,
}

/// `α = −√2π cos θ_s Δy / (12 Cn)`.
pub fn equilibrium_alpha(theta_s: f64, dy: f64, cn: f64) -> f64 {
    -SQRT_2 * PI * theta_s.cos() * dy / (12.0 * cn)
}

const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 100;

/// Solves `φ₁ − X − α cos(πX/2) = 0` for the boundary value `X`.
///
/// `f` is strictly decreasing when `|α|π/2 < 1`, and the root lies in
/// `[−|φ₁| − |α|, |φ₁| + |α|]`. Newton starts from the case-dependent guess;
/// any step leaving the current bracket is replaced by bisection.
pub fn solve_equilibrium_root(phi1: f64, alpha: f64, theta_s: f64) -> Result<RootSolve> {
    let f = |x: f64| phi1 - x - alpha * (0.5 * PI * x).cos();
    let df = |x: f64| -1.0 + 0.5 * PI * alpha * (0.5 * PI * x).sin();
    let bound = phi1.abs() + alpha.abs();
    let hydrophilic = theta_s < 0.5 * PI;
    let case = match (phi1, hydrophilic) {
        (p, true) if (-1.0..=1.0).contains(&p) => RootCase::InsideHydrophilic,
        (p, false) if (-1.0..=1.0).contains(&p) => RootCase::InsideHydrophobic,
        (p, true) if p < -1.0 => RootCase::BelowHydrophilic,
        (p, false) if p < -1.0 => RootCase::BelowHydrophobic,
        (_, true) => RootCase::AboveHydrophilic,
        (_, false) => RootCase::AboveHydrophobic,
    };
    let mut x = match case {
        RootCase::InsideHydrophilic | RootCase::AboveHydrophilic => 1.0,
        RootCase::InsideHydrophobic | RootCase::BelowHydrophobic => -1.0,
        RootCase::BelowHydrophilic => -bound,
        RootCase::AboveHydrophobic => bound,
    };
    let (mut lo, mut hi) = (-bound, bound);
    let mut used_bisection = false;
    for it in 0..ROOT_MAX_ITER {
        let fx = f(x);
        if fx.abs() <= ROOT_TOL {
            return Ok(RootSolve { root: x, iterations: it, case, used_bisection });
        }
        // f is decreasing: positive values lie left of the root
        if (lo..=hi).contains(&x) {
            if fx > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d < 0.0 && newton.is_finite() && newton >= lo && newton <= hi {
            newton
        } else {
            used_bisection = true;
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * bound.max(1.0) {
            return Ok(RootSolve { root: x, iterations: it + 1, case, used_bisection });
        }
    }
    Err(Error::Numerical(format!(
        "equilibrium boundary root did not converge (phi1 = {phi1}, alpha = {alpha}, residual = {:e})",
        f(x)
    )))
}

/// Boundary values slaved to the first interior row by the discrete Young
/// condition.
pub fn solve_equilibrium_bc(phi_row1: &[f64], grid: &Grid, params: &ModelParams) -> Result<Vec<f64>> {
    if grid.dy >= params.cn {
        return Err(Error::Config(format!(
            "equilibrium boundary condition needs dy < Cn (dy = {}, Cn = {})",
            grid.dy, params.cn
        )));
    }
    let alpha = equilibrium_alpha(params.theta_s, grid.dy, params.cn);
    phi_row1
        .iter()
        .map(|&p| solve_equilibrium_root(p, alpha, params.theta_s).map(|r| r.root))
        .collect()
}

/// In-place variant used inside the solver loop; the grid check is done once
/// by the caller.
pub(crate) fn refresh_equilibrium_bc(phi_row1: &[f64], alpha: f64, theta_s: f64, out: &mut [f64]) -> Result<()> {
    for (o, &p) in out.iter_mut().zip(phi_row1) {
        *o = solve_equilibrium_root(p, alpha, theta_s)?.root;
    }
    Ok(())
}

/// Anchor `φ_bcᵏ` of the boundary relaxation term: the previous accepted
/// boundary values.
pub fn dynamic_bc_anchor(state_prev: &State) -> Vec<f64> {
    state_prev.phi_bc().to_vec()
}
