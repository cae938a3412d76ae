//! Primal-dual iterations for one JKO subproblem
//! `min Φ(u) + Δt 𝓔ʰ(u)` subject to `‖Au − b‖ ≤ δ`.

use std::time::Instant;

use crate::config::{default_sigma, validate_steps, BoundaryKind, DualProxMode, ModelParams, SolverKind, SolverParams};
use crate::constraint::ConstraintOperator;
use crate::energy::{energy_parts, grad_parts};
use crate::error::{Error, Result};
use crate::grid::{dist, norm, Grid, State};
use crate::prox::{distance_integrand, prox_all, ProxWeights};
use crate::spectral::{dual_prox_inexact, SpectralPlan};
use crate::wall::{equilibrium_alpha, refresh_equilibrium_bc};

/// Differentiable part of the subproblem objective.
pub trait SmoothPart {
    fn value(&self, u: &[f64]) -> f64;
    /// Writes the full-length gradient (zero on blocks the term ignores).
    fn gradient(&self, u: &[f64], out: &mut [f64]);
}

/// `Δt · 𝓔ʰ` on the flat layout.
#[derive(Debug, Clone, Copy)]
pub struct ScaledEnergy<'a> {
    pub grid: &'a Grid,
    pub model: &'a ModelParams,
    pub dt: f64,
}

impl ScaledEnergy<'_> {
    fn split<'u>(&self, u: &'u [f64]) -> (&'u [f64], &'u [f64], &'u [f64]) {
        let n = self.grid.len();
        (&u[..n], &u[3 * n..4 * n], &u[6 * n..])
    }
}

impl SmoothPart for ScaledEnergy<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        let (phi, psi, bc) = self.split(u);
        self.dt * energy_parts(phi, psi, bc, self.grid, self.model).total
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        let n = self.grid.len();
        let (phi, psi, bc) = self.split(u);
        let (g_phi, rest) = out.split_at_mut(n);
        let (g_mphi, rest) = rest.split_at_mut(2 * n);
        let (g_psi, rest) = rest.split_at_mut(n);
        let (g_mpsi, g_bc) = rest.split_at_mut(2 * n);
        grad_parts(phi, psi, bc, self.grid, self.model, g_phi, g_psi, g_bc);
        g_mphi.fill(0.0);
        g_mpsi.fill(0.0);
        if self.model.bc_kind == BoundaryKind::Equilibrium {
            // φ_bc is a function of the first row that zeroes ∂E/∂φ_bc
            g_bc.fill(0.0);
        }
        for v in g_phi.iter_mut().chain(g_psi.iter_mut()).chain(g_bc.iter_mut()) {
            *v *= self.dt;
        }
    }
}

/// How the boundary block is updated after the primal prox.
#[derive(Debug, Clone)]
pub enum BoundaryUpdate {
    /// Quadratic relaxation towards the previous boundary values.
    Dynamic { anchor: Vec<f64> },
    /// Boundary slaved to the first row through the Young condition.
    Equilibrium { alpha: f64, theta_s: f64 },
}

impl BoundaryUpdate {
    pub fn new(prev: &State, grid: &Grid, model: &ModelParams) -> Result<Self> {
        match model.bc_kind {
            BoundaryKind::Dynamic => Ok(Self::Dynamic { anchor: prev.phi_bc().to_vec() }),
            BoundaryKind::Equilibrium => {
                if grid.dy >= model.cn {
                    return Err(Error::Config(format!(
                        "equilibrium boundary condition needs dy < Cn (dy = {}, Cn = {})",
                        grid.dy, model.cn
                    )));
                }
                Ok(Self::Equilibrium { alpha: equilibrium_alpha(model.theta_s, grid.dy, model.cn), theta_s: model.theta_s })
            }
        }
    }
}

/// Transport part `Φ(u)` of the objective.
pub fn transport_cost(u: &[f64], grid: &Grid, model: &ModelParams, boundary: &BoundaryUpdate) -> f64 {
    let n = grid.len();
    let mob_phi = model.mobility_phi();
    let mut s = 0.0;
    for k in 0..n {
        s += distance_integrand([u[n + k], u[2 * n + k]], mob_phi);
        s += distance_integrand([u[4 * n + k], u[5 * n + k]], model.mobility_psi(u[3 * n + k]));
    }
    let mut phi = 0.5 * s * grid.cell_area();
    if let BoundaryUpdate::Dynamic { anchor } = boundary {
        let q: f64 = u[6 * n..].iter().zip(anchor).map(|(x, a)| (x - a) * (x - a)).sum();
        phi += 0.5 * model.pe_s * q * grid.dx;
    }
    phi
}

/// Primal/dual iterate with the cached quantities the schemes reuse.
#[derive(Debug, Clone)]
pub struct PdIterate {
    pub u: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub v: Vec<f64>,
    pub v_prev: Vec<f64>,
    /// `∇E(u)`.
    pub grad: Vec<f64>,
    /// `C₂ v`, kept so the dual step never applies `C₂`.
    pub c2v: Vec<f64>,
    pub iteration: usize,
}

impl PdIterate {
    /// `u⁰ = (φᵏ, 0, 0, ψᵏ, 0, 0, φ_bcᵏ)`, `v⁰ = 0`, `ū⁰ = u⁰`.
    pub fn initial(prev: &State, smooth: &dyn SmoothPart) -> Self {
        let u = prev.without_momenta().into_flat();
        let mut grad = vec![0.0; u.len()];
        smooth.gradient(&u, &mut grad);
        let m = 2 * prev.cells();
        Self {
            u_prev: u.clone(),
            u_bar: u.clone(),
            u,
            v: vec![0.0; m],
            v_prev: vec![0.0; m],
            grad,
            c2v: vec![0.0; m],
            iteration: 0,
        }
    }
}

/// Monitors evaluated after an iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopMetrics {
    pub residual: f64,
    /// `max(‖Δu‖/‖u‖, ‖Δv‖/‖v‖)`.
    pub rel_change: f64,
    /// `max(|ΔE|/|E|, |ΔΦ|/|Φ|)`; `None` when not evaluated.
    pub rel_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopDecision {
    pub converged: bool,
    /// Names of the failing monitors: `pde_residual`, `relative_change`, `objective_change`.
    pub failing: Vec<&'static str>,
}

/// Relative change `|a − b| / |a|`; a vanished denominator passes.
pub fn relative(diff: f64, size: f64) -> f64 {
    if size.abs() < 1e-300 {
        0.0
    } else {
        diff.abs() / size.abs()
    }
}

pub fn check_stop(m: &StopMetrics, delta: f64, eps1: f64, eps2: f64) -> StopDecision {
    let mut failing = Vec::new();
    if !(m.residual <= delta) {
        failing.push("pde_residual");
    }
    if !(m.rel_change <= eps1) {
        failing.push("relative_change");
    }
    match m.rel_objective {
        Some(r) if r <= eps2 => {}
        _ => failing.push("objective_change"),
    }
    StopDecision { converged: failing.is_empty(), failing }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub rel_change: f64,
    pub rel_objective: f64,
    pub converged: bool,
    pub wall_ms: f64,
}

/// The iterations relax onto the ball of radius `INNER_RADIUS · δ`, so the
/// limit satisfies the stopping test `‖Au − b‖ ≤ δ` strictly instead of only
/// asymptotically.
pub const INNER_RADIUS: f64 = 0.9;

/// Inner optimizer bound to one grid; reused across time steps.
pub struct PdSolver {
    grid: Grid,
    model: ModelParams,
    params: SolverParams,
    op: ConstraintOperator,
    plan: SpectralPlan,
    weights: ProxWeights,
    /// Step on the `(ψ, m_ψ)` block; equal to `λ` unless set separately.
    lambda_psi: f64,
    sigma: f64,
    lambda_max: f64,
    // scratch
    au: Vec<f64>,
    dual: Vec<f64>,
    primal: Vec<f64>,
    grad_new: Vec<f64>,
}

impl std::fmt::Debug for PdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdSolver").field("grid", &self.grid).field("params", &self.params).finish()
    }
}

impl PdSolver {
    pub fn new(grid: &Grid, model: &ModelParams, params: &SolverParams) -> Self {
        let plan = SpectralPlan::new(grid);
        let lambda_max = plan.lambda_max();
        let sigma = params.sigma.unwrap_or_else(|| default_sigma(params.lambda, lambda_max));
        let n = grid.len();
        Self {
            grid: *grid,
            model: model.clone(),
            params: params.clone(),
            op: ConstraintOperator::new(grid),
            plan,
            weights: ProxWeights::new(params.lambda, grid),
            lambda_psi: params.lambda,
            sigma,
            lambda_max,
            au: vec![0.0; 2 * n],
            dual: vec![0.0; 2 * n],
            primal: vec![0.0; 6 * n + grid.nx],
            grad_new: vec![0.0; 6 * n + grid.nx],
        }
    }

    /// Replaces `λ` (and the derived prox weights and default `σ`).
    pub fn set_lambda(&mut self, lambda: f64) {
        self.params.lambda = lambda;
        self.lambda_psi = lambda;
        self.weights = ProxWeights::new(lambda, &self.grid);
        self.sigma = self.params.sigma.unwrap_or_else(|| default_sigma(lambda, self.lambda_max));
    }

    /// Separate step for the surfactant block (PrePD only).
    pub fn set_lambda_psi(&mut self, lambda_psi: f64) {
        self.lambda_psi = lambda_psi;
        self.weights.lambda_eff_psi = lambda_psi * self.grid.cell_area();
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// `λ_max(AAᵀ)`.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Checks `λ < 2/L` (and `σλ < 1/λ_max(AAᵀ)` for PD3O).
    pub fn validate(&self, lipschitz: f64) -> Result<()> {
        let mut p = self.params.clone();
        p.sigma = Some(self.sigma);
        let r = validate_steps(&p, self.lambda_max, lipschitz);
        if r.is_valid() {
            Ok(())
        } else {
            Err(Error::Config(r.to_string()))
        }
    }

    fn primal_update(&mut self, it: &mut PdIterate, smooth: &dyn SmoothPart, boundary: &BoundaryUpdate) -> Result<()> {
        let n = self.grid.len();
        let lam_at = |k: usize, lam: f64, lam_psi: f64| if (3 * n..6 * n).contains(&k) { lam_psi } else { lam };
        let (lam, lam_psi) = (self.params.lambda, self.lambda_psi);
        // Aᵀ v⁺
        self.op.apply_t_into(&it.v, &mut self.primal);
        for (k, ((p, &u), &g)) in self.primal.iter_mut().zip(&it.u).zip(&it.grad).enumerate() {
            let l = lam_at(k, lam, lam_psi);
            *p = u - l * g - l * *p;
        }
        let anchor = match boundary {
            BoundaryUpdate::Dynamic { anchor } => Some(anchor.as_slice()),
            BoundaryUpdate::Equilibrium { .. } => None,
        };
        prox_all(&mut self.primal, n, anchor, &self.weights, &self.model)?;
        if let BoundaryUpdate::Equilibrium { alpha, theta_s } = boundary {
            let (head, bc) = self.primal.split_at_mut(6 * n);
            refresh_equilibrium_bc(&head[..self.grid.nx], *alpha, *theta_s, bc)?;
        }

        std::mem::swap(&mut it.u_prev, &mut it.u);
        std::mem::swap(&mut it.u, &mut self.primal);
        smooth.gradient(&it.u, &mut self.grad_new);
        for k in 0..it.u.len() {
            it.u_bar[k] = 2.0 * it.u[k] - it.u_prev[k] + lam_at(k, lam, lam_psi) * (it.grad[k] - self.grad_new[k]);
        }
        std::mem::swap(&mut it.grad, &mut self.grad_new);
        if it.u.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { iteration: it.iteration, what: "non-finite primal iterate".into() });
        }
        Ok(())
    }

    /// One preconditioned primal-dual iteration.
    pub fn prepd_step(
        &mut self,
        it: &mut PdIterate,
        smooth: &dyn SmoothPart,
        b: &[f64],
        boundary: &BoundaryUpdate,
    ) -> Result<()> {
        let lam = self.params.lambda;
        let delta = INNER_RADIUS * self.params.delta;
        self.op.apply_into(&it.u_bar, &mut self.au);
        std::mem::swap(&mut it.v_prev, &mut it.v);
        match self.params.dual_prox_mode {
            DualProxMode::InexactProjection => {
                // z = C₂v + Aū − b
                for k in 0..self.dual.len() {
                    self.dual[k] = it.c2v[k] + self.au[k] - b[k];
                }
                dual_prox_inexact(&self.dual, delta, &mut it.c2v);
                it.v.copy_from_slice(&it.c2v);
                let (v_phi, v_psi) = it.v.split_at_mut(self.grid.len());
                self.plan.solve_block(v_phi, 0.0, lam)?;
                self.plan.solve_block(v_psi, 0.0, self.lambda_psi)?;
            }
            DualProxMode::Exact => {
                // y − b = C₂v + Aū − b, projected to ỹ − b
                for k in 0..self.dual.len() {
                    self.dual[k] = it.c2v[k] + self.au[k] - b[k];
                }
                let y_minus_b = self.dual.clone();
                let mu = self.plan.dual_prox_exact_offset(&mut self.dual, delta, [lam, self.lambda_psi])?;
                for k in 0..self.dual.len() {
                    it.v[k] = mu * self.dual[k];
                    it.c2v[k] = y_minus_b[k] - self.dual[k];
                }
            }
        }
        self.primal_update(it, smooth, boundary)?;
        it.iteration += 1;
        Ok(())
    }

    /// One unpreconditioned PD3O iteration with dual step `σ`.
    pub fn pd3o_step(
        &mut self,
        it: &mut PdIterate,
        smooth: &dyn SmoothPart,
        b: &[f64],
        boundary: &BoundaryUpdate,
    ) -> Result<()> {
        let sigma = self.sigma;
        let delta = INNER_RADIUS * self.params.delta;
        self.op.apply_into(&it.u_bar, &mut self.au);
        std::mem::swap(&mut it.v_prev, &mut it.v);
        // w = v + σAū; v⁺ = w − σ P_{B(b,δ)}(w/σ) = σ (w/σ − b) − σ P_{B(0,δ)}(w/σ − b)
        for k in 0..self.dual.len() {
            self.dual[k] = (it.v_prev[k] + sigma * self.au[k]) / sigma - b[k];
        }
        dual_prox_inexact(&self.dual, delta, &mut it.v);
        for x in it.v.iter_mut() {
            *x *= sigma;
        }
        self.primal_update(it, smooth, boundary)?;
        it.iteration += 1;
        Ok(())
    }

    fn step(&mut self, it: &mut PdIterate, smooth: &dyn SmoothPart, b: &[f64], boundary: &BoundaryUpdate) -> Result<()> {
        match self.params.method {
            SolverKind::PrePd => self.prepd_step(it, smooth, b, boundary),
            SolverKind::Pd3o => self.pd3o_step(it, smooth, b, boundary),
        }
    }

    /// Residual norm `‖Au − b‖`.
    pub fn residual_norm(&mut self, u: &[f64], b: &[f64]) -> f64 {
        self.op.apply_into(u, &mut self.au);
        dist(&self.au, b)
    }

    /// Runs the selected scheme from the standard initial guess until the
    /// stopping monitors pass.
    pub fn solve_subproblem(&mut self, prev: &State, dt: f64) -> Result<(State, SolveReport)> {
        let start = Instant::now();
        let grid = self.grid;
        let model = self.model.clone();
        let smooth = ScaledEnergy { grid: &grid, model: &model, dt };
        let boundary = BoundaryUpdate::new(prev, &grid, &model)?;
        let b: Vec<f64> = prev.phi().iter().chain(prev.psi()).copied().collect();
        let mut it = PdIterate::initial(prev, &smooth);
        if let BoundaryUpdate::Equilibrium { alpha, theta_s } = &boundary {
            let n = grid.len();
            let (head, bc) = it.u.split_at_mut(6 * n);
            refresh_equilibrium_bc(&head[..grid.nx], *alpha, *theta_s, bc)?;
            smooth.gradient(&it.u, &mut it.grad);
            it.u_bar.copy_from_slice(&it.u);
        }
        let (eps1, eps2, delta) = (self.params.eps1, self.params.eps2, self.params.delta);
        let mut last = StopMetrics { residual: f64::INFINITY, rel_change: f64::INFINITY, rel_objective: None };
        let mut obj_prev: Option<(f64, f64)> = None;
        while it.iteration < self.params.iter_max {
            self.step(&mut it, &smooth, &b, &boundary)?;
            let residual = self.residual_norm(&it.u, &b);
            let rel_u = relative(dist(&it.u, &it.u_prev), norm(&it.u));
            let rel_v = relative(dist(&it.v, &it.v_prev), norm(&it.v));
            let mut m = StopMetrics { residual, rel_change: rel_u.max(rel_v), rel_objective: None };
            // E and Φ are only evaluated once the cheaper monitors pass
            if residual <= delta && m.rel_change <= eps1 {
                let (e_old, p_old) = match obj_prev {
                    Some(v) => v,
                    None => (smooth.value(&it.u_prev), transport_cost(&it.u_prev, &grid, &model, &boundary)),
                };
                let e_new = smooth.value(&it.u);
                let p_new = transport_cost(&it.u, &grid, &model, &boundary);
                m.rel_objective = Some(relative(e_new - e_old, e_new).max(relative(p_new - p_old, p_new)));
                obj_prev = Some((e_new, p_new));
            } else {
                obj_prev = None;
            }
            last = m;
            if check_stop(&m, delta, eps1, eps2).converged {
                let report = SolveReport {
                    iterations: it.iteration,
                    residual,
                    rel_change: m.rel_change,
                    rel_objective: m.rel_objective.unwrap_or(f64::NAN),
                    converged: true,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                };
                let state = State::from_flat(&grid, it.u)?.without_momenta();
                return Ok((state, report));
            }
        }
        let reason = check_stop(&last, delta, eps1, eps2).failing.join(",");
        Err(Error::NonConvergence { iterations: it.iteration, residual: last.residual, reason })
    }
}

/// Per-cell surfactant prox weight `λ_ψΔxΔy` over the mobility at the mean
/// concentration, used by [`auto_lambda_psi`].
pub const AUTO_PSI_RATIO: f64 = 60.0;
const AUTO_PSI_FLOOR: f64 = 1e-3;

/// PrePD step for the `(ψ, m_ψ)` block under `lambda = auto`:
/// `AUTO_PSI_RATIO · M_ψ(ψ̄)/(ΔxΔy)`, never above `lambda`.
pub fn auto_lambda_psi(grid: &Grid, model: &ModelParams, psi_mean: f64, lambda: f64) -> f64 {
    let m = model.mobility_psi(psi_mean.clamp(AUTO_PSI_FLOOR, 1.0 - AUTO_PSI_FLOOR));
    (AUTO_PSI_RATIO * m / grid.cell_area()).min(lambda)
}

/// `λ` giving a per-cell prox weight `λΔxΔy` of [`AUTO_CELL_WEIGHT`],
/// capped at half the gradient-step bound `2/L`.
pub fn auto_lambda(grid: &Grid, lipschitz: f64) -> f64 {
    let by_grid = AUTO_CELL_WEIGHT / grid.cell_area();
    if lipschitz > 0.0 {
        by_grid.min(1.0 / lipschitz)
    } else {
        by_grid
    }
}

/// Target for `λΔxΔy` when `λ` is chosen automatically.
pub const AUTO_CELL_WEIGHT: f64 = 1.6;

/// Largest eigenvalue of the Hessian of `Δt𝓔ʰ` at `state` by power iteration
/// on finite-difference Hessian-vector products.
pub fn estimate_lipschitz(state: &State, grid: &Grid, model: &ModelParams, dt: f64) -> f64 {
    estimate_lipschitz_scaled(state, grid, model, dt, [1.0, 1.0])
}

/// Same for `D^{1/2} H D^{1/2}`, `D` holding `steps[1]` on the ψ block and
/// `steps[0]` elsewhere.
pub fn estimate_lipschitz_scaled(state: &State, grid: &Grid, model: &ModelParams, dt: f64, steps: [f64; 2]) -> f64 {
    let smooth = ScaledEnergy { grid, model, dt };
    let mut u = state.as_flat().to_vec();
    let n = grid.len();
    // keep ψ away from the clamp so the differences see the true curvature
    for x in &mut u[3 * n..4 * n] {
        *x = x.clamp(1e-6, 1.0 - 1e-6);
    }
    let len = u.len();
    let d: Vec<f64> = (0..len).map(|k| if (3 * n..6 * n).contains(&k) { steps[1] } else { steps[0] }.sqrt()).collect();
    let mut x: Vec<f64> = (0..len).map(|k| 1.0 + (k % 7) as f64 * 0.1).collect();
    let (mut gp, mut gm) = (vec![0.0; len], vec![0.0; len]);
    let mut est = 0.0;
    for _ in 0..50 {
        let nx = norm(&x);
        x.iter_mut().zip(&d).for_each(|(v, s)| *v *= s / nx);
        let h = 1e-7 / d.iter().copied().fold(0.0, f64::max).max(1.0);
        let up: Vec<f64> = u.iter().zip(&x).map(|(a, b)| a + h * b).collect();
        let um: Vec<f64> = u.iter().zip(&x).map(|(a, b)| a - h * b).collect();
        smooth.gradient(&up, &mut gp);
        smooth.gradient(&um, &mut gm);
        let hx: Vec<f64> = gp.iter().zip(&gm).zip(&d).map(|((a, b), s)| s * (a - b) / (2.0 * h)).collect();
        let next = norm(&hx);
        if (next - est).abs() <= 1e-6 * next {
            return next;
        }
        est = next;
        x = hx;
    }
    est
}

/// `(λ, λ_ψ)` under `lambda = auto`.
///
/// PD3O: [`auto_lambda`] for both. PrePD: `AUTO_CELL_WEIGHT/(ΔxΔy)` and
/// [`auto_lambda_psi`], each shrunk until the curvature of its own block,
/// scaled by the step, is at most 1.
pub fn auto_steps(prev: &State, grid: &Grid, model: &ModelParams, dt: f64, method: SolverKind) -> (f64, f64) {
    if method == SolverKind::Pd3o {
        let lam = auto_lambda(grid, estimate_lipschitz(prev, grid, model, dt));
        return (lam, lam);
    }
    let lam = AUTO_CELL_WEIGHT / grid.cell_area();
    let psi_mean = prev.psi().iter().sum::<f64>() / prev.cells() as f64;
    let lam_psi = auto_lambda_psi(grid, model, psi_mean, lam);
    let shrink = |l: f64| if l > 1.0 { 1.0 / l } else { 1.0 };
    let s_phi = shrink(estimate_lipschitz_scaled(prev, grid, model, dt, [lam, 0.0]));
    let s_psi = shrink(estimate_lipschitz_scaled(prev, grid, model, dt, [0.0, lam_psi]));
    (s_phi * lam, s_psi * lam_psi)
}
