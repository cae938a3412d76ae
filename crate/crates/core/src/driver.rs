//! Outer JKO loop: step selection, retries, structure monitors, diagnostics
//! and snapshot output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{contact_angle, count_components};
use crate::config::{validate, BoundaryKind, ModelParams, SolverParams, TimeParams};
use crate::energy::{total_energy, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::grid::{mass, min_max, Grid, State};
use crate::solver::{auto_steps, estimate_lipschitz, PdSolver, SolveReport};
use crate::wall::solve_equilibrium_bc;

/// Times `Δt` is halved after a failed subproblem before giving up.
pub const MAX_RETRIES: usize = 5;
/// Relative energy slack, in units of `ε₂`, allowed by the dissipation monitor.
pub const ENERGY_SLACK: f64 = 10.0;

/// One row of the diagnostics table. Row 0 describes the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub energy: EnergyBreakdown,
    pub mass_phi: f64,
    pub mass_psi: f64,
    pub psi_min: f64,
    pub psi_max: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub wall_ms: f64,
    pub lambda: f64,
    pub retries: usize,
    pub components: usize,
    /// Degrees; `NaN` when no interface is found near the substrate.
    pub contact_angle: f64,
}

impl StepRecord {
    fn measure(state: &State, grid: &Grid, model: &ModelParams, step: usize, t: f64) -> Self {
        let (psi_min, psi_max) = min_max(state.psi());
        Self {
            step,
            t,
            dt: 0.0,
            energy: total_energy(state, grid, model),
            mass_phi: mass(state.phi(), grid),
            mass_psi: mass(state.psi(), grid),
            psi_min,
            psi_max,
            iterations: 0,
            residual: 0.0,
            converged: true,
            wall_ms: 0.0,
            lambda: f64::NAN,
            retries: 0,
            components: count_components(state.phi(), grid),
            contact_angle: contact_angle(state.phi(), grid).map_or(f64::NAN, f64::to_degrees),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub rows: Vec<StepRecord>,
}

impl Diagnostics {
    /// Accepted steps (the initial row excluded).
    pub fn steps(&self) -> &[StepRecord] {
        self.rows.get(1..).unwrap_or(&[])
    }

    pub fn total_iterations(&self) -> usize {
        self.steps().iter().map(|r| r.iterations).sum()
    }

    /// Largest `|mass(t) − mass(0)|` over the run, for `φ` and `ψ`.
    pub fn max_mass_drift(&self) -> (f64, f64) {
        let Some(first) = self.rows.first() else {
            return (0.0, 0.0);
        };
        self.rows.iter().fold((0.0f64, 0.0f64), |(a, b), r| {
            (a.max((r.mass_phi - first.mass_phi).abs()), b.max((r.mass_psi - first.mass_psi).abs()))
        })
    }

    pub fn energy_csv(&self) -> String {
        let mut s = String::from("t,f_gl,f_sur,f_ad,f_wf,total\n");
        for r in &self.rows {
            let e = &r.energy;
            let _ = writeln!(s, "{},{},{},{},{},{}", r.t, e.f_gl, e.f_sur, e.f_ad, e.f_wf, e.total);
        }
        s
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from(
            "step,t,dt,f_gl,f_sur,f_ad,f_wf,total,mass_phi,mass_psi,psi_min,psi_max,iterations,residual,retries,lambda,components,contact_angle_deg\n",
        );
        for r in &self.rows {
            let e = &r.energy;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.step,
                r.t,
                r.dt,
                e.f_gl,
                e.f_sur,
                e.f_ad,
                e.f_wf,
                e.total,
                r.mass_phi,
                r.mass_psi,
                r.psi_min,
                r.psi_max,
                r.iterations,
                r.residual,
                r.retries,
                r.lambda,
                r.components,
                r.contact_angle
            );
        }
        s
    }

    pub fn solver_csv(&self) -> String {
        let mut s = String::from("step,iterations,residual,converged,wall_ms\n");
        for r in self.steps() {
            let _ = writeln!(s, "{},{},{},{},{}", r.step, r.iterations, r.residual, r.converged, r.wall_ms);
        }
        s
    }

    /// Writes `energy.csv`, `diagnostics.csv` and `solver.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("energy.csv"), self.energy_csv())?;
        fs::write(dir.join("diagnostics.csv"), self.diagnostics_csv())?;
        fs::write(dir.join("solver.csv"), self.solver_csv())?;
        Ok(())
    }
}

/// `Δt = max(dt_min, dt_max/√(1 + β𝓡²))` with
/// `𝓡 = (E_curr − E_prev)/(E_prev (t_curr − t_prev))`; `dt_min` when
/// `E_prev = 0`.
pub fn adaptive_dt(e_prev: f64, e_curr: f64, t_prev: f64, t_curr: f64, time: &TimeParams) -> f64 {
    if e_prev == 0.0 || t_curr <= t_prev {
        return time.dt_min;
    }
    let r = (e_curr - e_prev) / (e_prev * (t_curr - t_prev));
    time.dt_min.max(time.dt_max / (1.0 + time.beta * r * r).sqrt())
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub state: State,
    pub t: f64,
    /// Step used by the last accepted step.
    pub dt: f64,
    pub step: usize,
    /// `(t, E)` after each accepted step, starting with the initial state.
    pub energy_history: Vec<(f64, f64)>,
    pub diagnostics: Diagnostics,
}

/// Snapshot and diagnostics sink for [`Driver::run`].
#[derive(Debug, Clone)]
pub struct OutputWriter {
    pub dir: PathBuf,
    pub vtk: bool,
    /// Times the driver lands on exactly.
    pub snapshot_times: Vec<f64>,
    /// First time of the geometric cadence `t₀, 2t₀, 4t₀, …`; `None` disables it.
    pub geometric_start: Option<f64>,
    next_geometric: f64,
}

impl OutputWriter {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), vtk: false, snapshot_times: Vec::new(), geometric_start: None, next_geometric: f64::INFINITY }
    }

    fn begin(&mut self, run: &RunState, grid: &Grid) -> Result<()> {
        fs::create_dir_all(self.dir.join("phi"))?;
        fs::create_dir_all(self.dir.join("psi"))?;
        self.next_geometric = self.geometric_start.unwrap_or(f64::INFINITY);
        self.snapshot(&run.state, grid, run.t)
    }

    fn after_step(&mut self, run: &RunState, grid: &Grid, last: bool) -> Result<()> {
        let listed = last || self.snapshot_times.iter().any(|&s| (s - run.t).abs() <= 1e-9 * s.abs().max(1.0));
        let geometric = run.t >= self.next_geometric * (1.0 - 1e-9);
        while run.t >= self.next_geometric * (1.0 - 1e-9) {
            self.next_geometric *= 2.0;
        }
        if listed || geometric {
            self.snapshot(&run.state, grid, run.t)?;
        }
        Ok(())
    }

    pub fn snapshot(&self, state: &State, grid: &Grid, t: f64) -> Result<()> {
        let name = snapshot_name(t);
        write_field_csv(&self.dir.join("phi").join(format!("{name}.csv")), state.phi(), grid)?;
        write_field_csv(&self.dir.join("psi").join(format!("{name}.csv")), state.psi(), grid)?;
        if self.vtk {
            fs::create_dir_all(self.dir.join("vtk"))?;
            write_vtk(&self.dir.join("vtk").join(format!("{name}.vtk")), state, grid, t)?;
        }
        Ok(())
    }
}

/// `snap_t<time>` with six decimals.
pub fn snapshot_name(t: f64) -> String {
    format!("snap_t{t:.6}")
}

/// Cell-centred field as `x,y,value` rows.
pub fn write_field_csv(path: &Path, f: &[f64], grid: &Grid) -> Result<()> {
    let mut s = String::with_capacity(f.len() * 48);
    s.push_str("x,y,value\n");
    for ((x, y), v) in grid.centers().zip(f) {
        let _ = writeln!(s, "{x},{y},{v}");
    }
    fs::write(path, s)?;
    Ok(())
}

/// Legacy ASCII VTK structured-points file with `phi` and `psi` cell data.
pub fn write_vtk(path: &Path, state: &State, grid: &Grid, t: f64) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "pfs-jko t={t}")?;
    writeln!(f, "ASCII\nDATASET STRUCTURED_POINTS")?;
    writeln!(f, "DIMENSIONS {} {} 2", grid.nx + 1, grid.ny + 1)?;
    writeln!(f, "ORIGIN {} {} 0", grid.a, grid.c)?;
    writeln!(f, "SPACING {} {} 1", grid.dx, grid.dy)?;
    writeln!(f, "CELL_DATA {}", grid.len())?;
    for (name, data) in [("phi", state.phi()), ("psi", state.psi())] {
        writeln!(f, "SCALARS {name} double 1\nLOOKUP_TABLE default")?;
        for v in data {
            writeln!(f, "{v}")?;
        }
    }
    Ok(())
}

/// Owns the inner solver and advances a [`RunState`].
#[derive(Debug)]
pub struct Driver {
    grid: Grid,
    model: ModelParams,
    time: TimeParams,
    solver: PdSolver,
}

impl Driver {
    /// Validates the configuration; with a fixed `λ` also checks
    /// `λ < 2/L` at `initial` for the largest step.
    pub fn new(grid: &Grid, model: &ModelParams, solver: &SolverParams, time: &TimeParams, initial: &State) -> Result<Self> {
        let report = validate(model, solver, time);
        if !report.is_valid() {
            return Err(Error::Config(report.to_string()));
        }
        if model.bc_kind == BoundaryKind::Equilibrium && grid.dy >= model.cn {
            return Err(Error::Config(format!(
                "equilibrium boundary condition needs dy < Cn (dy = {}, Cn = {})",
                grid.dy, model.cn
            )));
        }
        let pd = PdSolver::new(grid, model, solver);
        if !solver.auto_lambda {
            let l = solver.lipschitz_estimate.unwrap_or_else(|| estimate_lipschitz(initial, grid, model, time.dt_max));
            pd.validate(l)?;
        }
        Ok(Self { grid: *grid, model: model.clone(), time: time.clone(), solver: pd })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn time(&self) -> &TimeParams {
        &self.time
    }

    /// Initial run state; the boundary row is slaved first in equilibrium mode.
    pub fn start(&self, initial: State) -> Result<RunState> {
        let mut state = initial.without_momenta();
        if self.model.bc_kind == BoundaryKind::Equilibrium {
            let bc = solve_equilibrium_bc(&state.phi()[..self.grid.nx], &self.grid, &self.model)?;
            state.phi_bc_mut().copy_from_slice(&bc);
        }
        let row = StepRecord::measure(&state, &self.grid, &self.model, 0, 0.0);
        Ok(RunState {
            energy_history: vec![(0.0, row.energy.total)],
            diagnostics: Diagnostics { rows: vec![row] },
            state,
            t: 0.0,
            dt: 0.0,
            step: 0,
        })
    }

    /// Step the next JKO step would use, before clamping to output times.
    pub fn proposed_dt(&self, run: &RunState) -> f64 {
        if !self.time.adaptive {
            return self.time.dt_min;
        }
        match run.energy_history.as_slice() {
            [.., (t0, e0), (t1, e1)] => adaptive_dt(*e0, *e1, *t0, *t1, &self.time),
            _ => self.time.dt_min,
        }
    }

    fn solve(&mut self, prev: &State, dt: f64) -> Result<(State, SolveReport, f64)> {
        let params = self.solver.params();
        if params.auto_lambda {
            let (lam, lam_psi) = auto_steps(prev, &self.grid, &self.model, dt, params.method);
            self.solver.set_lambda(lam);
            self.solver.set_lambda_psi(lam_psi);
            log::trace!("auto steps: lambda = {lam:.4e}, lambda_psi = {lam_psi:.4e}");
        }
        let lambda = self.solver.params().lambda;
        let (state, report) = self.solver.solve_subproblem(prev, dt)?;
        Ok((state, report, lambda))
    }

    /// Advances one accepted JKO step of size at most `dt`, halving on
    /// inner-solver failure, and checks the structure monitors.
    pub fn step(&mut self, run: &mut RunState, dt: f64) -> Result<()> {
        let mut dt = dt;
        let mut retries = 0;
        let (next, report, lambda) = loop {
            match self.solve(&run.state, dt) {
                Ok(ok) => break ok,
                Err(e @ (Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Numerical(_))) => {
                    if retries == MAX_RETRIES {
                        return Err(e);
                    }
                    log::warn!("step {} at t = {}: {e}; retrying with dt = {}", run.step + 1, run.t, dt / 2.0);
                    retries += 1;
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        let step = run.step + 1;
        let t = run.t + dt;
        let mut row = StepRecord::measure(&next, &self.grid, &self.model, step, t);
        row.dt = dt;
        row.iterations = report.iterations;
        row.residual = report.residual;
        row.converged = report.converged;
        row.wall_ms = report.wall_ms;
        row.lambda = lambda;
        row.retries = retries;
        let prev = run.diagnostics.rows.last().expect("initial row");
        self.check_structure(prev, &row)?;
        log::debug!(
            "step {step}: t = {t:.6}, dt = {dt:.3e}, E = {:.10e}, iterations = {}",
            row.energy.total,
            row.iterations
        );
        run.state = next;
        run.t = t;
        run.dt = dt;
        run.step = step;
        run.energy_history.push((t, row.energy.total));
        run.diagnostics.rows.push(row);
        Ok(())
    }

    /// Theorem-level guarantees for one accepted step: energy does not grow
    /// beyond `ENERGY_SLACK·ε₂` relative, masses move by at most
    /// `ΔxΔy√N δ`, and `ψ` stays in `[0, 1]`.
    fn check_structure(&self, prev: &StepRecord, row: &StepRecord) -> Result<()> {
        let violation = |what: String| Error::StructureViolation { step: row.step, t: row.t, what };
        if row.psi_min < 0.0 || row.psi_max > 1.0 {
            return Err(violation(format!("psi outside [0, 1]: [{}, {}]", row.psi_min, row.psi_max)));
        }
        let eps2 = self.solver.params().eps2;
        let (e0, e1) = (prev.energy.total, row.energy.total);
        if e1 > e0 + ENERGY_SLACK * eps2 * e0.abs() {
            return Err(violation(format!("energy increased from {e0:e} to {e1:e}")));
        }
        let bound = self.mass_bound();
        for (name, a, b) in [("phi", prev.mass_phi, row.mass_phi), ("psi", prev.mass_psi, row.mass_psi)] {
            // the second term absorbs summation round-off
            let slack = bound + 1e-13 * a.abs().max(self.grid.cell_area());
            if (b - a).abs() > slack {
                return Err(violation(format!("mass of {name} drifted by {:e} > {bound:e}", b - a)));
            }
        }
        Ok(())
    }

    /// `ΔxΔy √N δ`: the largest per-step mass change allowed by `‖Au − b‖ ≤ δ`.
    pub fn mass_bound(&self) -> f64 {
        self.grid.cell_area() * (self.grid.len() as f64).sqrt() * self.solver.params().delta
    }

    /// Integrates to `t_end`. Diagnostics accumulate in `run` even when an
    /// error stops the loop.
    pub fn run(&mut self, run: &mut RunState, mut out: Option<&mut OutputWriter>) -> Result<()> {
        if let Some(o) = out.as_deref_mut() {
            if run.step == 0 {
                o.begin(run, &self.grid)?;
            }
        }
        let t_end = self.time.t_end;
        let tol = 1e-10 * t_end.max(1.0);
        while run.t < t_end - tol {
            let mut dt = self.proposed_dt(run).min(t_end - run.t);
            if let Some(o) = out.as_deref() {
                if let Some(&s) = o.snapshot_times.iter().filter(|&&s| s > run.t + tol).min_by(|a, b| a.total_cmp(b)) {
                    dt = dt.min(s - run.t);
                }
            }
            self.step(run, dt)?;
            if (run.t - t_end).abs() <= tol {
                run.t = t_end;
                if let Some(r) = run.diagnostics.rows.last_mut() {
                    r.t = t_end;
                }
            }
            if let Some(o) = out.as_deref_mut() {
                o.after_step(run, &self.grid, run.t == t_end)?;
            }
        }
        Ok(())
    }
}
