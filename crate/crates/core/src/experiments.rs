//! Named experiment presets, configuration merging, and the runners behind
//! the command-line tool.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::config::{parse_key_values, parse_num, BoundaryKind, ModelParams, SolverParams, TimeParams};
use crate::driver::{Driver, OutputWriter, RunState};
use crate::error::{Error, Result};
use crate::grid::{linf_diff, offset_form_radius, random_uniform_ic, tanh_droplet_ic, thin_film_ic, Grid, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Temporal convergence study on a single cap (Cn = 0.025).
    Accuracy,
    /// Single cap relaxing to its equilibrium angle (Cn = 0.01).
    SingleDroplet,
    /// Two droplets on `[0,1]×[0,0.4]`, the solver and step-size benchmark.
    TwoDropletBench,
    /// Two droplets on `[0,2]×[0,0.4]` with variable surfactant load.
    TwoDroplet,
    ThreeDroplet,
    ThinFilm,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Self::Accuracy,
        Self::SingleDroplet,
        Self::TwoDropletBench,
        Self::TwoDroplet,
        Self::ThreeDroplet,
        Self::ThinFilm,
    ];
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "accuracy" => Self::Accuracy,
            "single_droplet" => Self::SingleDroplet,
            "two_droplet_bench" => Self::TwoDropletBench,
            "two_droplet" | "two_droplet_diffusion" => Self::TwoDroplet,
            "three_droplet" => Self::ThreeDroplet,
            "thin_film" => Self::ThinFilm,
            _ => return Err(Error::Config(format!("unknown experiment `{s}`"))),
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Accuracy => "accuracy",
            Self::SingleDroplet => "single_droplet",
            Self::TwoDropletBench => "two_droplet_bench",
            Self::TwoDroplet => "two_droplet",
            Self::ThreeDroplet => "three_droplet",
            Self::ThinFilm => "thin_film",
        })
    }
}

/// Shape of the initial `φ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// `tanh((R − r)/(√2 Cn))` caps centred on the substrate.
    Droplets { centers: Vec<f64>, radius: f64 },
    /// Flat film centred at `x_center`.
    Film { x_center: f64, length: f64, height: f64 },
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub preset: Preset,
    /// `[a, b] × [c, d]`.
    pub domain: [f64; 4],
    pub dx: f64,
    pub dy: f64,
    pub model: ModelParams,
    pub solver: SolverParams,
    pub time: TimeParams,
    pub shape: Shape,
    pub psi_mean: f64,
    /// Amplitude of the uniform noise added to `psi_mean`.
    pub psi_amp: f64,
    pub seed: u64,
    pub snapshot_times: Vec<f64>,
    /// Accuracy study: the compared steps and the reference step.
    pub accuracy_dts: Vec<f64>,
    pub reference_dt: f64,
    pub vtk: bool,
}

fn model(cn: f64, theta_deg: f64) -> ModelParams {
    let mut m = ModelParams::benchmark();
    m.cn = cn;
    let sum = m.gamma_sum();
    m.theta_s = theta_deg.to_radians();
    m.set_gamma_sum(sum);
    m
}

impl Experiment {
    /// Desk-scale defaults halve the published resolution; `paper_scale`
    /// restores it.
    pub fn preset(preset: Preset, paper_scale: bool) -> Self {
        let s = if paper_scale { 1.0 } else { 2.0 };
        let solver = SolverParams { auto_lambda: true, ..SolverParams::default() };
        let droplets = |centers: &[f64], cn: f64| Shape::Droplets {
            centers: centers.to_vec(),
            radius: offset_form_radius(10.0, cn),
        };
        let base = Self {
            preset,
            domain: [0.0, 1.0, 0.0, 0.5],
            dx: 0.005 * s,
            dy: 0.005 * s,
            model: model(0.025, 120.0),
            solver,
            time: TimeParams::fixed(0.01, 1.0),
            shape: Shape::Droplets { centers: vec![0.5], radius: 0.3 },
            psi_mean: 0.02,
            psi_amp: 0.001,
            seed: 1,
            snapshot_times: Vec::new(),
            accuracy_dts: Vec::new(),
            reference_dt: 0.0,
            vtk: false,
        };
        match preset {
            Preset::Accuracy => Self {
                time: TimeParams::fixed(1.0 / 50.0, 0.1),
                accuracy_dts: vec![1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0, 1.0 / 400.0],
                reference_dt: if paper_scale { 1e-5 } else { 1.0 / 1600.0 },
                snapshot_times: vec![0.1],
                ..base
            },
            Preset::SingleDroplet => Self {
                model: model(0.01, 120.0),
                time: TimeParams { dt_min: 0.01, dt_max: 0.5, beta: 1e4, t_end: 100.0, adaptive: false },
                snapshot_times: vec![1.0, 10.0, 50.0, 100.0],
                ..base
            },
            Preset::TwoDropletBench => Self {
                domain: [0.0, 1.0, 0.0, 0.4],
                model: model(0.01, 60.0),
                shape: droplets(&[0.25, 0.75], 0.01),
                psi_mean: 0.07,
                time: TimeParams { dt_min: 0.01, dt_max: 0.1, beta: 1e4, t_end: 50.0, adaptive: false },
                snapshot_times: vec![25.0, 50.0],
                ..base
            },
            Preset::TwoDroplet => Self {
                domain: [0.0, 2.0, 0.0, 0.4],
                model: model(0.01, 60.0),
                shape: droplets(&[0.75, 1.25], 0.01),
                psi_mean: 0.04,
                time: TimeParams { dt_min: 0.01, dt_max: 0.1, beta: 1e4, t_end: 40.0, adaptive: false },
                snapshot_times: vec![10.0, 20.0, 40.0],
                ..base
            },
            Preset::ThreeDroplet => Self {
                domain: [0.0, 1.5, 0.0, 0.75],
                model: model(0.01, 60.0),
                shape: droplets(&[0.25, 0.75, 1.25], 0.01),
                time: TimeParams { dt_min: 0.01, dt_max: 0.1, beta: 1e4, t_end: 80.0, adaptive: false },
                snapshot_times: vec![25.0, 65.0, 80.0],
                ..base
            },
            Preset::ThinFilm => Self {
                domain: [-1.5, 1.5, 0.0, 0.5],
                dx: 0.01 * s,
                dy: 0.005 * s,
                model: model(0.006, 120.0),
                shape: Shape::Film { x_center: 0.0, length: 2.5, height: 0.03 },
                psi_mean: 0.07,
                psi_amp: 0.0,
                time: TimeParams { dt_min: 0.01, dt_max: 0.1, beta: 1e4, t_end: 40.0, adaptive: false },
                snapshot_times: vec![20.0, 40.0],
                ..base
            },
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        let [a, b, c, d] = self.domain;
        Grid::with_spacing(a, b, c, d, self.dx, self.dy)
    }

    /// `φ₀` from the shape, `ψ₀ = psi_mean + psi_amp·ξ` with a seeded stream,
    /// and `φ_bc⁰` equal to the first row.
    pub fn initial_state(&self) -> Result<State> {
        let g = self.grid()?;
        let phi = match &self.shape {
            Shape::Droplets { centers, radius } => {
                let c: Vec<(f64, f64)> = centers.iter().map(|&x| (x, g.c)).collect();
                tanh_droplet_ic(&g, &c, *radius, self.model.cn)
            }
            Shape::Film { x_center, length, height } => thin_film_ic(&g, *x_center, *length, *height, self.model.cn),
        };
        let psi = random_uniform_ic(&g, self.psi_mean, self.psi_amp, self.seed);
        if psi.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Config("initial psi leaves [0, 1]".into()));
        }
        Ok(State::from_fields(&g, &phi, &psi, &phi[..g.nx]))
    }

    /// Applies one `key=value` override. Model, solver and time keys are
    /// forwarded; `experiment` must name this preset and `version` is ignored.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.apply_key(key, value)? || self.solver.apply_key(key, value)? || self.time.apply_key(key, value)? {
            return Ok(());
        }
        let list = |v: &str| -> Result<Vec<f64>> {
            v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s.trim())).collect()
        };
        match key {
            "experiment" => {
                let p: Preset = value.parse()?;
                if p != self.preset {
                    return Err(Error::Config(format!("config is for `{p}`, not `{}`", self.preset)));
                }
            }
            "version" => {}
            "domain" => {
                let v = list(value)?;
                self.domain = v
                    .try_into()
                    .map_err(|_| Error::Config("domain needs four numbers a,b,c,d".into()))?;
            }
            "dx" => self.dx = parse_num(key, value)?,
            "dy" => self.dy = parse_num(key, value)?,
            "dt" => {
                self.time.dt_min = parse_num(key, value)?;
                if !self.time.adaptive {
                    self.time.dt_max = self.time.dt_min;
                }
            }
            "psi_mean" => self.psi_mean = parse_num(key, value)?,
            "psi_amp" => self.psi_amp = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "centers" => match &mut self.shape {
                Shape::Droplets { centers, .. } => *centers = list(value)?,
                Shape::Film { .. } => return Err(Error::Config("`centers` needs a droplet preset".into())),
            },
            "radius" => match &mut self.shape {
                Shape::Droplets { radius, .. } => *radius = parse_num(key, value)?,
                Shape::Film { .. } => return Err(Error::Config("`radius` needs a droplet preset".into())),
            },
            "film_height" | "film_length" | "film_center" => match &mut self.shape {
                Shape::Film { x_center, length, height } => {
                    let v = parse_num(key, value)?;
                    match key {
                        "film_height" => *height = v,
                        "film_length" => *length = v,
                        _ => *x_center = v,
                    }
                }
                Shape::Droplets { .. } => return Err(Error::Config(format!("`{key}` needs the thin_film preset"))),
            },
            "snapshot_times" => self.snapshot_times = list(value)?,
            "accuracy_dts" => self.accuracy_dts = list(value)?,
            "reference_dt" => self.reference_dt = parse_num(key, value)?,
            "vtk" => {
                self.vtk = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(Error::Config(format!("bad value `{value}` for `vtk`"))),
                }
            }
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies a `key=value` document.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_key_values(text)? {
            self.apply_key(&k, &v)?;
        }
        Ok(())
    }

    /// Full configuration as `key=value` pairs, in an order that
    /// [`apply_text`](Self::apply_text) reproduces exactly.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut kv: Vec<(String, String)> = vec![("experiment".into(), self.preset.to_string())];
        kv.push(("domain".into(), join(&self.domain)));
        kv.push(("dx".into(), self.dx.to_string()));
        kv.push(("dy".into(), self.dy.to_string()));
        // bc_kind before pe_s so that pe_s = 0 round-trips
        let mut model = self.model.key_values();
        model.sort_by_key(|(k, _)| *k != "bc_kind");
        for (k, v) in model.into_iter().chain(self.solver.key_values()).chain(self.time.key_values()) {
            kv.push((k.to_string(), v));
        }
        match &self.shape {
            Shape::Droplets { centers, radius } => {
                kv.push(("centers".into(), join(centers)));
                kv.push(("radius".into(), radius.to_string()));
            }
            Shape::Film { x_center, length, height } => {
                kv.push(("film_center".into(), x_center.to_string()));
                kv.push(("film_length".into(), length.to_string()));
                kv.push(("film_height".into(), height.to_string()));
            }
        }
        kv.push(("psi_mean".into(), self.psi_mean.to_string()));
        kv.push(("psi_amp".into(), self.psi_amp.to_string()));
        kv.push(("seed".into(), self.seed.to_string()));
        kv.push(("snapshot_times".into(), join(&self.snapshot_times)));
        kv.push(("accuracy_dts".into(), join(&self.accuracy_dts)));
        kv.push(("reference_dt".into(), self.reference_dt.to_string()));
        kv.push(("vtk".into(), self.vtk.to_string()));
        kv
    }

    /// Manifest text: version line followed by the full configuration.
    pub fn manifest(&self) -> String {
        let mut s = format!("version={}\n", version_string());
        for (k, v) in self.key_values() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Builds a driver and the starting run state.
    pub fn driver(&self) -> Result<(Driver, RunState)> {
        let grid = self.grid()?;
        let initial = self.initial_state()?;
        let d = Driver::new(&grid, &self.model, &self.solver, &self.time, &initial)?;
        let run = d.start(initial)?;
        Ok((d, run))
    }
}

/// Crate version plus the build's `git describe`, when provided at compile
/// time through `PFS_JKO_GIT_DESCRIBE`.
pub fn version_string() -> String {
    match option_env!("PFS_JKO_GIT_DESCRIBE") {
        Some(g) => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Result of a preset run. Diagnostics are kept even when the run stopped
/// on an error.
#[derive(Debug)]
pub struct PresetRun {
    pub run: RunState,
    pub error: Option<Error>,
}

/// Runs one time integration, writing snapshots and (unless the run failed
/// to converge) the diagnostics tables to `out_dir`.
pub fn run_experiment(exp: &Experiment, out_dir: Option<&Path>) -> Result<PresetRun> {
    let (mut driver, mut run) = exp.driver()?;
    let mut writer = out_dir.map(|d| {
        let mut w = OutputWriter::new(d);
        w.vtk = exp.vtk;
        w.snapshot_times = exp.snapshot_times.clone();
        w.geometric_start = Some(exp.time.dt_min.max(0.01));
        w
    });
    if let Some(d) = out_dir {
        fs::create_dir_all(d)?;
        fs::write(d.join("manifest.txt"), exp.manifest())?;
    }
    let error = driver.run(&mut run, writer.as_mut()).err();
    if let (Some(d), false) = (out_dir, matches!(error, Some(ref e) if exit_code(e) == 4)) {
        run.diagnostics.write(d)?;
        if let Some(Error::StructureViolation { .. }) = error {
            if let Some(w) = &writer {
                w.snapshot(&run.state, driver.grid(), run.t)?;
            }
        }
    }
    Ok(PresetRun { run, error })
}

/// Errors of a finished run, per exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnknownKey(_) => 2,
        Error::StructureViolation { .. } => 3,
        Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Numerical(_) | Error::SingularMode { .. } => 4,
        Error::Io(_) => 1,
    }
}

/// One row of the temporal convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub dt: f64,
    pub err_phi: f64,
    pub err_psi: f64,
    /// `log₂` ratio against the previous (coarser) row; `None` on the first row.
    pub order_phi: Option<f64>,
    pub order_psi: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
    pub reference_dt: f64,
}

impl AccuracyTable {
    pub fn to_csv(&self) -> String {
        let opt = |o: Option<f64>| o.map_or_else(String::new, |v| v.to_string());
        let mut s = String::from("dt,err_phi,order_phi,err_psi,order_psi,iterations\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.dt,
                r.err_phi,
                opt(r.order_phi),
                r.err_psi,
                opt(r.order_psi),
                r.iterations
            );
        }
        s
    }
}

/// Observed order `log(e_coarse/e_fine)/log(dt_coarse/dt_fine)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, dt_coarse: f64, dt_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (dt_coarse / dt_fine).ln()
}

fn worker_count(jobs: usize) -> usize {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("PFS_JKO_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    cap.unwrap_or(hw).min(jobs).max(1)
}

/// Runs the fixed-step cases of `exp.accuracy_dts` and the reference step
/// to `exp.time.t_end` and tabulates `‖·‖_∞` errors against the reference.
/// Cases run on up to `PFS_JKO_THREADS` threads.
pub fn run_accuracy_study(exp: &Experiment) -> Result<AccuracyTable> {
    let mut dts = exp.accuracy_dts.clone();
    if dts.is_empty() || !(exp.reference_dt > 0.0) {
        return Err(Error::Config("accuracy study needs accuracy_dts and reference_dt".into()));
    }
    dts.push(exp.reference_dt);
    let run_one = |dt: f64| -> Result<RunState> {
        let mut e = exp.clone();
        e.time = TimeParams::fixed(dt, exp.time.t_end);
        let (mut d, mut run) = e.driver()?;
        d.run(&mut run, None)?;
        Ok(run)
    };
    let workers = worker_count(dts.len());
    let mut results: Vec<Option<Result<RunState>>> = (0..dts.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> = (0..workers).map(|w| (w..dts.len()).step_by(workers).collect()).collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|idx| {
                let dts = &dts;
                let run_one = &run_one;
                scope.spawn(move || idx.into_iter().map(|i| (i, run_one(dts[i]))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("accuracy worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let mut runs = Vec::with_capacity(dts.len());
    for r in results {
        runs.push(r.expect("every case ran")?);
    }
    let reference = runs.pop().expect("reference run");
    let mut rows: Vec<AccuracyRow> = Vec::new();
    for (dt, run) in dts.iter().zip(&runs) {
        let err_phi = linf_diff(run.state.phi(), reference.state.phi());
        let err_psi = linf_diff(run.state.psi(), reference.state.psi());
        let (order_phi, order_psi) = match rows.last() {
            Some(p) => (
                Some(observed_order(p.err_phi, err_phi, p.dt, *dt)),
                Some(observed_order(p.err_psi, err_psi, p.dt, *dt)),
            ),
            None => (None, None),
        };
        rows.push(AccuracyRow {
            dt: *dt,
            err_phi,
            err_psi,
            order_phi,
            order_psi,
            iterations: run.diagnostics.total_iterations(),
        });
    }
    Ok(AccuracyTable { rows, reference_dt: exp.reference_dt })
}

/// Command-line overrides, applied after the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub adaptive: bool,
    pub solver: Option<String>,
    pub dual_prox: Option<String>,
    pub seed: Option<u64>,
    pub vtk: bool,
    /// Extra `key=value` pairs.
    pub set: Vec<(String, String)>,
}

/// Preset defaults, then the configuration file, then the flags.
pub fn build_experiment(preset: Preset, paper_scale: bool, config_text: Option<&str>, ov: &Overrides) -> Result<Experiment> {
    let mut exp = Experiment::preset(preset, paper_scale);
    if let Some(text) = config_text {
        exp.apply_text(text)?;
    }
    if ov.adaptive {
        exp.time.adaptive = true;
    }
    if let Some(dt) = ov.dt {
        exp.apply_key("dt", &dt.to_string())?;
    }
    if let Some(s) = &ov.solver {
        exp.apply_key("method", s)?;
    }
    if let Some(s) = &ov.dual_prox {
        exp.apply_key("dual_prox_mode", s)?;
    }
    if let Some(s) = ov.seed {
        exp.seed = s;
    }
    if ov.vtk {
        exp.vtk = true;
    }
    for (k, v) in &ov.set {
        exp.apply_key(k, v)?;
    }
    if exp.model.bc_kind == BoundaryKind::Equilibrium && exp.dy >= exp.model.cn {
        return Err(Error::Config(format!(
            "equilibrium boundary condition needs dy < Cn (dy = {}, Cn = {})",
            exp.dy, exp.model.cn
        )));
    }
    Ok(exp)
}

/// Preset name stored in a configuration document, if any.
pub fn experiment_in_text(text: &str) -> Result<Option<Preset>> {
    for (k, v) in parse_key_values(text)? {
        if k == "experiment" {
            return v.parse().map(Some);
        }
    }
    Ok(None)
}
