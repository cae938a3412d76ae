use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser};
use pfs_jko::experiments::{
    build_experiment, exit_code, experiment_in_text, run_accuracy_study, run_experiment, Overrides, Preset,
};
use pfs_jko::{Error, Result};

/// Structure-preserving JKO simulator for surfactant-laden droplets on a
/// substrate.
#[derive(Debug, Parser)]
#[command(name = "pfs-jko")]
struct Cli {
    /// accuracy, single_droplet, two_droplet_bench, two_droplet, three_droplet or thin_film.
    /// May instead come from the `experiment` key of --config.
    #[arg(long)]
    experiment: Option<String>,
    /// `key=value` file merged over the preset defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Fixed step (or the minimum step with --adaptive).
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    adaptive: bool,
    /// Published resolution instead of the halved desk-scale grid.
    #[arg(long)]
    paper_scale: bool,
    /// pd3o or prepd.
    #[arg(long)]
    solver: Option<String>,
    /// exact or inexact.
    #[arg(long)]
    dual_prox: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write legacy VTK snapshots.
    #[arg(long)]
    vtk: bool,
    /// Extra `key=value` overrides, applied last.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn execute(cli: Cli) -> Result<i32> {
    let text = cli.config.as_ref().map(fs::read_to_string).transpose()?;
    let preset: Preset = match (&cli.experiment, text.as_deref()) {
        (Some(name), _) => name.parse()?,
        (None, Some(t)) => experiment_in_text(t)?
            .ok_or_else(|| Error::Config("no --experiment and no `experiment` key in the config".into()))?,
        (None, None) => return Err(Error::Config("--experiment is required".into())),
    };
    let set = cli
        .set
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("override `{kv}` is not key=value")))
        })
        .collect::<Result<Vec<_>>>()?;
    let ov = Overrides {
        dt: cli.dt,
        adaptive: cli.adaptive,
        solver: cli.solver,
        dual_prox: cli.dual_prox,
        seed: cli.seed,
        vtk: cli.vtk,
        set,
    };
    let exp = build_experiment(preset, cli.paper_scale, text.as_deref(), &ov)?;
    let out = cli.out_dir;
    fs::create_dir_all(&out)?;

    if preset == Preset::Accuracy {
        fs::write(out.join("manifest.txt"), exp.manifest())?;
        let table = run_accuracy_study(&exp)?;
        fs::write(out.join("accuracy.csv"), table.to_csv())?;
        for r in &table.rows {
            log::info!("dt = {:.3e}: err_phi = {:.3e}, err_psi = {:.3e}", r.dt, r.err_phi, r.err_psi);
        }
        return Ok(0);
    }

    let res = run_experiment(&exp, Some(&out))?;
    let last = res.run.diagnostics.rows.last();
    if let Some(r) = last {
        log::info!(
            "t = {:.4}, steps = {}, iterations = {}, energy = {:.6e}",
            r.t,
            res.run.step,
            res.run.diagnostics.total_iterations(),
            r.energy.total
        );
    }
    match res.error {
        None => Ok(0),
        Some(e) => {
            eprintln!("error: {e}");
            Ok(exit_code(&e))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let version: &'static str = Box::leak(pfs_jko::experiments::version_string().into_boxed_str());
    let cli = match Cli::from_arg_matches(&Cli::command().version(version).get_matches()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let code = match execute(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
