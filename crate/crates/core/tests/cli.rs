use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: [&str; 6] = ["dx=0.05", "dy=0.05", "cn=0.05", "t_end=0.03", "radius=0.3", "snapshot_times=0.02"];

fn pfs(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfs-jko"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn tiny_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec!["--experiment", "two_droplet_bench"];
    a.extend_from_slice(extra);
    a.extend_from_slice(&TINY);
    a
}

#[test]
fn tiny_run_writes_tables_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfs(&tiny_args(&["--vtk", "--seed", "4"]), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let energy = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    assert!(energy.starts_with("t,f_gl,f_sur,f_ad,f_wf,total\n"));
    assert_eq!(energy.lines().count(), 1 + 4);
    let solver = fs::read_to_string(dir.path().join("solver.csv")).unwrap();
    assert!(solver.starts_with("step,iterations,residual,converged,wall_ms\n"));
    for name in ["snap_t0.000000", "snap_t0.020000", "snap_t0.030000"] {
        assert!(dir.path().join("phi").join(format!("{name}.csv")).exists(), "{name}");
        assert!(dir.path().join("psi").join(format!("{name}.csv")).exists(), "{name}");
        assert!(dir.path().join("vtk").join(format!("{name}.vtk")).exists(), "{name}");
    }
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("version="));
    assert!(manifest.contains("\nexperiment=two_droplet_bench\n"));
    assert!(manifest.contains("\nseed=4\n"));
    assert!(manifest.contains("\nvtk=true\n"));
}

/// The manifest alone reproduces a run bit for bit.
#[test]
fn manifest_reproduces_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(pfs(&tiny_args(&["--seed", "11"]), a.path()).status.code(), Some(0));
    let manifest = a.path().join("manifest.txt");
    let o = pfs(&["--config", manifest.to_str().unwrap()], b.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["energy.csv", "manifest.txt", "phi/snap_t0.030000.csv", "psi/snap_t0.030000.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["--experiment", "two_droplet_bench", "no_such_key=1"],
        &["--experiment", "four_droplets"],
        &["--experiment", "two_droplet_bench", "--solver", "newton"],
        &["--experiment", "two_droplet_bench", "lambda=-1"],
    ];
    for args in cases {
        let o = pfs(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!dir.path().join("diagnostics.csv").exists());
    }
    let o = pfs(&["--experiment"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = pfs(&[], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_4_without_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfs(&tiny_args(&["iter_max=2"]), dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("diagnostics.csv").exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("did not converge"));
}

#[test]
fn accuracy_preset_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfs(
        &[
            "--experiment",
            "accuracy",
            "dx=0.05",
            "dy=0.05",
            "cn=0.05",
            "t_end=0.02",
            "accuracy_dts=0.02,0.01",
            "reference_dt=0.005",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t = fs::read_to_string(dir.path().join("accuracy.csv")).unwrap();
    let mut lines = t.lines();
    assert_eq!(lines.next(), Some("dt,err_phi,order_phi,err_psi,order_psi,iterations"));
    assert_eq!(lines.count(), 2);
}
