use std::path::Path;
use std::process::Command;

use onsager_cli::run_cli;

const SMALL: &str = "d = 1\nX = 20\nn = 16\nlmax = 6\nalpha = 8\neps = 0.1, 0.05\nt_final = 0.05\nsamples = 5\namplitude = 0.5\n";

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn run(args: &[&str]) -> i32 {
    run_cli(std::iter::once("onsager").chain(args.iter().copied()))
}

fn records(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().iter().map(str::to_owned).collect();
    (headers, r.records().map(|x| x.unwrap()).collect())
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_onsager");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap();

    let out = status(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("usage"));

    assert_eq!(status(&[]).status.code(), Some(1));
    assert_eq!(status(&["--help"]).status.code(), Some(0));
    assert_eq!(status(&["coefficients", "--config", "/nonexistent/exp.cfg"]).status.code(), Some(1));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "n = 48\n");
    assert_eq!(run(&["kinetic", "--config", &cfg]), 1);
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(run(&["coefficients", "--config", &cfg, "--alpha", "7"]), 1);
    assert_eq!(run(&["sweep", "--config", &cfg, "--threads", "lots"]), 1);
}

#[test]
fn numerical_failures_exit_with_two() {
    // a strongly ordered equilibrium is not resolvable at this band limit
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert_eq!(run(&["kinetic", "--config", &cfg, "--alpha", "20", "--out", out.to_str().unwrap()]), 2);
}

#[test]
fn coefficients_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("coef");
    assert_eq!(run(&["coefficients", "--alpha", "8", "--out", out.to_str().unwrap()]), 0);
    let (headers, rows) = records(&out.join("coefficients.csv"));
    assert_eq!(headers, onsager_core::io::COEFFICIENT_HEADER.to_vec());
    assert_eq!(rows.len(), 1);
    let col = |name: &str| rows[0][headers.iter().position(|h| h == name).unwrap()].parse::<f64>().unwrap();
    assert_eq!(col("alpha"), 8.0);
    assert!((col("gamma") - 0.765_066_260_265_849_2).abs() < 1e-10);
    assert!((col("Lambda") - 2.382_757_769_893_567).abs() < 1e-10);
}

#[test]
fn bifurcation_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bif");
    assert_eq!(run(&["bifurcation", "--out", out.to_str().unwrap()]), 0);
    let (headers, rows) = records(&out.join("bifurcation.csv"));
    assert_eq!(headers, ["alpha", "eta_roots", "s2", "E0"]);
    assert_eq!(rows.len(), 41);
    // below the first bifurcation only the isotropic root exists
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.0);
    let last = &rows[40];
    assert_eq!(last[0].parse::<f64>().unwrap(), 15.0);
    assert_eq!(last[1].split(';').count(), 3);
    assert!(last[2].parse::<f64>().unwrap() > 0.8);
}

#[test]
fn selftest_passes() {
    assert_eq!(run(&["selftest"]), 0);
}

#[test]
fn sweep_writes_one_row_per_eps_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap(), "--threads", "2"]), 0);
    assert_eq!(run(&["sweep", "--config", &cfg, "--out", b.to_str().unwrap(), "--threads", "1"]), 0);
    let (headers, rows) = records(&a.join("sweep.csv"));
    assert_eq!(headers, onsager_core::harness::SWEEP_HEADER.to_vec());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.1);
    assert_eq!(rows[1][0].parse::<f64>().unwrap(), 0.05);
    for name in ["sweep.csv", "energy_0.1.csv", "energy_0.05.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn single_run_subcommands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}snapshot_stride = 4\n"));
    let out = dir.path().join("runs");
    let o = out.to_str().unwrap();
    assert_eq!(run(&["kinetic", "--config", &cfg, "--out", o]), 0);
    assert!(out.join("energy_0.1.csv").exists());
    let snap = out.join("snap_0.1_0.doqs");
    let s = onsager_core::io::read_snapshot(&snap).unwrap();
    assert_eq!((s.d, s.n, s.lmax, s.eps), (1, 16, 6, 0.1));

    assert_eq!(run(&["closure", "--config", &cfg, "--out", o]), 0);
    let (_, rows) = records(&out.join("closure_0.1.csv"));
    assert_eq!(rows.len(), 6);

    assert_eq!(run(&["hmhf", "--config", &cfg, "--out", o]), 0);
    let (headers, rows) = records(&out.join("hmhf.csv"));
    assert_eq!(headers, ["t", "dirichlet_energy", "norm_defect"]);
    let energy: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(energy.windows(2).all(|w| w[1] <= w[0] + 1e-14));
    assert!(out.join("director_0.doqs").exists());

    assert_eq!(run(&["equilibrate", "--config", &cfg, "--out", o, "--seed", "3"]), 0);
    assert!(out.join("energy_equilibrate.csv").exists());
}
