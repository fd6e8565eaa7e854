//! Command-line driver. `run_cli` returns the process exit code:
//! 0 on success, 1 for usage or configuration errors, 2 for numerical
//! failures.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use onsager_core::config::ExperimentConfig;
use onsager_core::harness::{run_kinetic, well_prepared_init, ConvergenceReport, SweepSetup};
use onsager_core::io::{
    write_bifurcation_csv, write_coefficients_csv, write_density, write_director, write_energy_csv, write_table,
    BifurcationRow,
};
use onsager_core::kernel::{KernelSpec, QTensorField, TorusGrid};
use onsager_core::kinetic::{DensityField, KineticModel};
use onsager_core::limit::{
    assemble_linearized, dirichlet_energy, gamma_constant, hmhf_stable_dt, hmhf_step, lambda_coefficient, DirectorField,
};
use onsager_core::maier_saupe::{solve_eta, EquilibriumParams};
use onsager_core::sphere::{build_grid, div_rot, laplace_beltrami, rot_grad, SphereField};
use onsager_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "onsager", version, about = "Doi-Onsager kinetic model and its harmonic-map limit")]
struct Cli {
    /// Experiment configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the interaction strength.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized initial perturbations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roots of the self-consistency equation over a range of alpha.
    Bifurcation,
    /// Relax a random homogeneous density to equilibrium.
    Equilibrate,
    /// Kinetic run from well-prepared data at the first eps.
    Kinetic,
    /// Closed second-moment flow from well-prepared data at the first eps.
    Closure,
    /// Harmonic map heat flow with the limit coefficient.
    Hmhf,
    /// Kinetic runs for every eps compared against the limit flow.
    Sweep,
    /// Limit coefficients gamma and Lambda.
    Coefficients,
    /// Quick invariant checks.
    Selftest,
}

/// Parses `argv` (including the program name) and runs one subcommand.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::reference(),
    };
    if let Some(alpha) = cli.alpha {
        cfg.alpha = alpha;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(&cfg.out_dir)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match cli.command {
        Command::Bifurcation => bifurcation(cli),
        Command::Equilibrate => equilibrate(cli),
        Command::Kinetic => kinetic(cli),
        Command::Closure => closure(cli),
        Command::Hmhf => hmhf(cli),
        Command::Sweep => sweep(cli),
        Command::Coefficients => coefficients(cli),
        Command::Selftest => selftest(),
    }
}

fn bifurcation(cli: &Cli) -> Result<()> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out)?;
    let alphas: Vec<f64> = match cli.alpha {
        Some(a) => vec![a],
        None => (0..=40).map(|k| 5.0 + 0.25 * k as f64).collect(),
    };
    let mut rows = Vec::with_capacity(alphas.len());
    for alpha in alphas {
        let roots = solve_eta(alpha)?;
        let eta = roots.iter().copied().fold(0.0, f64::max);
        let p = EquilibriumParams::from_eta(alpha, eta);
        rows.push(BifurcationRow { alpha, roots, s2: p.s2, e0: p.e0 });
    }
    write_bifurcation_csv(out.join("bifurcation.csv"), &rows)?;
    for r in &rows {
        println!("alpha {:>6.2}  roots {:>2}  S2 {:.6}", r.alpha, r.roots.len(), r.s2);
    }
    Ok(())
}

fn equilibrate(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(&cfg)?;
    let torus = TorusGrid::new(1, cfg.length, 2)?;
    let spec = KernelSpec::gaussian(cfg.a, 1)?;
    let params = EquilibriumParams::new(cfg.alpha)?;
    let mut model = KineticModel::new(torus, cfg.lmax, spec, params)?;
    model.cfl = cfg.cfl;
    let eps = cfg.epsilons[0];
    // isotropic density with a random quadrupolar perturbation
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let b: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let site = SphereField::from_fn(Arc::clone(&model.sphere), |m| {
        let quad = b[0] * (m[0] * m[0] - m[1] * m[1]) + b[1] * (3.0 * m[2] * m[2] - 1.0) / 2.0 + b[2] * m[0] * m[1]
            + b[3] * m[1] * m[2]
            + b[4] * m[0] * m[2];
        (1.0 + 0.3 * quad) / (4.0 * PI)
    });
    let f = DensityField::homogeneous(torus, &site, eps)?;
    let t_end = 40.0 * eps;
    let times: Vec<f64> = (0..=40).map(|k| t_end * k as f64 / 40.0).collect();
    let run = run_kinetic(&model, f, &times, |_, _| Ok(()))?;
    write_energy_csv(dir.join("energy_equilibrate.csv"), &run.energy)?;
    let q = run.final_field.q_field().values[0];
    let s = 1.5 * q.eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("t {t_end}  S2 {s:.10}  resolved S2 {:.10}  exact S2 {:.10}", model.reference.s2, params.s2);
    Ok(())
}

fn eps_tag(eps: f64) -> String {
    format!("{eps}")
}

fn kinetic(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(&cfg)?.to_path_buf();
    let setup = SweepSetup::new(&cfg)?;
    let eps = cfg.epsilons[0];
    let f = well_prepared_init(&setup.director, &setup.model, eps)?;
    let stride = cfg.snapshot_stride;
    let run = run_kinetic(&setup.model, f, &setup.sample_times, |step, f| {
        if stride > 0 && step % stride == 0 {
            write_density(dir.join(format!("snap_{}_{step}.doqs", eps_tag(eps))), f)?;
        }
        Ok(())
    })?;
    write_energy_csv(dir.join(format!("energy_{}.csv", eps_tag(eps))), &run.energy)?;
    let last = run.energy.last().expect("non-empty");
    println!(
        "eps {eps}  steps {}  E/eps {:.6e}  cumulative dissipation {:.6e}",
        run.steps,
        last.modulated_total / eps,
        last.cumulative_dissipation
    );
    Ok(())
}

fn closure(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(&cfg)?;
    let setup = SweepSetup::new(&cfg)?;
    let eps = cfg.epsilons[0];
    let f = well_prepared_init(&setup.director, &setup.model, eps)?;
    let mut q = f.q_field();
    let dt_max = setup.model.stable_dt(&f);
    let mut t = 0.0;
    let mut rows = Vec::new();
    for (k, &ts) in setup.sample_times.iter().enumerate() {
        while ts - t > 1e-12 {
            let dt = dt_max.min(ts - t);
            q = setup.model.q_closure_step(&q, dt, eps)?;
            t += dt;
        }
        t = ts;
        let err = q.sub(&setup.targets[k]).l2_norm();
        rows.push(vec![t, err, q.l2_norm()]);
    }
    write_table(dir.join(format!("closure_{}.csv", eps_tag(eps))), &["t", "limit_error", "q_norm"], &rows)?;
    println!("eps {eps}  final limit error {:.6e}", rows.last().map(|r| r[1]).unwrap_or(f64::NAN));
    Ok(())
}

fn hmhf(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(&cfg)?;
    let setup = SweepSetup::new(&cfg)?;
    let lambda = setup.coefficients.lambda;
    let dt_max = 0.5 * hmhf_stable_dt(&setup.director.torus, lambda);
    let mut n: DirectorField = setup.director.clone();
    let mut rows = vec![vec![n.t, dirichlet_energy(&n), n.norm_defect()]];
    let mut step = 0;
    while cfg.t_final - n.t > 1e-12 {
        if cfg.snapshot_stride > 0 && step % cfg.snapshot_stride == 0 {
            write_director(dir.join(format!("director_{step}.doqs")), &n)?;
        }
        n = hmhf_step(&n, dt_max.min(cfg.t_final - n.t), lambda)?;
        step += 1;
        rows.push(vec![n.t, dirichlet_energy(&n), n.norm_defect()]);
    }
    write_table(dir.join("hmhf.csv"), &["t", "dirichlet_energy", "norm_defect"], &rows)?;
    println!("Lambda {lambda:.10}  steps {step}  final energy {:.10e}", rows.last().expect("non-empty")[1]);
    Ok(())
}

fn sweep(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(&cfg)?.to_path_buf();
    let setup = SweepSetup::new(&cfg)?;
    let stride = cfg.snapshot_stride;
    let rows: Vec<_> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            setup.run_row(eps, |step, f| {
                if stride > 0 && step % stride == 0 {
                    write_density(dir.join(format!("snap_{}_{step}.doqs", eps_tag(eps))), f)?;
                }
                Ok(())
            })
        })
        .collect();
    let report = ConvergenceReport {
        coefficients: setup.coefficients,
        s2: setup.model.reference.s2,
        sample_times: setup.sample_times.clone(),
        rows,
    };
    for row in &report.rows {
        if row.status.is_ok() {
            write_energy_csv(dir.join(format!("energy_{}.csv", eps_tag(row.eps))), &row.energy)?;
        }
    }
    report.write_csv(dir.join("sweep.csv"))?;
    for row in &report.rows {
        println!("eps {:<8} sup error {:.6e}  final error {:.6e}  {}", row.eps, row.sup_error, row.final_error, row.status.label());
    }
    if !report.all_ok() {
        return Err(Error::Numerical("at least one sweep row failed".into()));
    }
    Ok(())
}

fn coefficients(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = out_dir(&cfg)?;
    let params = EquilibriumParams::new(cfg.alpha)?;
    let spec = KernelSpec::gaussian(cfg.a, cfg.d)?;
    let c = lambda_coefficient(&params, &spec)?;
    write_coefficients_csv(dir.join("coefficients.csv"), &[c])?;
    println!("{}", onsager_core::io::COEFFICIENT_HEADER.join(","));
    println!("{}", onsager_core::io::coefficient_record(&c).join(","));
    Ok(())
}

struct Check {
    name: &'static str,
    value: f64,
    tol: f64,
}

fn selftest() -> Result<()> {
    let mut checks = Vec::new();

    // R·R = Δ on a smooth field
    let grid = build_grid(8)?;
    let f = SphereField::from_fn(Arc::clone(&grid), |m| (0.4 * m[0] - 0.7 * m[1] * m[2] + 0.2 * m[2]).exp());
    let f = SphereField::from_coeffs(Arc::clone(&grid), &f.coeffs());
    let rr = div_rot(&rot_grad(&f));
    checks.push(Check { name: "R.R equals the Laplace-Beltrami operator", value: rr.max_abs_diff(&laplace_beltrami(&f)), tol: 1e-10 });

    // self-consistency of the nematic root
    let p = EquilibriumParams::new(8.0)?;
    checks.push(Check { name: "eta = alpha s2(eta)", value: (p.alpha * p.s2 - p.eta).abs(), tol: 1e-10 });

    // homogeneous resolved equilibrium is a fixed point of the kinetic step
    let torus = TorusGrid::new(1, 20.0, 4)?;
    let model = KineticModel::new(torus, 8, KernelSpec::gaussian(1.0, 1)?, p)?;
    let director = DirectorField::constant(torus, &[0.0, 0.0, 1.0])?;
    let f0 = well_prepared_init(&director, &model, 0.1)?;
    let step = model.kinetic_step(&f0, model.stable_dt(&f0))?;
    let drift = step.field.values.iter().zip(&f0.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(Check { name: "equilibrium is a fixed point of the kinetic step", value: drift, tol: 1e-10 });
    checks.push(Check { name: "mass is conserved", value: step.field.mass_defect(), tol: 1e-12 });

    // mobility: one-dimensional route against the matrix oracle
    let gamma = gamma_constant(&p)?;
    let ops = assemble_linearized(&p, &[0.0, 0.0, 1.0], 12)?;
    let gm = ops.bilinear(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0])?;
    checks.push(Check { name: "gamma: ODE route matches the matrix oracle", value: (gamma - gm).abs() / gamma, tol: 1e-4 });

    // rotations span the kernel of the linearized free energy
    let spectrum = ops.h_spectrum()?;
    checks.push(Check { name: "kernel of H has dimension 2", value: (spectrum.kernel_dim as f64 - 2.0).abs(), tol: 0.0 });

    // geodesic circle is a harmonic map
    let ring = TorusGrid::new(1, 20.0, 64)?;
    let n = DirectorField::from_fn(ring, |x| {
        let th = 2.0 * PI * x[0] / 20.0;
        [th.cos(), th.sin(), 0.0]
    })?;
    let dt = 1e-3;
    let next = hmhf_step(&n, dt, 1.0)?;
    let change = next.values.iter().zip(&n.values).map(|(a, b)| (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    checks.push(Check { name: "geodesic circle is stationary under the heat flow", value: change / dt, tol: 1e-8 });

    // Q of well-prepared data matches the target
    let q = f0.q_field();
    let target = QTensorField { grid: torus, values: director.q_field(model.reference.s2) };
    checks.push(Check { name: "Q of well-prepared data", value: q.sub(&target).l2_norm(), tol: 1e-10 });

    let mut failed = 0;
    for c in &checks {
        let ok = c.value <= c.tol;
        failed += usize::from(!ok);
        println!("{} {} ({:.3e} <= {:.1e})", if ok { "PASS" } else { "FAIL" }, c.name, c.value, c.tol);
    }
    if failed > 0 {
        return Err(Error::Consistency(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}
