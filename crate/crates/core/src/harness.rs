//! Experiment orchestration: well-prepared data, kinetic runs sampled on a
//! fixed clock, and the ε-sweep against the limit flow.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::kernel::{KernelSpec, QTensorField, TorusGrid};
use crate::kinetic::{DensityField, EnergyReport, KineticModel};
use crate::limit::{hmhf_stable_dt, hmhf_step, lambda_coefficient, DirectorField, LimitCoefficients};
use crate::maier_saupe::EquilibriumParams;
use crate::tensor::{mat_vec, rotation};

/// `n(x) = rotation about e₁ by A sin(2πx₁/X)` applied to `e₃`.
pub fn rotated_director(torus: TorusGrid, amplitude: f64) -> Result<DirectorField> {
    DirectorField::from_fn(torus, |x| {
        let th = amplitude * (2.0 * PI * x[0] / torus.length).sin();
        mat_vec(&rotation(&[1.0, 0.0, 0.0], th), &[0.0, 0.0, 1.0])
    })
}

/// Local equilibrium `f(x, ·) = h_{n(x)}`, using the band-limited
/// equilibrium of the solver so that uniform data is an exact fixed point.
pub fn well_prepared_init(n_in: &DirectorField, model: &KineticModel, eps: f64) -> Result<DensityField> {
    if n_in.torus != model.torus {
        return Err(Error::Input("director and model live on different tori".into()));
    }
    if n_in.norm_defect() > 1e-12 {
        return Err(Error::Input(format!("director is not unit length (defect {:e})", n_in.norm_defect())));
    }
    let values = n_in.values.iter().flat_map(|nu| model.reference.density_values(&model.sphere, nu)).collect();
    DensityField::new(model.torus, model.sphere.clone(), values, 0.0, eps)
}

/// Outcome of a kinetic run.
#[derive(Clone, Debug)]
pub struct KineticRun {
    /// Report of every visited state; cumulative dissipation by the
    /// trapezoid rule.
    pub energy: Vec<EnergyReport>,
    /// `Q[f]` at each requested sample time.
    pub samples: Vec<(f64, QTensorField)>,
    pub final_field: DensityField,
    pub steps: usize,
    pub halvings: usize,
}

/// Advances `init` to the last of `sample_times` (ascending, first equal
/// to the initial time), trimming steps so every sample time is hit.
/// `observer` sees every visited state with its step index.
pub fn run_kinetic<F>(model: &KineticModel, init: DensityField, sample_times: &[f64], mut observer: F) -> Result<KineticRun>
where
    F: FnMut(usize, &DensityField) -> Result<()>,
{
    if sample_times.is_empty() || sample_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("sample times must be non-empty and increasing".into()));
    }
    let t_end = *sample_times.last().expect("non-empty");
    let tol = 1e-12 * t_end.abs().max(1.0);
    if (init.t - sample_times[0]).abs() > tol {
        return Err(Error::Input("first sample time must equal the initial time".into()));
    }
    let mut f = init;
    let mut energy: Vec<EnergyReport> = Vec::new();
    let mut samples = Vec::with_capacity(sample_times.len());
    let mut next = 0;
    let mut steps = 0;
    let mut halvings = 0;
    let mut cumulative = 0.0;
    loop {
        while next < sample_times.len() && (f.t - sample_times[next]).abs() <= tol {
            f.t = sample_times[next];
            samples.push((f.t, f.q_field()));
            next += 1;
        }
        observer(steps, &f)?;
        if next == sample_times.len() {
            break;
        }
        let dt = model.stable_dt(&f).min(sample_times[next] - f.t);
        let step = model.kinetic_step(&f, dt)?;
        if let Some(prev) = energy.last() {
            cumulative += 0.5 * (prev.dissipation + step.report.dissipation) * (step.report.t - prev.t);
        }
        energy.push(EnergyReport { cumulative_dissipation: cumulative, ..step.report });
        halvings += step.halvings;
        steps += 1;
        f = step.field;
    }
    let last = model.energy_report(&f)?;
    if let Some(prev) = energy.last() {
        cumulative += 0.5 * (prev.dissipation + last.dissipation) * (last.t - prev.t);
    }
    energy.push(EnergyReport { cumulative_dissipation: cumulative, ..last });
    Ok(KineticRun { energy, samples, final_field: f, steps, halvings })
}

/// Harmonic map heat flow from `n_in`, stored at `sample_times`.
pub fn limit_trajectory(n_in: &DirectorField, lambda: f64, sample_times: &[f64]) -> Result<Vec<DirectorField>> {
    let dt_max = 0.5 * hmhf_stable_dt(&n_in.torus, lambda);
    let t_end = sample_times.last().copied().unwrap_or(n_in.t);
    let tol = 1e-12 * t_end.abs().max(1.0);
    let mut n = n_in.clone();
    let mut out = Vec::with_capacity(sample_times.len());
    for &ts in sample_times {
        while ts - n.t > tol {
            n = hmhf_step(&n, dt_max.min(ts - n.t), lambda)?;
        }
        n.t = ts;
        out.push(n.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

impl RowStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RowStatus::Ok)
    }

    pub fn label(&self) -> String {
        match self {
            RowStatus::Ok => "ok".into(),
            RowStatus::Failed(msg) => format!("failed: {msg}"),
        }
    }
}

/// Per-ε result of a sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub eps: f64,
    /// `max_k ‖Q[f_ε](t_k) − S₂(n⊗n − I/3)(t_k)‖_{L²}`.
    pub sup_error: f64,
    pub final_error: f64,
    pub initial_modulated: f64,
    pub max_modulated: f64,
    pub total_dissipation: f64,
    pub steps: usize,
    pub status: RowStatus,
    pub energy: Vec<EnergyReport>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub coefficients: LimitCoefficients,
    /// Order parameter of the band-limited equilibrium used in the error.
    pub s2: f64,
    pub sample_times: Vec<f64>,
    /// Ordered as the configured ε list.
    pub rows: Vec<SweepRow>,
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] < w[0])
}

impl ConvergenceReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.status.is_ok())
    }

    pub fn sup_errors_decreasing(&self) -> bool {
        strictly_decreasing(&self.rows.iter().map(|r| r.sup_error).collect::<Vec<_>>())
    }

    pub fn final_errors_decreasing(&self) -> bool {
        strictly_decreasing(&self.rows.iter().map(|r| r.final_error).collect::<Vec<_>>())
    }

    /// `max/min` of `E_ε[f_in]/ε` over the sweep.
    pub fn initial_energy_spread(&self) -> f64 {
        let c: Vec<f64> = self.rows.iter().map(|r| r.initial_modulated / r.eps).collect();
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    /// `log₂`-type rates `ln(e_i/e_{i+1}) / ln(ε_i/ε_{i+1})` of the sup error.
    pub fn observed_rates(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| (w[0].sup_error / w[1].sup_error).ln() / (w[0].eps / w[1].eps).ln())
            .collect()
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(SWEEP_HEADER)?;
        for r in &self.rows {
            w.write_record([
                fmt_f64(r.eps),
                fmt_f64(r.sup_error),
                fmt_f64(r.final_error),
                fmt_f64(r.initial_modulated),
                fmt_f64(r.max_modulated),
                fmt_f64(r.total_dissipation),
                r.steps.to_string(),
                r.status.label(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const SWEEP_HEADER: [&str; 8] =
    ["eps", "sup_error", "final_error", "initial_modulated", "max_modulated", "total_dissipation", "steps", "status"];

/// Everything shared by the rows of a sweep.
pub struct SweepSetup {
    pub config: ExperimentConfig,
    pub model: KineticModel,
    pub coefficients: LimitCoefficients,
    pub director: DirectorField,
    pub sample_times: Vec<f64>,
    /// `S₂(n⊗n − I/3)` along the limit flow at the sample times.
    pub targets: Vec<QTensorField>,
}

impl SweepSetup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let torus = TorusGrid::new(config.d, config.length, config.n)?;
        let spec = KernelSpec::gaussian(config.a, config.d)?;
        let params = EquilibriumParams::new(config.alpha)?;
        let coefficients = lambda_coefficient(&params, &spec)?;
        let mut model = KineticModel::new(torus, config.lmax, spec, params)?;
        model.cfl = config.cfl;
        let director = rotated_director(torus, config.amplitude)?;
        let sample_times = config.sample_times();
        let s2 = model.reference.s2;
        let targets = limit_trajectory(&director, coefficients.lambda, &sample_times)?
            .iter()
            .map(|n| QTensorField { grid: torus, values: n.q_field(s2) })
            .collect();
        Ok(SweepSetup { config: config.clone(), model, coefficients, director, sample_times, targets })
    }

    /// One row; numerical failures are recorded in the status.
    pub fn run_row<F>(&self, eps: f64, observer: F) -> SweepRow
    where
        F: FnMut(usize, &DensityField) -> Result<()>,
    {
        let run = well_prepared_init(&self.director, &self.model, eps)
            .and_then(|f| run_kinetic(&self.model, f, &self.sample_times, observer));
        match run {
            Ok(run) => {
                let errors: Vec<f64> =
                    run.samples.iter().zip(&self.targets).map(|((_, q), target)| q.sub(target).l2_norm()).collect();
                SweepRow {
                    eps,
                    sup_error: errors.iter().copied().fold(0.0, f64::max),
                    final_error: *errors.last().expect("at least one sample"),
                    initial_modulated: run.energy[0].modulated_total,
                    max_modulated: run.energy.iter().map(|r| r.modulated_total).fold(f64::NEG_INFINITY, f64::max),
                    total_dissipation: run.energy.last().expect("non-empty").cumulative_dissipation,
                    steps: run.steps,
                    status: RowStatus::Ok,
                    energy: run.energy,
                }
            }
            Err(e) => SweepRow {
                eps,
                sup_error: f64::NAN,
                final_error: f64::NAN,
                initial_modulated: f64::NAN,
                max_modulated: f64::NAN,
                total_dissipation: f64::NAN,
                steps: 0,
                status: RowStatus::Failed(e.to_string()),
                energy: Vec::new(),
            },
        }
    }
}

/// Runs every ε of `config` (in parallel) against the limit flow.
pub fn epsilon_sweep(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    let setup = SweepSetup::new(config)?;
    let rows = setup.config.epsilons.par_iter().map(|&eps| setup.run_row(eps, |_, _| Ok(()))).collect();
    Ok(ConvergenceReport {
        coefficients: setup.coefficients,
        s2: setup.model.reference.s2,
        sample_times: setup.sample_times.clone(),
        rows,
    })
}
