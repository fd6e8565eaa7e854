//! Acceptance suite: one PASS/FAIL line per criterion, with runtime.
//! Runs as a plain binary (`harness = false`) and exits non-zero if any
//! criterion fails.

#![allow(clippy::needless_range_loop)]

mod common;

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use onsager_core::config::ExperimentConfig;
use onsager_core::harness::epsilon_sweep;
use onsager_core::kernel::*;
use onsager_core::kinetic::{DensityField, KineticModel};
use onsager_core::limit::*;
use onsager_core::maier_saupe::*;
use onsager_core::sphere::*;
use onsager_core::tensor::{cross, dot, mat_vec, rotation, QTensor, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// 1. rotational-gradient identities at lmax 8

fn operator_identities() -> Outcome {
    const L: usize = 8;
    const TOL: f64 = 1e-10;
    let g = ok(build_grid(L))?;
    // entire functions of m are integrated on a fine grid
    let fine = ok(build_grid(40))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 8];
    let mut bump = |k: usize, v: f64| worst[k] = worst[k].max(v);

    let p = ok(EquilibriumParams::new(8.0))?;
    let kspec = ok(KernelSpec::gaussian(1.0, 1))?;
    let torus = ok(TorusGrid::new(1, 6.0, 8))?;

    for _ in 0..20 {
        let f = random_field(&mut rng, &g);
        let h = random_field(&mut rng, &g);
        let rf = rot_grad(&f);
        let rh = rot_grad(&h);
        // ∫ R f h = −∫ f R h
        for i in 0..3 {
            bump(0, (integrate(&rf[i].mul(&h)) + integrate(&f.mul(&rh[i]))).abs());
        }
        // R_i m_j = −ε_ijk m_k and R·R = Δ
        for j in 0..3 {
            let r = rot_grad(&SphereField::from_fn(Arc::clone(&g), |m| m[j]));
            let mut e = [0.0; 3];
            e[j] = 1.0;
            for (k, m) in g.nodes().iter().enumerate() {
                let expect = cross(m, &e);
                for i in 0..3 {
                    bump(1, (r[i].values()[k] - expect[i]).abs());
                }
            }
        }
        bump(1, div_rot(&rf).max_abs_diff(&laplace_beltrami(&f)));
        // R(m·u) = m ∧ u and R·(m ∧ u) = −2 m·u
        let u = random_unit(&mut rng);
        let ru = rot_grad(&SphereField::from_fn(Arc::clone(&g), |m| dot(m, &u)));
        let mu = [0, 1, 2].map(|i| SphereField::from_fn(Arc::clone(&g), move |m| cross(m, &u)[i]));
        for (k, m) in g.nodes().iter().enumerate() {
            let c = cross(m, &u);
            for i in 0..3 {
                bump(2, (ru[i].values()[k] - c[i]).abs());
            }
        }
        bump(2, div_rot(&mu).max_abs_diff(&SphereField::from_fn(Arc::clone(&g), |m| -2.0 * dot(m, &u))));
        // R(B : m⊗m) = 2 m ∧ Bm
        let b = random_symmetric(&mut rng);
        let rb = rot_grad(&SphereField::from_fn(Arc::clone(&g), |m| b.quadratic(m)));
        for (k, m) in g.nodes().iter().enumerate() {
            let c = cross(m, &b.apply(m));
            for i in 0..3 {
                bump(3, (rb[i].values()[k] - 2.0 * c[i]).abs());
            }
        }
        // Δ(m⊗m) = −6(m⊗m − I/3)
        for i in 0..3 {
            for j in i..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                let lap = laplace_beltrami(&SphereField::from_fn(Arc::clone(&g), |m| m[i] * m[j]));
                let expect = SphereField::from_fn(Arc::clone(&g), |m| -6.0 * (m[i] * m[j] - delta / 3.0));
                bump(4, lap.max_abs_diff(&expect));
            }
        }
        // R U and Δ U for U = −α (m⊗m) : (Q[f] ∗ k_ε) on a torus of random densities
        let eps = rng.gen_range(0.01..0.5);
        let q = QTensorField::new(
            torus,
            (0..torus.num_sites())
                .map(|_| {
                    let v = random_density(&mut rng, &g, L, 0.9);
                    let mass = g.integrate_values(&v);
                    g.second_moment_values(&v) * (1.0 / mass)
                })
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let smoothed = q.convolve_keps(&kspec, eps);
        for qs in &smoothed.values {
            let pot = SphereField::from_fn(Arc::clone(&g), |m| -p.alpha * qs.quadratic(m));
            let r = rot_grad(&pot);
            for (k, m) in g.nodes().iter().enumerate() {
                let c = cross(m, &qs.apply(m));
                for i in 0..3 {
                    bump(5, (r[i].values()[k] + 2.0 * p.alpha * c[i]).abs());
                }
            }
            let lap = laplace_beltrami(&pot);
            let expect = SphereField::from_fn(Arc::clone(&g), |m| 6.0 * p.alpha * qs.quadratic(m));
            bump(5, lap.max_abs_diff(&expect));
        }
        // R f₀ = f₀ R log f₀ = 2η (m ∧ n)(m·n) f₀ for f₀ = e^{η(m·n)²}/Z;
        // f₀ is not band-limited, so the identity is tested against the
        // random degree-8 field f through ∫ φ R f₀ = −∫ f₀ R φ.
        let n = random_unit(&mut rng);
        let f0 = |m: &Vec3| (p.eta * dot(m, &n).powi(2)).exp() / p.z;
        let log_f0 = SphereField::from_fn(Arc::clone(&g), |m| p.eta * dot(m, &n).powi(2) - p.z.ln());
        let rl = rot_grad(&log_f0);
        for (k, m) in g.nodes().iter().enumerate() {
            let s = 2.0 * p.eta * dot(m, &n) * f0(m);
            let c = cross(m, &n);
            for i in 0..3 {
                bump(6, (f0(m) * rl[i].values()[k] - s * c[i]).abs());
            }
        }
        let mut padded = vec![0.0; fine.num_coeffs()];
        padded[..g.num_coeffs()].copy_from_slice(&f.coeffs());
        let phi = SphereField::from_coeffs(Arc::clone(&fine), &padded);
        let rphi = rot_grad(&phi);
        let w = SphereField::from_fn(Arc::clone(&fine), f0);
        for i in 0..3 {
            let weak = -integrate(&w.mul(&rphi[i]));
            let strong = integrate(&SphereField::from_fn(Arc::clone(&fine), |m| {
                2.0 * p.eta * dot(m, &n) * cross(m, &n)[i] * f0(m)
            })
            .mul(&phi));
            bump(7, (weak - strong).abs());
        }
    }
    let names = ["parts", "R_i m_j & R.R", "R(m.u)", "R(B:mm)", "Lap(mm)", "RU & LapU", "f0 R log f0", "R f0 (weak)"];
    let summary = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    let bad: Vec<_> = names.iter().zip(worst).filter(|(_, w)| w.is_nan() || *w > TOL).map(|(n, _)| *n).collect();
    ensure(bad.is_empty(), || format!("{bad:?} exceed {TOL:e}: {summary}"))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// 2. equilibria

fn equilibrium_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let grid = ok(build_grid(48))?;
    let mut worst_root = 0.0f64;
    let mut worst_q = 0.0f64;
    let mut margin = f64::INFINITY;
    for alpha in [8.0, 10.0, 15.0] {
        let roots = ok(solve_eta(alpha))?;
        ensure(roots.len() == 3, || format!("alpha {alpha}: roots {roots:?}"))?;
        for r in &roots {
            worst_root = worst_root.max((alpha * s2(*r) - r).abs());
        }
        let p = ok(EquilibriumParams::new(alpha))?;
        for _ in 0..5 {
            let nu = random_unit(&mut rng);
            let h = ok(equilibrium_density(&nu, p.eta, &grid))?;
            worst_q = worst_q.max((second_moment(&h) - QTensor::uniaxial(p.s2, &nu)).norm());
        }
        // energy of h against 100 competitors: perturbations of h and unrelated densities
        let h = ok(equilibrium_density(&[0.0, 0.0, 1.0], p.eta, &grid))?;
        let e_min = ok(bulk_energy(&h, alpha))?;
        for k in 0..100 {
            let c: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let poly = move |m: &Vec3| {
                c[0] * m[0] + c[1] * m[1] + c[2] * m[2] + c[3] * m[0] * m[1] + c[4] * m[1] * m[2] + c[5] * m[0] * m[2]
                    + c[6] * (m[0] * m[0] - m[1] * m[1])
                    + c[7] * m[0] * m[1] * m[2]
                    + c[8] * m[2] * m[2] * m[2]
            };
            let g = if k % 2 == 0 {
                let scale = rng.gen_range(0.02..0.6);
                h.zip(&SphereField::from_fn(Arc::clone(&grid), move |m| (scale * poly(m)).exp()), |a, b| a * b)
            } else {
                let scale = rng.gen_range(0.5..6.0);
                SphereField::from_fn(Arc::clone(&grid), move |m| (scale * poly(m)).exp())
            };
            let mass = integrate(&g);
            let e = ok(bulk_energy(&g.map(|v| v / mass), alpha))?;
            margin = margin.min(e - e_min);
        }
    }
    let a_star = alpha_star();
    ensure(worst_root <= 1e-10, || format!("root residual {worst_root:e}"))?;
    ensure(a_star < 7.5, || format!("alpha* = {a_star}"))?;
    ensure(worst_q <= 1e-8, || format!("Q[h] mismatch {worst_q:e}"))?;
    ensure(margin >= -1e-12, || format!("a competitor beats h by {:e}", -margin))?;
    Ok(format!("root residual {worst_root:.1e}, alpha* {a_star:.6}, Q mismatch {worst_q:.1e}, min energy margin {margin:.1e}"))
}

// ---------------------------------------------------------------------------
// 3. Fourier multipliers

fn multiplier_suite() -> Outcome {
    let a = 1.0;
    let spec = ok(KernelSpec::gaussian(a, 2))?;
    let grid = ok(TorusGrid::new(2, 20.0, 64))?;
    let epsilons = [1e-1, 1e-2, 1e-3];
    // L_ε = Σ_k T^k T^k, mode by mode
    let mut worst_sq = 0.0f64;
    for eps in epsilons {
        let table = l_eps_table(&grid, &spec, eps);
        let se = eps.sqrt();
        for (s, l) in table.iter().enumerate() {
            let xi: Vec<f64> = grid.frequency(s).iter().map(|v| v * se).collect();
            let tt: f64 = h_multiplier(&spec, &xi).iter().map(|h| h * h / eps).sum();
            worst_sq = worst_sq.max((tt - l).abs() / l.abs().max(1.0));
        }
    }
    ensure(worst_sq <= 1e-12, || format!("L vs T·T {worst_sq:e}"))?;
    // c₀|ξ|²k̂² ≤ 1 − k̂ on the lattice and its √ε-rescalings
    let c0 = 0.99 * PI * PI / a;
    let mut slack = f64::INFINITY;
    for scale in [1.0, 1e-1, 1e-2, 1e-3].map(f64::sqrt) {
        for s in 0..grid.num_sites() {
            let xi: Vec<f64> = grid.frequency(s).iter().map(|v| v * scale).collect();
            let r2: f64 = xi.iter().map(|v| v * v).sum();
            let k = khat(&spec, &xi);
            slack = slack.min((1.0 - k) - c0 * r2 * k * k);
        }
    }
    ensure(slack >= 0.0, || format!("lattice bound violated by {:e}", -slack))?;
    // T_ε u → −i √(μ/2d) ∇u, monotonically in ε for smooth u
    let coef = (spec.mu / (2.0 * spec.d as f64)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut finals = Vec::new();
    for field in 0..5 {
        let modes: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| (rng.gen_range(-3..=3) as f64, rng.gen_range(-3..=3) as f64, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)))
            .collect();
        let u: Vec<f64> = (0..grid.num_sites())
            .map(|s| {
                let x = grid.position(s);
                modes.iter().map(|(k1, k2, c, ph)| c * (2.0 * PI * (k1 * x[0] + k2 * x[1]) / grid.length + ph).cos()).sum()
            })
            .collect();
        let grad = grid.gradient(&u);
        let errs: Vec<f64> = epsilons
            .iter()
            .map(|&eps| {
                let t = apply_t_eps(&grid, &spec, &u, eps);
                let mut sq = 0.0;
                for k in 0..grid.d {
                    for s in 0..grid.num_sites() {
                        let r = t[k][s] + num_complex::Complex64::new(0.0, coef * grad[k][s]);
                        sq += r.norm_sqr();
                    }
                }
                (sq * grid.cell_volume()).sqrt()
            })
            .collect();
        ensure(errs.windows(2).all(|w| w[1] < w[0]), || format!("field {field}: errors {errs:?} not decreasing"))?;
        finals.push(errs[2] / errs[0]);
    }
    let worst_ratio = finals.iter().copied().fold(0.0, f64::max);
    Ok(format!("L=T·T {worst_sq:.1e}, bound slack {slack:.2e}, T→grad error ratio eps 1e-3/1e-1 <= {worst_ratio:.1e}"))
}

// ---------------------------------------------------------------------------
// 4. discrete energy law

fn dissipation_suite() -> Outcome {
    let length = 20.0;
    let torus = ok(TorusGrid::new(2, length, 16))?;
    let spec = ok(KernelSpec::gaussian(1.0, 2))?;
    let model = ok(KineticModel::new(torus, 8, spec, ok(EquilibriumParams::new(8.0))?))?;
    let eps = 0.05;
    let iso = 0.25 / PI;
    let values: Vec<f64> = (0..torus.num_sites())
        .flat_map(|s| {
            let x = torus.position(s);
            let th = 0.6 * (2.0 * PI * x[0] / length).sin() + 0.4 * (2.0 * PI * x[1] / length).cos();
            let nu = mat_vec(&rotation(&[1.0, 0.0, 0.0], th), &[0.0, 0.0, 1.0]);
            let w = 0.3 + 0.2 * (2.0 * PI * x[1] / length).sin();
            model.reference.density_values(&model.sphere, &nu).into_iter().map(move |h| (1.0 - w) * h + w * iso)
        })
        .collect();
    let mut f = ok(DensityField::new(torus, Arc::clone(&model.sphere), values, 0.0, eps))?;
    let e0 = ok(model.energy_report(&f))?;
    let scale = e0.modulated_total / eps;
    ensure(scale > 0.0, || "initial modulated energy is not positive".into())?;
    let mut prev = e0;
    let mut cumulative = 0.0;
    let mut drift = 0.0f64;
    let mut min_diss = f64::INFINITY;
    for _ in 0..500 {
        let step = ok(model.kinetic_step(&f, model.stable_dt(&f)))?;
        f = step.field;
        let now = ok(model.energy_report(&f))?;
        min_diss = min_diss.min(now.dissipation);
        cumulative += 0.5 * (prev.dissipation + now.dissipation) * (now.t - prev.t);
        drift = drift.max((now.modulated_total / eps + cumulative - scale).abs());
        prev = now;
    }
    min_diss = min_diss.min(e0.dissipation);
    ensure(min_diss >= 0.0, || format!("negative dissipation {min_diss:e}"))?;
    let rel = drift / scale;
    ensure(rel <= 0.02, || format!("energy-law drift {rel:.3e} of E(0)/eps"))?;
    Ok(format!("t_end {:.4}, E(0)/eps {scale:.4e}, worst drift {rel:.2e} of E(0)/eps, min dissipation {min_diss:.2e}", f.t))
}

// ---------------------------------------------------------------------------
// 5. moment equation and closure

fn moment_suite() -> Outcome {
    let torus = ok(TorusGrid::new(1, 4.0, 8))?;
    let spec = ok(KernelSpec::gaussian(1.0, 1))?;
    let params = ok(EquilibriumParams::new(8.0))?;
    let model = ok(KineticModel::new(torus, 8, spec, params))?;
    let n = model.sphere.num_nodes();
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let eps = rng.gen_range(0.02..0.2);
        let values: Vec<f64> = (0..torus.num_sites())
            .flat_map(|_| {
                let v = random_density(&mut rng, &model.sphere, 4, 0.7);
                let mass = model.sphere.integrate_values(&v);
                v.into_iter().map(move |x| x / mass)
            })
            .collect();
        let f = ok(DensityField::new(torus, Arc::clone(&model.sphere), values, 0.0, eps))?;
        let rhs = ok(model.rhs(&f))?;
        let closed = model.q_moment_rhs(&f);
        for s in 0..torus.num_sites() {
            let dq = model.sphere.second_moment_values(&rhs[s * n..(s + 1) * n]) * eps;
            worst = worst.max((dq - closed.values[s]).norm());
        }
    }
    ensure(worst <= 1e-8, || format!("moment equation mismatch {worst:e}"))?;
    // closed flow leaves the uniaxial equilibrium in place
    let q0 = QTensor::uniaxial(params.s2, &[0.0, 0.6, 0.8]);
    let eq = QTensorField::constant(torus, q0);
    let dt = 0.01;
    let next = ok(model.q_closure_step(&eq, dt, 0.1))?;
    let moved = next.values.iter().map(|q| (*q - q0).norm()).fold(0.0, f64::max);
    ensure(moved <= 1e-8, || format!("closure moves the equilibrium by {moved:e}"))?;
    Ok(format!("moment mismatch {worst:.1e}, closure drift {moved:.1e} per step of {dt}"))
}

// ---------------------------------------------------------------------------
// 6. limit coefficients

fn coefficient_suite() -> Outcome {
    let p8 = ok(EquilibriumParams::new(8.0))?;
    let gamma = ok(gamma_constant(&p8))?;
    let ops = ok(assemble_linearized(&p8, &[0.0, 0.0, 1.0], 16))?;
    let oracle = ok(ops.bilinear(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]))?;
    let rel = (gamma - oracle).abs() / gamma;
    ensure(rel <= 1e-4, || format!("gamma {gamma} vs matrix {oracle}"))?;
    let mut listed = Vec::new();
    for alpha in [8.0, 10.0, 15.0] {
        let p = ok(EquilibriumParams::new(alpha))?;
        let c = ok(lambda_coefficient(&p, &ok(KernelSpec::gaussian(1.0, 1))?))?;
        ensure(c.gamma > 0.0 && c.lambda > 0.0, || format!("alpha {alpha}: gamma {} Lambda {}", c.gamma, c.lambda))?;
        listed.push(format!("{alpha}: {:.6}/{:.6}", c.gamma, c.lambda));
    }
    let iso = EquilibriumParams::from_eta(0.0, 0.0);
    let g0 = ok(solve_g0(&iso))?;
    let res = (0..=400).map(|k| PI * k as f64 / 400.0).map(|t| g0.g(t).abs().max(g0.residual(t).abs())).fold(0.0, f64::max);
    ensure(res < 1e-10, || format!("eta = 0 profile residual {res:e}"))?;
    Ok(format!("gamma(8) {gamma:.10} vs matrix {oracle:.10} (rel {rel:.1e}); gamma/Lambda {}; eta=0 residual {res:.1e}", listed.join(", ")))
}

// ---------------------------------------------------------------------------
// 7. the epsilon sweep

fn convergence_sweep() -> Outcome {
    let cfg = ExperimentConfig::reference();
    ensure(cfg.d == 1 && cfg.n == 64 && cfg.lmax == 8 && cfg.epsilons == [0.1, 0.05, 0.025], || {
        "reference configuration changed".into()
    })?;
    let report = ok(epsilon_sweep(&cfg))?;
    ensure(report.all_ok(), || {
        report.rows.iter().map(|r| format!("{}: {}", r.eps, r.status.label())).collect::<Vec<_>>().join("; ")
    })?;
    let errs: Vec<String> = report.rows.iter().map(|r| format!("{:.4e}", r.sup_error)).collect();
    ensure(report.sup_errors_decreasing(), || format!("sup errors {errs:?} not decreasing"))?;
    let spread = report.initial_energy_spread();
    ensure(spread < 2.0, || format!("E(0)/eps varies by {spread:.3}x"))?;
    let rates: Vec<String> = report.observed_rates().iter().map(|r| format!("{r:.2}")).collect();
    Ok(format!("sup errors {} (observed rates {}), E(0)/eps spread {spread:.3}x", errs.join(" > "), rates.join(", ")))
}

// ---------------------------------------------------------------------------
// 8. kernel of the linearized free energy

fn kernel_suite() -> Outcome {
    let p = ok(EquilibriumParams::new(8.0))?;
    let n = [0.48, -0.6, 0.64];
    let s12 = ok(ok(assemble_linearized(&p, &n, 12))?.h_spectrum())?;
    let s16 = ok(ok(assemble_linearized(&p, &n, 16))?.h_spectrum())?;
    ensure(s12.kernel_dim == 2, || format!("kernel dimension {} at L = 12", s12.kernel_dim))?;
    ensure(s12.kernel_angle < 1e-6, || format!("subspace angle {:e}", s12.kernel_angle))?;
    ensure(s12.gap > 0.0 && s16.gap > 0.0, || format!("gaps {} / {}", s12.gap, s16.gap))?;
    ensure(s16.kernel_dim == 2, || format!("kernel dimension {} at L = 16", s16.kernel_dim))?;
    let shift = (s12.gap - s16.gap).abs() / s12.gap;
    ensure(shift < 1e-3, || format!("gap moves by {shift:e} from L = 12 to 16"))?;
    Ok(format!("dim 2, angle {:.1e}, gap {:.8} (L=12) vs {:.8} (L=16)", s12.kernel_angle, s12.gap, s16.gap))
}

// ---------------------------------------------------------------------------
// 9. harmonic map heat flow

fn hmhf_suite() -> Outcome {
    let length = 10.0;
    let torus = ok(TorusGrid::new(1, length, 64))?;
    let init = ok(DirectorField::from_fn(torus, |x| {
        mat_vec(&rotation(&[1.0, 0.0, 0.0], 0.8 * (2.0 * PI * x[0] / length).sin()), &[0.0, 0.0, 1.0])
    }))?;
    let lambda = 1.0;
    let t_end = 0.5;
    let run = |dt: f64| -> Result<Vec<DirectorField>, String> {
        let steps = (t_end / dt).round() as usize;
        let mut traj = vec![init.clone()];
        for _ in 0..steps {
            traj.push(ok(hmhf_step(traj.last().expect("non-empty"), dt, lambda))?);
        }
        Ok(traj)
    };
    let dt = 0.5 * hmhf_stable_dt(&torus, lambda);
    let dt = t_end / (t_end / dt).ceil();
    let coarse = run(dt)?;
    let fine = run(dt / 2.0)?;
    let defect = coarse.iter().chain(&fine).map(DirectorField::norm_defect).fold(0.0, f64::max);
    ensure(defect < 1e-14, || format!("norm defect {defect:e}"))?;
    let energies: Vec<f64> = fine.iter().map(dirichlet_energy).collect();
    ensure(energies.windows(2).all(|w| w[1] <= w[0]), || "Dirichlet energy increases".into())?;
    let theta = |x: &[f64]| [(2.0 * PI * x[0] / length).sin(), 0.3, 0.0];
    let phi = |t: f64| 1.0 - t;
    let rc = ok(weak_residual(&coarse, theta, phi, lambda))?;
    let rf = ok(weak_residual(&fine, theta, phi, lambda))?;
    let ratio = rc.residual / rf.residual;
    ensure((ratio - 2.0).abs() <= 0.4, || format!("residual ratio {ratio:.3} ({:e} -> {:e})", rc.residual, rf.residual))?;
    Ok(format!(
        "norm defect {defect:.1e}, energy {:.5} -> {:.5}, weak residual {:.3e} -> {:.3e} (ratio {ratio:.3})",
        energies[0],
        energies.last().expect("non-empty"),
        rc.residual,
        rf.residual
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 9] = [
        ("operator identities", Duration::from_secs(5), operator_identities),
        ("equilibria", Duration::from_secs(10), equilibrium_suite),
        ("multipliers", Duration::from_secs(5), multiplier_suite),
        ("dissipation", Duration::from_secs(120), dissipation_suite),
        ("moment closure", Duration::from_secs(30), moment_suite),
        ("limit coefficients", Duration::from_secs(30), coefficient_suite),
        ("convergence sweep", Duration::from_secs(900), convergence_sweep),
        ("linearized kernel", Duration::from_secs(30), kernel_suite),
        ("harmonic map heat flow", Duration::from_secs(30), hmhf_suite),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
            Err(e) => (false, e),
        };
        failed += usize::from(!pass);
        println!(
            "{} [{id}] {name} ({:.2} s / {} s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
