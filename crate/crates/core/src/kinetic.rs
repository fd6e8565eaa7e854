//! Time integration of the Doi-Onsager equation
//! `∂t f = (1/ε) R·(Rf + f R U_ε[f])` on torus × sphere, its energy
//! accounting, and the closed second-moment flow.
//!
//! Each site carries a band-limited density stored by its values at the
//! sphere-grid nodes. The flux is written as `f R μ_h` with
//! `μ_h = P(ln f) + U_ε`, `P` the L² projection onto the band-limited
//! space; the discrete energy then obeys `dE/dt = −(1/ε)∫ f|Rμ_h|²`
//! exactly in semi-discrete form. A step treats `σΔ f` implicitly and the
//! remainder `R·(f R μ_h) − σΔ f` explicitly in a two-stage
//! predictor-corrector; `σ > 1` absorbs the stiffness that the weight `f`
//! adds to the flux. Products are formed on padded
//! grids so every projection is exact.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use once_cell::sync::Lazy;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{doubled_energy_form, doubled_energy_spectral, KernelSpec, QTensorField, TorusGrid};
use crate::maier_saupe::{bingham_grid, bingham_map_on, bingham_moments, EquilibriumParams};
use crate::sphere::{build_grid, degree_of, harmonic_index, zonal_values, SphereField, SphereGrid};
use crate::tensor::{cross, dot, QTensor, S4Tensor, Vec3};

const MAX_HALVINGS: usize = 20;

/// `R U` for `U = α(2/3 − m⊗m : A)`, i.e. `−2α m ∧ (A m)`.
#[inline]
pub fn rot_potential(alpha: f64, a: &QTensor, m: &Vec3) -> Vec3 {
    let am = a.apply(m);
    let c = cross(m, &am);
    [-2.0 * alpha * c[0], -2.0 * alpha * c[1], -2.0 * alpha * c[2]]
}

/// Orientation density on torus × sphere.
#[derive(Clone, Debug)]
pub struct DensityField {
    pub torus: TorusGrid,
    pub sphere: Arc<SphereGrid>,
    /// Site-major node values.
    pub values: Vec<f64>,
    pub t: f64,
    pub eps: f64,
}

impl DensityField {
    pub fn new(torus: TorusGrid, sphere: Arc<SphereGrid>, values: Vec<f64>, t: f64, eps: f64) -> Result<Self> {
        let expect = torus.num_sites() * sphere.num_nodes();
        if values.len() != expect {
            return Err(Error::Input(format!("density has {} values, expected {expect}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("density contains non-finite values".into()));
        }
        if !(eps > 0.0) {
            return Err(Error::Input(format!("eps must be positive, got {eps}")));
        }
        Ok(DensityField { torus, sphere, values, t, eps })
    }

    /// The same density at every site.
    pub fn homogeneous(torus: TorusGrid, site: &SphereField, eps: f64) -> Result<Self> {
        let values = site.values().repeat(torus.num_sites());
        Self::new(torus, Arc::clone(site.grid()), values, 0.0, eps)
    }

    pub fn num_sites(&self) -> usize {
        self.torus.num_sites()
    }

    pub fn site(&self, s: usize) -> &[f64] {
        let n = self.sphere.num_nodes();
        &self.values[s * n..(s + 1) * n]
    }

    pub fn site_field(&self, s: usize) -> SphereField {
        SphereField::new(Arc::clone(&self.sphere), self.site(s).to_vec()).expect("validated on construction")
    }

    pub fn mass(&self, s: usize) -> f64 {
        self.sphere.integrate_values(self.site(s))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest per-site deviation of the mass from one.
    pub fn mass_defect(&self) -> f64 {
        (0..self.num_sites()).map(|s| (self.mass(s) - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn q_field(&self) -> QTensorField {
        let values = (0..self.num_sites()).map(|s| self.sphere.second_moment_values(self.site(s))).collect();
        QTensorField { grid: self.torus, values }
    }
}

/// Energy bookkeeping of one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport {
    pub t: f64,
    pub bulk_excess: f64,
    pub doubled_term: f64,
    pub modulated_total: f64,
    pub dissipation: f64,
    pub cumulative_dissipation: f64,
}

/// Outcome of one accepted step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub field: DensityField,
    pub dt: f64,
    pub halvings: usize,
    /// Energy report of the state the step started from.
    pub report: EnergyReport,
}

/// Solver context: grids, kernel and Maier-Saupe constants.
#[derive(Clone, Debug)]
pub struct KineticModel {
    pub torus: TorusGrid,
    pub sphere: Arc<SphereGrid>,
    pub padded: Arc<SphereGrid>,
    pub diagnostics: Arc<SphereGrid>,
    pub spec: KernelSpec,
    pub params: EquilibriumParams,
    /// Steady state of the homogeneous scheme at this band limit; its bulk
    /// energy is the reference for `bulk_excess`.
    pub reference: Arc<ResolvedEquilibrium>,
    pub cfl: f64,
    /// Multiple of `Δ` treated implicitly; the excess is added back
    /// explicitly.
    pub stabilization: f64,
}

impl KineticModel {
    pub fn new(torus: TorusGrid, lmax: usize, spec: KernelSpec, params: EquilibriumParams) -> Result<Self> {
        if lmax < 4 {
            return Err(Error::Config(format!("kinetic band limit must be at least 4, got {lmax}")));
        }
        if spec.d != torus.d {
            return Err(Error::Config("kernel and torus dimensions differ".into()));
        }
        Ok(KineticModel {
            torus,
            sphere: build_grid(lmax)?,
            padded: build_grid(padded_lmax(lmax))?,
            diagnostics: build_grid(diagnostics_lmax(lmax))?,
            spec,
            params,
            reference: ResolvedEquilibrium::compute(lmax, &params)?,
            cfl: 0.5,
            stabilization: 2.0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    pub fn lmax(&self) -> usize {
        self.sphere.lmax()
    }

    fn check(&self, f: &DensityField) -> Result<()> {
        if f.torus != self.torus || f.sphere.lmax() != self.sphere.lmax() {
            return Err(Error::Input("density grids do not match the model".into()));
        }
        Ok(())
    }

    /// `Q[f] * k_ε` per site.
    pub fn smoothed_q(&self, f: &DensityField) -> QTensorField {
        f.q_field().convolve_keps(&self.spec, f.eps)
    }

    /// `U_ε[f] = α(2/3 − m⊗m : Q[f]*k_ε)` per site.
    pub fn mean_field_potential(&self, f: &DensityField) -> Vec<SphereField> {
        let a = self.smoothed_q(f);
        a.values
            .iter()
            .map(|q| SphereField::from_fn(Arc::clone(&self.sphere), |m| self.alpha() * (2.0 / 3.0 - q.quadratic(m))))
            .collect()
    }

    /// `μ_ε[f] = ln f + U_ε[f]` per site.
    pub fn chemical_potential(&self, f: &DensityField) -> Result<Vec<SphereField>> {
        let u = self.mean_field_potential(f);
        (0..f.num_sites())
            .map(|s| {
                let vals = f.site(s);
                if let Some(v) = vals.iter().find(|v| !(**v > 0.0)) {
                    return Err(Error::Domain(format!("density must be positive, found {v:e} at site {s}")));
                }
                Ok(u[s].zip(&f.site_field(s), |u, f| f.ln() + u))
            })
            .collect()
    }

    fn ops(&self) -> SiteOps<'_> {
        SiteOps { sphere: &self.sphere, padded: &self.padded, diag: &self.diagnostics, alpha: self.alpha() }
    }

    /// Harmonic coefficients (to degree `lmax`) of `R·(f R μ_h)` for a site
    /// with coefficients `coeffs` and smoothed tensor `a`.
    pub fn site_drift(&self, coeffs: &[f64], a: &QTensor) -> Result<Vec<f64>> {
        self.ops().drift(coeffs, a)
    }

    /// Projected chemical potential `P(ln f) + U_ε` (coefficients) per site.
    pub fn projected_chemical_potential(&self, f: &DensityField) -> Result<Vec<Vec<f64>>> {
        let a = self.smoothed_q(f);
        (0..f.num_sites())
            .map(|s| {
                let c = self.sphere.analyze(f.site(s));
                let mut mu = self.ops().projected_log(&c)?;
                let u = self.sphere.analyze(&crate::maier_saupe::potential_values(&self.sphere, self.alpha(), &a.values[s]));
                for (m, u) in mu.iter_mut().zip(&u) {
                    *m += u;
                }
                Ok(mu)
            })
            .collect()
    }

    /// Galerkin right-hand side `∂t f` at the nodes.
    pub fn rhs(&self, f: &DensityField) -> Result<Vec<f64>> {
        self.check(f)?;
        let a = self.smoothed_q(f);
        let inv_eps = 1.0 / f.eps;
        let out: Vec<Vec<f64>> = (0..f.num_sites())
            .into_par_iter()
            .map(|s| -> Result<Vec<f64>> {
                let c = self.sphere.analyze(f.site(s));
                let d = self.site_drift(&c, &a.values[s])?;
                let tot: Vec<f64> = d.iter().map(|d| d * inv_eps).collect();
                Ok(self.sphere.synthesize(&tot))
            })
            .collect::<Result<_>>()?;
        Ok(out.concat())
    }

    /// `dt = cfl·ε / (1 + 2α max|Q*k_ε| lmax)`.
    pub fn stable_dt(&self, f: &DensityField) -> f64 {
        let a = self.smoothed_q(f);
        let amax = a.values.iter().map(|q| q.norm()).fold(0.0, f64::max);
        self.cfl * f.eps / (1.0 + 2.0 * self.alpha() * amax * self.lmax() as f64)
    }

    /// One step of the predictor-corrector scheme: an implicit-Euler
    /// predictor followed by a Crank-Nicolson corrector for `σΔ` with the
    /// explicit remainder averaged over both stages. `dt` is halved while
    /// either stage is not positive on the diagnostics grid.
    pub fn kinetic_step(&self, f: &DensityField, dt: f64) -> Result<StepResult> {
        self.check(f)?;
        if !(dt > 0.0) {
            return Err(Error::Input(format!("time step must be positive, got {dt}")));
        }
        let coeffs: Vec<Vec<f64>> = (0..f.num_sites()).into_par_iter().map(|s| self.sphere.analyze(f.site(s))).collect();
        let q = f.q_field();
        let (start, report) = self.explicit_part(&coeffs, &self.diag_values(&coeffs), &q, f.eps)?;
        let report = EnergyReport { t: f.t, ..report };
        let sigma = self.stabilization;
        let lap: Vec<f64> = (0..self.sphere.num_coeffs())
            .map(|i| {
                let l = degree_of(i) as f64;
                sigma * l * (l + 1.0)
            })
            .collect();
        let mut dt_try = dt;
        let mut worst = f64::INFINITY;
        for halvings in 0..=MAX_HALVINGS {
            let r = dt_try / f.eps;
            let pred: Vec<Vec<f64>> = coeffs
                .par_iter()
                .zip(&start)
                .map(|(c, e)| c.iter().zip(e).zip(&lap).map(|((c, e), l)| (c + r * e) / (1.0 + r * l)).collect())
                .collect();
            let pred_diag = self.diag_values(&pred);
            worst = lowest(&pred_diag);
            if worst > 0.0 {
                let qp = QTensorField { grid: self.torus, values: pred.iter().map(|c| self.q_of(c)).collect() };
                let (mid, _) = self.explicit_part(&pred, &pred_diag, &qp, f.eps)?;
                let next: Vec<Vec<f64>> = coeffs
                    .par_iter()
                    .zip(start.par_iter().zip(&mid))
                    .map(|(c, (e0, e1))| {
                        c.iter()
                            .zip(e0.iter().zip(e1))
                            .zip(&lap)
                            .map(|((c, (e0, e1)), l)| ((1.0 - 0.5 * r * l) * c + 0.5 * r * (e0 + e1)) / (1.0 + 0.5 * r * l))
                            .collect()
                    })
                    .collect();
                worst = lowest(&self.diag_values(&next));
                if worst > 0.0 {
                    let mut values = Vec::with_capacity(self.sphere.num_nodes() * f.num_sites());
                    for c in &next {
                        values.extend(self.sphere.synthesize(c));
                    }
                    let field = DensityField { torus: f.torus, sphere: Arc::clone(&f.sphere), values, t: f.t + dt_try, eps: f.eps };
                    return Ok(StepResult { field, dt: dt_try, halvings, report });
                }
            }
            dt_try *= 0.5;
        }
        Err(Error::Stability { halvings: MAX_HALVINGS, min_value: worst })
    }

    fn q_of(&self, coeffs: &[f64]) -> QTensor {
        self.sphere.second_moment_values(&self.sphere.synthesize(coeffs))
    }

    fn diag_values(&self, coeffs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        coeffs.par_iter().map(|c| self.diagnostics.synthesize(c)).collect()
    }

    /// `D(c) + σΔ-part` per site together with the energy report of the
    /// state `c`.
    fn explicit_part(
        &self,
        coeffs: &[Vec<f64>],
        diag: &[Vec<f64>],
        q: &QTensorField,
        eps: f64,
    ) -> Result<(Vec<Vec<f64>>, EnergyReport)> {
        let a = q.convolve_keps(&self.spec, eps);
        let ops = self.ops();
        let sigma = self.stabilization;
        let alpha = self.alpha();
        let evals: Vec<SiteEval> =
            coeffs.par_iter().zip(diag).zip(&a.values).map(|((c, fd), a)| ops.eval(c, fd, a)).collect::<Result<_>>()?;
        let mut bulk = 0.0;
        let mut diss = 0.0;
        let mut out = Vec::with_capacity(evals.len());
        for ((ev, c), qs) in evals.into_iter().zip(coeffs).zip(&q.values) {
            bulk += ev.entropy + alpha / 3.0 - 0.5 * alpha * qs.ddot(qs) - self.reference.e0;
            diss += ev.dissipation;
            let mut d = ev.drift;
            for (idx, (d, c)) in d.iter_mut().zip(c).enumerate() {
                let l = degree_of(idx) as f64;
                *d += sigma * l * (l + 1.0) * c;
            }
            out.push(d);
        }
        let vol = self.torus.cell_volume();
        let bulk_excess = bulk * vol;
        let doubled_term = doubled_energy_spectral(q, &self.spec, alpha, eps);
        let report = EnergyReport {
            t: 0.0,
            bulk_excess,
            doubled_term,
            modulated_total: bulk_excess + doubled_term,
            dissipation: diss * vol / (eps * eps),
            cumulative_dissipation: 0.0,
        };
        Ok((out, report))
    }

    /// Bulk excess, doubled term, modulated energy and dissipation rate.
    /// Fails with a domain error if the density is not positive on the
    /// diagnostics grid.
    pub fn energy_report(&self, f: &DensityField) -> Result<EnergyReport> {
        self.check(f)?;
        let coeffs: Vec<Vec<f64>> = (0..f.num_sites()).into_par_iter().map(|s| self.sphere.analyze(f.site(s))).collect();
        let (_, report) = self.explicit_part(&coeffs, &self.diag_values(&coeffs), &f.q_field(), f.eps)?;
        Ok(EnergyReport { t: f.t, ..report })
    }

    /// Checks the spectral doubled term against the direct double sum.
    pub fn verify_doubled_term(&self, f: &DensityField, tol: f64) -> Result<f64> {
        let q = f.q_field();
        let spectral = doubled_energy_spectral(&q, &self.spec, self.alpha(), f.eps);
        let direct = doubled_energy_form(&q, &self.spec, self.alpha(), f.eps);
        let diff = (spectral - direct).abs();
        if diff > tol * spectral.abs().max(1e-300) && diff > 1e-14 {
            return Err(Error::Consistency(format!("doubled term: spectral {spectral:e} vs direct {direct:e}")));
        }
        Ok(direct)
    }

    /// `ε ∂t Q[f] = −6Q + 2α M_f(Q*k_ε)` with
    /// `M_f(A) = (2/3)A + QA + AQ − 2A:∫m⊗⁴f`.
    pub fn q_moment_rhs(&self, f: &DensityField) -> QTensorField {
        let q = f.q_field();
        let a = q.convolve_keps(&self.spec, f.eps);
        let values = (0..f.num_sites())
            .map(|s| {
                let m4 = self.sphere.fourth_moment_values(f.site(s));
                moment_rhs(self.alpha(), &q.values[s], &a.values[s], &m4)
            })
            .collect();
        QTensorField { grid: self.torus, values }
    }

    /// Closed moment flow: the fourth moment is that of the Bingham density
    /// with the same `Q`. The `−6Q` part is implicit, matching the kinetic
    /// scheme on the degree-2 harmonics.
    pub fn q_closure_step(&self, q: &QTensorField, dt: f64, eps: f64) -> Result<QTensorField> {
        let a = q.convolve_keps(&self.spec, eps);
        let grid = bingham_grid();
        let r = dt / eps;
        let values = q
            .values
            .par_iter()
            .enumerate()
            .map(|(s, qs)| {
                let b = bingham_map_on(qs, &grid, QTensor::ZERO)
                    .map_err(|e| Error::Closure { site: s, source: Box::new(e) })?;
                let m4 = bingham_moments(&b, &grid).m4;
                let drift = moment_rhs(self.alpha(), qs, &a.values[s], &m4) + *qs * 6.0;
                Ok((*qs + drift * r) * (1.0 / (1.0 + 6.0 * r)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QTensorField { grid: self.torus, values })
    }
}

fn lowest(values: &[Vec<f64>]) -> f64 {
    values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
}

/// `−6Q + 2α((2/3)A + QA + AQ − 2 A:M4)`, projected onto traceless tensors.
pub fn moment_rhs(alpha: f64, q: &QTensor, a: &QTensor, m4: &S4Tensor) -> QTensor {
    let m = *a * (2.0 / 3.0) + q.sym_product(a) - m4.contract(a) * 2.0;
    (*q * -6.0 + m * (2.0 * alpha)).deviatoric()
}

struct SiteOps<'a> {
    sphere: &'a SphereGrid,
    padded: &'a SphereGrid,
    diag: &'a SphereGrid,
    alpha: f64,
}

/// Per-site quantities from one evaluation of the flux.
struct SiteEval {
    /// `P R·(f R μ_h)` to degree `lmax`.
    drift: Vec<f64>,
    /// `∫ f ln f`, equal to `⟨f, P ln f⟩`.
    entropy: f64,
    /// `∫ f |R μ_h|²`, exact on the padded grid.
    dissipation: f64,
}

impl SiteOps<'_> {
    /// Coefficients of `P(ln f)` to degree `lmax`.
    fn projected_log(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.projected_log_of(&self.diag.synthesize(coeffs))
    }

    /// As `projected_log`, from values on the diagnostics grid.
    fn projected_log_of(&self, fd: &[f64]) -> Result<Vec<f64>> {
        let mut logs = Vec::with_capacity(fd.len());
        for &v in fd {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("density is not positive ({v:e})")));
            }
            logs.push(v.ln());
        }
        Ok(self.diag.analyze_to(&logs, self.sphere.lmax()))
    }

    fn drift(&self, coeffs: &[f64], a: &QTensor) -> Result<Vec<f64>> {
        Ok(self.eval(coeffs, &self.diag.synthesize(coeffs), a)?.drift)
    }

    /// Flux `f R(P ln f + U)` for `U = α(2/3 − m⊗m : A)` and its divergence;
    /// `fd` holds the density on the diagnostics grid.
    fn eval(&self, coeffs: &[f64], fd: &[f64], a: &QTensor) -> Result<SiteEval> {
        let lmax = self.sphere.lmax();
        let lc = self.projected_log_of(fd)?;
        let entropy = coeffs.iter().zip(&lc).map(|(c, l)| c * l).sum();
        let mut rc = vec![0.0; lc.len()];
        let rl: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                self.sphere.apply_rot(i, &lc, &mut rc);
                self.padded.synthesize(&rc)
            })
            .collect();
        let fp = self.padded.synthesize(coeffs);
        let mut flux = [vec![0.0; fp.len()], vec![0.0; fp.len()], vec![0.0; fp.len()]];
        let mut dissipation = 0.0;
        for (k, (m, w)) in self.padded.nodes().iter().zip(self.padded.weights()).enumerate() {
            let ru = rot_potential(self.alpha, a, m);
            let mut g2 = 0.0;
            for i in 0..3 {
                let g = rl[i][k] + ru[i];
                g2 += g * g;
                flux[i][k] = fp[k] * g;
            }
            dissipation += w * fp[k] * g2;
        }
        let mut drift = vec![0.0; self.sphere.num_coeffs()];
        for (i, fl) in flux.iter().enumerate() {
            let jc = self.padded.analyze_to(fl, lmax);
            self.sphere.apply_rot_add(i, &jc, &mut drift);
        }
        Ok(SiteEval { drift, entropy, dissipation })
    }
}

/// Padded band limit used to form products exactly.
pub fn padded_lmax(lmax: usize) -> usize {
    (lmax + 2).max((3 * lmax).div_ceil(2))
}

/// Band limit of the diagnostics grid.
pub fn diagnostics_lmax(lmax: usize) -> usize {
    (6 * lmax).clamp(32, 96)
}

/// Steady state of the homogeneous Galerkin dynamics at a given band
/// limit, uniaxial about a director. Its profile is a zonal expansion
/// `G(m·ν) = Σ_l c_l P̄_l0(m·ν)`, so it is band-limited for every `ν`.
#[derive(Clone, Debug)]
pub struct ResolvedEquilibrium {
    pub lmax: usize,
    pub alpha: f64,
    /// Zonal coefficients `c_l`, `l = 0..=lmax`.
    pub profile: Vec<f64>,
    /// Scalar order parameter of the resolved profile.
    pub s2: f64,
    /// Bulk energy of the resolved profile (diagnostics quadrature).
    pub e0: f64,
    /// Largest residual coefficient of the steady-state equations.
    pub residual: f64,
}

/// Zonal even harmonics sampled on the rings of a quadrature grid.
struct ZonalRings {
    x: Vec<f64>,
    w: Vec<f64>,
    /// `basis[k][j]`: `P̄_{l_k 0}` at ring `j`.
    basis: Vec<Vec<f64>>,
    y00: f64,
}

impl ZonalRings {
    fn new(grid: &SphereGrid, evens: &[usize]) -> Self {
        let x: Vec<f64> = grid.theta_nodes().iter().map(|t| t.cos()).collect();
        let w: Vec<f64> = grid.theta_weights().iter().map(|w| 2.0 * std::f64::consts::PI * w).collect();
        let lmax = evens.last().copied().unwrap_or(0);
        let table: Vec<Vec<f64>> = x.iter().map(|&xj| zonal_values(lmax, xj)).collect();
        let basis = evens.iter().map(|&l| table.iter().map(|z| z[l]).collect()).collect();
        ZonalRings { x, w, basis, y00: 1.0 / (4.0 * std::f64::consts::PI).sqrt() }
    }

    fn density(&self, c: &[f64]) -> Vec<f64> {
        (0..self.x.len())
            .map(|j| self.y00 * self.y00 + c.iter().zip(&self.basis).map(|(c, b)| c * b[j]).sum::<f64>())
            .collect()
    }

    /// `∫ f ln f − η ∫ f x²`, infinite outside the positive cone.
    fn objective(&self, f: &[f64], eta: f64) -> f64 {
        if f.iter().any(|v| !(*v > 0.0)) {
            return f64::INFINITY;
        }
        f.iter().zip(&self.x).zip(&self.w).map(|((f, x), w)| w * f * (f.ln() - eta * x * x)).sum()
    }

    /// Unit-mass band-limited maximizer of `∫ f (η x²) − ∫ f ln f`.
    fn max_entropy(&self, eta: f64, start: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.basis.len();
        let mut c = start.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut f = self.density(&c);
        if !self.objective(&f, eta).is_finite() {
            c = vec![0.0; n];
            f = self.density(&c);
        }
        let mut prev_decrement = f64::INFINITY;
        let mut stalls = 0;
        for _ in 0..200 {
            let g: Vec<f64> = (0..n)
                .map(|k| {
                    (0..self.x.len())
                        .map(|j| self.w[j] * self.basis[k][j] * (f[j].ln() + 1.0 - eta * self.x[j] * self.x[j]))
                        .sum()
                })
                .collect();
            let hess = DMatrix::from_fn(n, n, |a, b| {
                (0..self.x.len()).map(|j| self.w[j] * self.basis[a][j] * self.basis[b][j] / f[j]).sum()
            });
            let step = hess
                .cholesky()
                .ok_or_else(|| Error::Numerical("entropy Hessian is not positive definite".into()))?
                .solve(&DVector::from_vec(g.clone()));
            // squared Newton decrement
            let decrement: f64 = g.iter().zip(step.iter()).map(|(g, s)| g * s).sum();
            // converged, or stalled at the rounding floor for several steps
            if decrement < 1e-12 && decrement > 0.5 * prev_decrement {
                stalls += 1;
            } else {
                stalls = 0;
            }
            if decrement < 1e-26 || stalls >= 3 {
                return Ok(c);
            }
            prev_decrement = decrement;
            // in the quadratic regime the Armijo test is below the rounding of Φ
            if decrement < 1e-10 {
                let cand: Vec<f64> = c.iter().zip(step.iter()).map(|(c, s)| c - s).collect();
                let fc = self.density(&cand);
                if fc.iter().all(|v| *v > 0.0) {
                    c = cand;
                    f = fc;
                    continue;
                }
            }
            let phi = self.objective(&f, eta);
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = c.iter().zip(step.iter()).map(|(c, s)| c - t * s).collect();
                let fc = self.density(&cand);
                let pc = self.objective(&fc, eta);
                if pc <= phi - 0.25 * t * decrement {
                    c = cand;
                    f = fc;
                    break;
                }
                t *= 0.5;
                if t < 1e-10 {
                    // no further descent is resolvable in floating point
                    return if decrement < 1e-20 {
                        Ok(c)
                    } else {
                        Err(Error::Convergence { iterations: 0, residual: decrement.sqrt() })
                    };
                }
            }
        }
        if prev_decrement < 1e-20 {
            return Ok(c);
        }
        Err(Error::Convergence { iterations: 200, residual: prev_decrement.sqrt() })
    }

    fn s2(&self, c: &[f64]) -> f64 {
        let f = self.density(c);
        let x2: f64 = f.iter().zip(&self.x).zip(&self.w).map(|((f, x), w)| w * f * x * x).sum();
        1.5 * (x2 - 1.0 / 3.0)
    }
}

/// Root of `η = α S₂(η)` on the nematic branch of the band-limited
/// problem, bracketed around the exact root and refined by the Illinois
/// method.
fn nematic_root(rings: &ZonalRings, params: &EquilibriumParams) -> Result<f64> {
    let alpha = params.alpha;
    let mut warm: Option<Vec<f64>> = None;
    let mut eval = |eta: f64| -> Result<f64> {
        let c = rings.max_entropy(eta, warm.as_deref())?;
        let v = eta - alpha * rings.s2(&c);
        warm = Some(c);
        Ok(v)
    };
    let mut hi = params.eta.max(1.0);
    let mut fhi = eval(hi)?;
    while fhi <= 0.0 {
        hi += 1.0;
        if hi > alpha + 2.0 {
            return Err(Error::Numerical("no nematic equilibrium bracket".into()));
        }
        fhi = eval(hi)?;
    }
    let mut lo = hi;
    let mut flo = fhi;
    while flo >= 0.0 {
        lo *= 0.9;
        if lo < 1e-3 {
            return Err(Error::Numerical(format!("no nematic equilibrium at alpha {alpha} for this band limit")));
        }
        flo = eval(lo)?;
    }
    let mut side = 0;
    for _ in 0..200 {
        let mid = (lo * fhi - hi * flo) / (fhi - flo);
        let fm = eval(mid)?;
        if fm.abs() < 1e-14 || (hi - lo) < 1e-14 * hi {
            return Ok(mid);
        }
        if fm < 0.0 {
            lo = mid;
            flo = fm;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            fhi = fm;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Ok((lo + hi) / 2.0)
}

type ResolvedCache = Mutex<HashMap<(usize, u64), Arc<ResolvedEquilibrium>>>;

static RESOLVED: Lazy<ResolvedCache> = Lazy::new(|| Mutex::new(HashMap::new()));

impl ResolvedEquilibrium {
    /// A positive band-limited `f` is steady iff `P ln f + U[f]` is
    /// constant, i.e. `f` maximizes entropy among band-limited densities
    /// with `P ln f = η (m·ν)² + c`, and `η = α S₂[f]`. The inner problem is
    /// convex and solved by Newton's method on the diagnostics quadrature;
    /// the outer scalar equation is bracketed on the nematic branch.
    pub fn compute(lmax: usize, params: &EquilibriumParams) -> Result<Arc<Self>> {
        let key = (lmax, params.alpha.to_bits());
        if let Some(r) = RESOLVED.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(Arc::clone(r));
        }
        let sphere = build_grid(lmax)?;
        let padded = build_grid(padded_lmax(lmax))?;
        let diag = build_grid(diagnostics_lmax(lmax))?;
        let ops = SiteOps { sphere: &sphere, padded: &padded, diag: &diag, alpha: params.alpha };
        let nc = sphere.num_coeffs();
        let evens: Vec<usize> = (2..=lmax).step_by(2).collect();
        let to_coeffs = |x: &[f64]| {
            let mut c = vec![0.0; nc];
            c[0] = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
            for (k, &l) in evens.iter().enumerate() {
                c[harmonic_index(l, 0)] = x[k];
            }
            c
        };
        let residual = |x: &[f64]| -> DVector<f64> {
            let c = to_coeffs(x);
            let q = sphere.second_moment_values(&sphere.synthesize(&c));
            match ops.drift(&c, &q) {
                Ok(d) => DVector::from_iterator(evens.len(), evens.iter().map(|&l| d[harmonic_index(l, 0)])),
                Err(_) => DVector::from_element(evens.len(), f64::INFINITY),
            }
        };
        let rings = ZonalRings::new(&diag, &evens);
        let eta = nematic_root(&rings, params)?;
        let x = rings.max_entropy(eta, None)?;
        // ln f loses relative precision where f is tiny, and the attainable
        // residual degrades accordingly
        let nodal = rings.density(&x);
        let fmin = nodal.iter().copied().fold(f64::INFINITY, f64::min);
        let fmax = nodal.iter().copied().fold(0.0, f64::max);
        if fmin < 1e-8 * fmax {
            return Err(Error::Numerical(format!(
                "band-limited equilibrium at alpha {} and lmax {lmax} is numerically degenerate (min/max density {:.1e})",
                params.alpha,
                fmin / fmax
            )));
        }
        let res = residual(&x).amax();
        if !(res <= 1e-10_f64.max(1e-13 * fmax / fmin)) {
            return Err(Error::Convergence { iterations: 40, residual: res });
        }
        let c = to_coeffs(&x);
        let profile: Vec<f64> = (0..=lmax).map(|l| c[harmonic_index(l, 0)]).collect();
        let vals = sphere.synthesize(&c);
        if vals.iter().any(|v| *v <= 0.0) {
            return Err(Error::Numerical(format!("resolved equilibrium at lmax {lmax} is not positive")));
        }
        let q = sphere.second_moment_values(&vals);
        let fd = diag.synthesize(&c);
        if fd.iter().any(|v| *v <= 0.0) {
            return Err(Error::Numerical(format!("resolved equilibrium at lmax {lmax} is not positive")));
        }
        let entropy: f64 = fd.iter().zip(diag.weights()).map(|(f, w)| w * f * f.ln()).sum();
        let e0 = entropy + params.alpha / 3.0 - 0.5 * params.alpha * q.ddot(&q);
        let s2 = 1.5 * q.get(2, 2);
        if !(s2 > 0.5 * params.s2) {
            return Err(Error::Numerical(format!("equilibrium solve at lmax {lmax} left the nematic branch (S2 = {s2})")));
        }
        let out = Arc::new(ResolvedEquilibrium {
            lmax,
            alpha: params.alpha,
            profile,
            s2,
            e0,
            residual: res,
        });
        RESOLVED.lock().unwrap_or_else(|e| e.into_inner()).insert(key, Arc::clone(&out));
        Ok(out)
    }

    /// Value of the profile at `x = m·ν`.
    pub fn profile_at(&self, x: f64) -> f64 {
        zonal_values(self.lmax, x).iter().zip(&self.profile).map(|(p, c)| p * c).sum()
    }

    /// Node values on `grid` for director `nu`.
    pub fn density_values(&self, grid: &SphereGrid, nu: &Vec3) -> Vec<f64> {
        grid.sample(|m| self.profile_at(dot(m, nu)))
    }
}
