//! Macroscopic limit: the radial profile `g₀`, the mobility `γ`, the
//! coefficient `Λ`, the harmonic map heat flow and the linearized
//! operators around a uniaxial equilibrium.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, TorusGrid};
use crate::maier_saupe::EquilibriumParams;
use crate::quadrature::{chebyshev_diff_matrix, chebyshev_lobatto, gauss_legendre};
use crate::sphere::{build_grid, num_coeffs, SphereGrid};
use crate::tensor::{cross, dot, norm, QTensor, Vec3};

/// Default collocation order for `g₀`.
pub const G0_ORDER: usize = 64;

/// `u₀(θ) = α(2/3 + S₂/3 − S₂ cos²θ)`, the mean-field potential of the
/// uniaxial equilibrium as a function of the angle to the director.
#[derive(Clone, Copy, Debug)]
pub struct U0Profile {
    pub alpha: f64,
    pub s2: f64,
}

impl U0Profile {
    pub fn value(&self, theta: f64) -> f64 {
        let c = theta.cos();
        self.alpha * (2.0 / 3.0 + self.s2 / 3.0 - self.s2 * c * c)
    }

    pub fn derivative(&self, theta: f64) -> f64 {
        2.0 * self.alpha * self.s2 * theta.cos() * theta.sin()
    }
}

pub fn u0_profile(params: &EquilibriumParams) -> U0Profile {
    U0Profile { alpha: params.alpha, s2: params.s2 }
}

/// Solution of
/// `(1/sinθ)(sinθ g′)′ − g/sin²θ − u₀′ g′ = −u₀′`, `g(0) = g(π) = 0`,
/// stored as `g(θ) = sinθ · p(cosθ)` with `p` a Chebyshev interpolant.
#[derive(Clone, Debug)]
pub struct G0Profile {
    pub eta: f64,
    nodes: Vec<f64>,
    p: Vec<f64>,
    dp: Vec<f64>,
    d2p: Vec<f64>,
}

fn barycentric(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let n = nodes.len() - 1;
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, (&xj, &vj)) in nodes.iter().zip(values).enumerate() {
        let diff = x - xj;
        if diff == 0.0 {
            return vj;
        }
        let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
        if j == 0 || j == n {
            w *= 0.5;
        }
        num += w * vj / diff;
        den += w / diff;
    }
    num / den
}

impl G0Profile {
    pub fn order(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `p(x)` with `g(θ) = sinθ p(cosθ)`.
    pub fn p(&self, x: f64) -> f64 {
        barycentric(&self.nodes, &self.p, x)
    }

    pub fn g(&self, theta: f64) -> f64 {
        theta.sin() * self.p(theta.cos())
    }

    pub fn dg(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        c * self.p(c) - s * s * barycentric(&self.nodes, &self.dp, c)
    }

    pub fn d2g(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let p = self.p(c);
        let dp = barycentric(&self.nodes, &self.dp, c);
        let d2p = barycentric(&self.nodes, &self.d2p, c);
        -s * p - 3.0 * s * c * dp + s * s * s * d2p
    }

    /// Residual of the `θ`-form of the equation at an interior angle.
    pub fn residual(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let du = 2.0 * self.eta * c * s;
        let (g, dg) = (self.g(theta), self.dg(theta));
        self.d2g(theta) + c / s * dg - g / (s * s) - du * dg + du
    }
}

pub fn solve_g0(params: &EquilibriumParams) -> Result<G0Profile> {
    solve_g0_order(params, G0_ORDER)
}

/// Chebyshev collocation at `order + 1` Lobatto points. In `x = cosθ` the
/// equation for `p` reads
/// `(1−x²)p″ − 4xp′ − 2p + 2ηx(1−x²)p′ − 2ηx²p = −2ηx`,
/// whose polynomial solution is the one regular at both poles.
pub fn solve_g0_order(params: &EquilibriumParams, order: usize) -> Result<G0Profile> {
    if order < 4 {
        return Err(Error::Config(format!("collocation order must be at least 4, got {order}")));
    }
    let eta = params.alpha * params.s2;
    let x = chebyshev_lobatto(order);
    let m = order + 1;
    let d = DMatrix::from_row_slice(m, m, &chebyshev_diff_matrix(order));
    let d2 = &d * &d;
    let mut op = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for i in 0..m {
        let xi = x[i];
        let w = 1.0 - xi * xi;
        for j in 0..m {
            op[(i, j)] = w * d2[(i, j)] + (-4.0 * xi + 2.0 * eta * xi * w) * d[(i, j)];
        }
        op[(i, i)] += -2.0 - 2.0 * eta * xi * xi;
        rhs[i] = -2.0 * eta * xi;
    }
    let p = op
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular collocation matrix for g0".into()))?;
    let res = (&op * &p - &rhs).amax();
    if !res.is_finite() || res > 1e-8 * (1.0 + rhs.amax()) {
        return Err(Error::Numerical(format!("g0 collocation residual {res:e}")));
    }
    let dp = &d * &p;
    let d2p = &d * &dp;
    Ok(G0Profile { eta, nodes: x, p: p.as_slice().to_vec(), dp: dp.as_slice().to_vec(), d2p: d2p.as_slice().to_vec() })
}

/// `γ = −π ∫₀^π (d f₀/dθ) g₀ sinθ dθ = (2πη/Z) ∫ x(1−x²) p(x) e^{ηx²} dx`.
pub fn gamma_from_profile(g0: &G0Profile, params: &EquilibriumParams) -> f64 {
    let (xs, ws) = gauss_legendre(4 * g0.order());
    let integral: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(&x, &w)| w * x * (1.0 - x * x) * g0.p(x) * (g0.eta * x * x - params.log_z).exp())
        .sum();
    2.0 * PI * g0.eta * integral
}

pub fn gamma_constant(params: &EquilibriumParams) -> Result<f64> {
    let gamma = gamma_from_profile(&solve_g0(params)?, params);
    if !(gamma > 0.0) {
        return Err(Error::Consistency(format!("mobility must be positive, got {gamma:e} at alpha {}", params.alpha)));
    }
    Ok(gamma)
}

/// Constants of the limit flow `∂t n = Λ(Δn + |∇n|² n)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitCoefficients {
    pub alpha: f64,
    pub eta: f64,
    pub s2: f64,
    pub z: f64,
    pub e0: f64,
    pub gamma: f64,
    pub mu: f64,
    pub d: usize,
    /// `Λ = αμS₂²/(γd)`: Frank constant `αμS₂²/d` over rotational friction `γ`.
    pub lambda: f64,
}

pub fn lambda_coefficient(params: &EquilibriumParams, spec: &KernelSpec) -> Result<LimitCoefficients> {
    let gamma = gamma_constant(params)?;
    let lambda = params.alpha * spec.mu * params.s2 * params.s2 / (gamma * spec.d as f64);
    Ok(LimitCoefficients {
        alpha: params.alpha,
        eta: params.eta,
        s2: params.s2,
        z: params.z,
        e0: params.e0,
        gamma,
        mu: spec.mu,
        d: spec.d,
        lambda,
    })
}

/// Unit vector field on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectorField {
    pub torus: TorusGrid,
    pub values: Vec<Vec3>,
    pub t: f64,
}

impl DirectorField {
    pub fn new(torus: TorusGrid, values: Vec<Vec3>, t: f64) -> Result<Self> {
        if values.len() != torus.num_sites() {
            return Err(Error::Input(format!("director has {} sites, expected {}", values.len(), torus.num_sites())));
        }
        if let Some((s, v)) = values.iter().enumerate().find(|(_, v)| !((norm(v) - 1.0).abs() <= 1e-12)) {
            return Err(Error::Input(format!("director at site {s} has norm {}", norm(v))));
        }
        Ok(DirectorField { torus, values, t })
    }

    /// Samples `f(x)` and normalizes; fails if a sample vanishes.
    pub fn from_fn<F: Fn(&[f64]) -> Vec3>(torus: TorusGrid, f: F) -> Result<Self> {
        let values = (0..torus.num_sites())
            .map(|s| {
                let v = f(&torus.position(s));
                let l = norm(&v);
                if !(l > 0.0 && l.is_finite()) {
                    return Err(Error::Singularity { site: s });
                }
                Ok([v[0] / l, v[1] / l, v[2] / l])
            })
            .collect::<Result<_>>()?;
        Ok(DirectorField { torus, values, t: 0.0 })
    }

    pub fn constant(torus: TorusGrid, n: &Vec3) -> Result<Self> {
        Self::new(torus, vec![*n; torus.num_sites()], 0.0)
    }

    /// Largest deviation of `|n|` from one.
    pub fn norm_defect(&self) -> f64 {
        self.values.iter().map(|v| (norm(v) - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Uniaxial tensor field `s (n⊗n − I/3)`.
    pub fn q_field(&self, s: f64) -> Vec<QTensor> {
        self.values.iter().map(|n| QTensor::uniaxial(s, n)).collect()
    }

    fn forward_difference(&self, site: usize, axis: usize) -> Vec3 {
        let h = self.torus.spacing();
        let a = self.values[self.torus.neighbor(site, axis, true)];
        let b = self.values[site];
        [(a[0] - b[0]) / h, (a[1] - b[1]) / h, (a[2] - b[2]) / h]
    }

    fn laplacian(&self, site: usize) -> Vec3 {
        let h2 = self.torus.spacing().powi(2);
        let c = self.values[site];
        let mut out = [0.0; 3];
        for axis in 0..self.torus.d {
            let a = self.values[self.torus.neighbor(site, axis, true)];
            let b = self.values[self.torus.neighbor(site, axis, false)];
            for i in 0..3 {
                out[i] += (a[i] + b[i] - 2.0 * c[i]) / h2;
            }
        }
        out
    }
}

/// `½ Σ h^d Σ_j |D⁺_j n|²`.
pub fn dirichlet_energy(n: &DirectorField) -> f64 {
    let vol = n.torus.cell_volume();
    let sum: f64 = (0..n.torus.num_sites())
        .map(|s| (0..n.torus.d).map(|a| dot(&n.forward_difference(s, a), &n.forward_difference(s, a))).sum::<f64>())
        .sum();
    0.5 * vol * sum
}

/// Largest step for which the explicit update is monotone, `h²/(2dΛ)`.
pub fn hmhf_stable_dt(torus: &TorusGrid, lambda: f64) -> f64 {
    torus.spacing().powi(2) / (2.0 * torus.d as f64 * lambda)
}

/// Projection step: `n* = n + dt Λ Δ_h n`, then `n ← n*/|n*|`.
pub fn hmhf_step(n: &DirectorField, dt: f64, lambda: f64) -> Result<DirectorField> {
    if !(dt > 0.0) || !(lambda > 0.0) {
        return Err(Error::Input(format!("need dt > 0 and lambda > 0, got {dt}, {lambda}")));
    }
    let values = (0..n.torus.num_sites())
        .into_par_iter()
        .map(|s| {
            let lap = n.laplacian(s);
            let c = n.values[s];
            let v: Vec3 = std::array::from_fn(|i| c[i] + dt * lambda * lap[i]);
            let l = norm(&v);
            if !(l > 1e-12) {
                return Err(Error::Singularity { site: s });
            }
            Ok([v[0] / l, v[1] / l, v[2] / l])
        })
        .collect::<Result<_>>()?;
    Ok(DirectorField { torus: n.torus, values, t: n.t + dt })
}

/// The two sides of the weak form
/// `∫∫(∂t n ∧ n)·Θ φ = Λ ∫∫ φ ∂_jΘ·(n ∧ ∂_j n)` and their difference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakResidual {
    pub left: f64,
    pub right: f64,
    pub residual: f64,
}

/// Discretizes the weak form with forward differences in time and space
/// (left-endpoint rule in time) on a trajectory stored at uniform `dt`.
pub fn weak_residual<T, P>(trajectory: &[DirectorField], theta: T, phi: P, lambda: f64) -> Result<WeakResidual>
where
    T: Fn(&[f64]) -> Vec3,
    P: Fn(f64) -> f64,
{
    if trajectory.len() < 2 {
        return Err(Error::Input("weak residual needs at least two snapshots".into()));
    }
    let torus = trajectory[0].torus;
    let dt = trajectory[1].t - trajectory[0].t;
    if !(dt > 0.0) {
        return Err(Error::Input("trajectory times must increase".into()));
    }
    for w in trajectory.windows(2) {
        if w[1].torus != torus || ((w[1].t - w[0].t) - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(Error::Input("trajectory must share one grid and a uniform time step".into()));
        }
    }
    let h = torus.spacing();
    let vol = torus.cell_volume();
    let test: Vec<Vec3> = (0..torus.num_sites()).map(|s| theta(&torus.position(s))).collect();
    let mut left = 0.0;
    let mut right = 0.0;
    for w in trajectory.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let wt = dt * phi(a.t) * vol;
        if wt == 0.0 {
            continue;
        }
        for s in 0..torus.num_sites() {
            let dn: Vec3 = std::array::from_fn(|i| (b.values[s][i] - a.values[s][i]) / dt);
            left += wt * dot(&cross(&dn, &a.values[s]), &test[s]);
            for axis in 0..torus.d {
                let tn = test[torus.neighbor(s, axis, true)];
                let dtheta: Vec3 = std::array::from_fn(|i| (tn[i] - test[s][i]) / h);
                right += wt * lambda * dot(&dtheta, &cross(&a.values[s], &a.forward_difference(s, axis)));
            }
        }
    }
    Ok(WeakResidual { left, right, residual: (left - right).abs() })
}

/// Galerkin matrices of `A_{f₀} φ = −R·(f₀ Rφ)` and `H_{f₀} g = g/f₀ + U₀[g]`
/// around `f₀ = h_n`, on real harmonics of degree `≤ l`. `H` acts on
/// `g = f₀ φ` and is paired with the `1/f₀`-weighted inner product, whose
/// Gram matrix is `mass`.
#[derive(Clone, Debug)]
pub struct LinearizedOperators {
    pub l: usize,
    pub n: Vec3,
    pub alpha: f64,
    pub eta: f64,
    /// `∫ f₀ RY_i · RY_j`.
    pub a: DMatrix<f64>,
    /// `⟨H g_i, g_j⟩` for `g_i = f₀ Y_i`.
    pub h: DMatrix<f64>,
    /// `∫ f₀ Y_i Y_j`.
    pub mass: DMatrix<f64>,
    /// Coefficients of `R_k f₀`, `k = 1, 2, 3`.
    pub rot_f0: [DVector<f64>; 3],
    basis: Arc<SphereGrid>,
}

/// Spectrum of `H_{f₀}` on zero-mean perturbations.
#[derive(Clone, Debug)]
pub struct HSpectrum {
    /// Generalized eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    /// Largest principal angle between the numerical kernel and the
    /// rotation modes `{(m·e)(m·n) f₀}`, `e ⊥ n`.
    pub kernel_angle: f64,
    /// Smallest eigenvalue above the kernel threshold.
    pub gap: f64,
    /// Kernel vectors (coefficients of `φ` with `g = f₀ φ`).
    pub kernel: Vec<DVector<f64>>,
}

/// Relative threshold below which an eigenvalue counts as zero.
pub const KERNEL_THRESHOLD: f64 = 1e-8;

pub fn assemble_linearized(params: &EquilibriumParams, n: &Vec3, l: usize) -> Result<LinearizedOperators> {
    if l < 8 {
        return Err(Error::Config(format!("basis truncation must be at least 8, got {l}")));
    }
    if (norm(n) - 1.0).abs() > 1e-12 {
        return Err(Error::Input("director must be a unit vector".into()));
    }
    let basis = build_grid(l)?;
    let quad = build_grid(l + 48)?;
    let f0 = quad.sample(|m| {
        let c = dot(m, n);
        (params.eta * c * c - params.log_z).exp()
    });
    let nb = num_coeffs(l);
    let columns: Vec<(Vec<f64>, Vec<f64>, QTensor)> = (0..nb)
        .into_par_iter()
        .map(|j| {
            let mut unit = vec![0.0; nb];
            unit[j] = 1.0;
            let mut acol = vec![0.0; nb];
            let mut rc = vec![0.0; nb];
            for c in 0..3 {
                basis.apply_rot(c, &unit, &mut rc);
                let prod: Vec<f64> = quad.synthesize(&rc).iter().zip(&f0).map(|(r, f)| r * f).collect();
                let pc = quad.analyze_to(&prod, l);
                basis.apply_rot_add(c, &pc, &mut acol);
            }
            acol.iter_mut().for_each(|v| *v = -*v);
            let g: Vec<f64> = quad.synthesize(&unit).iter().zip(&f0).map(|(y, f)| y * f).collect();
            let mcol = quad.analyze_to(&g, l);
            (acol, mcol, quad.second_moment_values(&g))
        })
        .collect();
    let mut a = DMatrix::zeros(nb, nb);
    let mut mass = DMatrix::zeros(nb, nb);
    for (j, (acol, mcol, _)) in columns.iter().enumerate() {
        a.set_column(j, &DVector::from_column_slice(acol));
        mass.set_column(j, &DVector::from_column_slice(mcol));
    }
    a = (&a + a.transpose()) * 0.5;
    mass = (&mass + mass.transpose()) * 0.5;
    // ⟨U₀[g_i], g_j⟩ = α((2/3) s_i s_j − Q_i : Q_j), s = ∫g, Q = deviatoric ∫mm g
    let root = (4.0 * PI).sqrt();
    let mut h = mass.clone();
    for i in 0..nb {
        for j in 0..nb {
            let (si, sj) = (mass[(0, i)] * root, mass[(0, j)] * root);
            h[(i, j)] += params.alpha * (2.0 / 3.0 * si * sj - columns[i].2.ddot(&columns[j].2));
        }
    }
    let fc = quad.analyze_to(&f0, l);
    let rot_f0 = std::array::from_fn(|c| {
        let mut out = vec![0.0; nb];
        basis.apply_rot(c, &fc, &mut out);
        DVector::from_vec(out)
    });
    Ok(LinearizedOperators { l, n: *n, alpha: params.alpha, eta: params.eta, a, h, mass, rot_f0, basis })
}

impl LinearizedOperators {
    pub fn num_basis(&self) -> usize {
        self.a.nrows()
    }

    fn rhs(&self, u: &Vec3) -> DVector<f64> {
        &self.rot_f0[0] * u[0] + &self.rot_f0[1] * u[1] + &self.rot_f0[2] * u[2]
    }

    /// `∫ (u·Rf₀) A⁻¹(v·Rf₀)` with `A` inverted on zero-mean functions.
    pub fn bilinear(&self, u: &Vec3, v: &Vec3) -> Result<f64> {
        let nb = self.num_basis();
        let a0 = self.a.view((1, 1), (nb - 1, nb - 1)).into_owned();
        let chol = a0.cholesky().ok_or_else(|| Error::Numerical("A is not positive definite on zero-mean functions".into()))?;
        let bv = self.rhs(v).rows(1, nb - 1).into_owned();
        let bu = self.rhs(u).rows(1, nb - 1).into_owned();
        Ok(bu.dot(&chol.solve(&bv)))
    }

    /// Smallest eigenvalue of `A` on zero-mean functions.
    pub fn a_min_eigenvalue(&self) -> f64 {
        let nb = self.num_basis();
        let a0 = self.a.view((1, 1), (nb - 1, nb - 1)).into_owned();
        a0.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Coefficients of the rotation modes `(m·e₁)(m·n)`, `(m·e₂)(m·n)`.
    pub fn rotation_modes(&self) -> [DVector<f64>; 2] {
        let (e1, e2) = orthonormal_complement(&self.n);
        let n = self.n;
        [e1, e2].map(|e| {
            let vals = self.basis.sample(|m| dot(m, &e) * dot(m, &n));
            DVector::from_vec(self.basis.analyze(&vals))
        })
    }

    /// Generalized eigenproblem `H x = λ M x` on `{∫ f₀ φ = 0}`.
    pub fn h_spectrum(&self) -> Result<HSpectrum> {
        let nb = self.num_basis();
        // eliminate the Y₀₀ coefficient through the mean constraint
        let w: Vec<f64> = (0..nb).map(|i| self.mass[(0, i)]).collect();
        let mut b = DMatrix::zeros(nb, nb - 1);
        for k in 0..nb - 1 {
            b[(0, k)] = -w[k + 1] / w[0];
            b[(k + 1, k)] = 1.0;
        }
        let hk = b.transpose() * &self.h * &b;
        let mk = b.transpose() * &self.mass * &b;
        let chol = mk.cholesky().ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
        let linv = chol.l().try_inverse().ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        let sym = &linv * hk * linv.transpose();
        let eig = SymmetricEigen::new((&sym + sym.transpose()) * 0.5);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let scale = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = KERNEL_THRESHOLD * scale;
        let kernel: Vec<DVector<f64>> = order
            .iter()
            .filter(|&&i| eig.eigenvalues[i].abs() < tol)
            .map(|&i| &b * (linv.transpose() * eig.eigenvectors.column(i)))
            .collect();
        let gap = eigenvalues.iter().copied().find(|v| v.abs() >= tol).unwrap_or(f64::NAN);
        let modes = self.rotation_modes();
        let kernel_angle = self.subspace_angle(&kernel, &modes);
        Ok(HSpectrum { eigenvalues, kernel_dim: kernel.len(), kernel_angle, gap, kernel })
    }

    /// Largest principal angle between two subspaces in the `mass` inner
    /// product; `π/2` if the dimensions differ.
    pub fn subspace_angle(&self, u: &[DVector<f64>], v: &[DVector<f64>]) -> f64 {
        if u.len() != v.len() || u.is_empty() {
            return PI / 2.0;
        }
        let qu = self.mass_orthonormalize(u);
        let qv = self.mass_orthonormalize(v);
        // sin of the largest angle is the norm of the part of U orthogonal to V
        let resid = &qu - &qv * (qv.transpose() * &self.mass * &qu);
        let gram = resid.transpose() * &self.mass * &resid;
        let top = SymmetricEigen::new((&gram + gram.transpose()) * 0.5).eigenvalues.iter().copied().fold(0.0f64, f64::max);
        top.sqrt().min(1.0).asin()
    }

    fn mass_orthonormalize(&self, vs: &[DVector<f64>]) -> DMatrix<f64> {
        let mut out: Vec<DVector<f64>> = Vec::new();
        for v in vs {
            let mut w = v.clone();
            for _ in 0..2 {
                for q in &out {
                    let c = q.dot(&(&self.mass * &w));
                    w -= q * c;
                }
            }
            let nrm = w.dot(&(&self.mass * &w)).sqrt();
            out.push(w / nrm);
        }
        DMatrix::from_columns(&out)
    }

    /// `‖A H g‖ / ‖g‖` for `g = f₀ φ`, both in the Galerkin sense; zero on
    /// `ker H` since `G_{f₀} = −A_{f₀} H_{f₀}`.
    pub fn g_residual(&self, phi: &DVector<f64>) -> Result<f64> {
        let chol = self.mass.clone().cholesky().ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
        // coefficients of H g in the basis: M⁻¹ (H φ) with the weighted pairing
        let hg = chol.solve(&(&self.h * phi));
        let ag = &self.a * hg;
        let gnorm = phi.dot(&(&self.mass * phi)).sqrt();
        Ok(ag.norm() / gnorm)
    }
}

/// Two unit vectors completing `n` to a right-handed orthonormal frame.
pub fn orthonormal_complement(n: &Vec3) -> (Vec3, Vec3) {
    let pick = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let c = dot(&pick, n);
    let e1: Vec3 = std::array::from_fn(|i| pick[i] - c * n[i]);
    let l = norm(&e1);
    let e1 = [e1[0] / l, e1[1] / l, e1[2] / l];
    let e2 = cross(n, &e1);
    (e1, e2)
}
