//! Homogeneous Maier-Saupe equilibria: the order-parameter function `s2`,
//! the self-consistency roots `η = α s2(η)`, the uniaxial densities `h_ν`,
//! the bulk energy, and the Bingham closure map `Q ↦ B(Q)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix5, Vector5};

use crate::error::{Error, Result};
use crate::quadrature::integrate_adaptive;
use crate::sphere::{build_grid, SphereField, SphereGrid};
use crate::tensor::{QTensor, S4Tensor, Vec3};

const REL_TOL: f64 = 1e-12;

/// Weighted moments `∫₀¹ z^{2k} e^{η(z²−c)} dz` for k = 0, 1, 2 with the
/// shift `c = max(η, 0)` keeping the exponent non-positive.
fn shifted_moments(eta: f64) -> [f64; 3] {
    let c = eta.max(0.0);
    let weight = |z: f64| (eta * z * z - c).exp();
    let i0 = integrate_adaptive(weight, 0.0, 1.0, REL_TOL);
    let i2 = integrate_adaptive(|z| z * z * weight(z), 0.0, 1.0, REL_TOL);
    let i4 = integrate_adaptive(|z| z.powi(4) * weight(z), 0.0, 1.0, REL_TOL);
    [i0, i2, i4]
}

/// Scalar order parameter `s2(η) = ∫(3x²−1)e^{ηx²}dx / (2∫e^{ηx²}dx)`.
pub fn s2(eta: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    let c = eta.max(0.0);
    let w = |z: f64| (eta * z * z - c).exp();
    // η∫(1−z²)z² e / ∫e avoids the cancellation in 3⟨x²⟩ − 1
    let num = integrate_adaptive(|z| (1.0 - z * z) * z * z * w(z), 0.0, 1.0, REL_TOL);
    let den = integrate_adaptive(w, 0.0, 1.0, REL_TOL);
    eta * num / den
}

/// `ds2/dη = 3/2 (⟨x⁴⟩ − ⟨x²⟩²)`.
pub fn s2_derivative(eta: f64) -> f64 {
    let [i0, i2, i4] = shifted_moments(eta);
    let x2 = i2 / i0;
    let x4 = i4 / i0;
    1.5 * (x4 - x2 * x2)
}

/// `ln Z(η)` with `Z = ∫_{S²} e^{η(m·ν)²} dm = 4π ∫₀¹ e^{ηz²} dz`.
pub fn log_partition(eta: f64) -> f64 {
    let c = eta.max(0.0);
    let i = integrate_adaptive(|z| (eta * z * z - c).exp(), 0.0, 1.0, REL_TOL);
    c + (4.0 * PI * i).ln()
}

fn residual(alpha: f64, eta: f64) -> f64 {
    alpha * s2(eta) - eta
}

fn bisect(alpha: f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = residual(alpha, a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() < 1e-14 * (1.0 + m.abs()) {
            break;
        }
        let fm = residual(alpha, m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn newton_polish(alpha: f64, mut eta: f64) -> f64 {
    for _ in 0..8 {
        let f = residual(alpha, eta);
        let df = alpha * s2_derivative(eta) - 1.0;
        if df.abs() < 1e-8 {
            break;
        }
        let step = f / df;
        let cand = eta - step;
        if residual(alpha, cand).abs() >= f.abs() {
            break;
        }
        eta = cand;
        if step.abs() < 1e-15 * (1.0 + eta.abs()) {
            break;
        }
    }
    eta
}

/// Golden-section maximization of `g` on `[a, b]`.
fn golden_max<F: Fn(f64) -> f64>(g: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    while (b - a).abs() > tol {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    0.5 * (a + b)
}

/// Sorted roots of `η = α s2(η)` on the scan window `[−20, 40]`.
///
/// Always contains `0`. Transversal roots are isolated by sign changes on a
/// 0.05 lattice; tangential (double) roots are found at local extrema of the
/// residual whose magnitude falls below `1e-9`.
pub fn solve_eta(alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Input(format!("alpha must be positive, got {alpha}")));
    }
    const H: f64 = 0.05;
    const TANGENT_TOL: f64 = 1e-9;
    let (lo, hi) = (-400i64, 800i64);
    let etas: Vec<f64> = (lo..=hi).map(|i| i as f64 * H).collect();
    let vals: Vec<f64> = etas.iter().map(|&e| residual(alpha, e)).collect();
    let mut roots = vec![0.0];
    let slope0 = alpha * 2.0 / 15.0 - 1.0;

    for i in 0..vals.len() - 1 {
        let (a, b) = (etas[i], etas[i + 1]);
        let (fa, fb) = (vals[i], vals[i + 1]);
        if a == 0.0 || b == 0.0 {
            // the cell touching η = 0: look for a root strictly inside
            let inner = if a == 0.0 { H * 1e-4 } else { -H * 1e-4 };
            let far = if a == 0.0 { b } else { a };
            let finner = residual(alpha, inner);
            let ffar = if a == 0.0 { fb } else { fa };
            if finner * ffar < 0.0 && slope0.abs() > 1e-12 {
                let (x0, x1) = if inner < far { (inner, far) } else { (far, inner) };
                roots.push(newton_polish(alpha, bisect(alpha, x0, x1)));
            }
            continue;
        }
        if fa * fb < 0.0 {
            roots.push(newton_polish(alpha, bisect(alpha, a, b)));
        }
    }
    // tangential roots: interior local maxima of a negative residual or
    // minima of a positive one, with no sign change nearby
    for i in 1..vals.len() - 1 {
        if etas[i] == 0.0 || etas[i - 1] == 0.0 || etas[i + 1] == 0.0 {
            continue;
        }
        let (fl, fc, fr) = (vals[i - 1], vals[i], vals[i + 1]);
        let is_max = fc < 0.0 && fc >= fl && fc >= fr && fl < 0.0 && fr < 0.0;
        let is_min = fc > 0.0 && fc <= fl && fc <= fr && fl > 0.0 && fr > 0.0;
        if !(is_max || is_min) {
            continue;
        }
        let sign = if is_max { 1.0 } else { -1.0 };
        let ext = golden_max(|e| sign * residual(alpha, e), etas[i - 1], etas[i + 1], 1e-10);
        let fext = residual(alpha, ext);
        if fext.abs() <= TANGENT_TOL {
            roots.push(ext);
        } else if fext * fc < 0.0 {
            // the extremum crosses zero: two nearby simple roots
            roots.push(newton_polish(alpha, bisect(alpha, etas[i - 1], ext)));
            roots.push(newton_polish(alpha, bisect(alpha, ext, etas[i + 1])));
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    Ok(roots)
}

/// `∫e^{ηx²}dx / ∫x²(1−x²)e^{ηx²}dx` over `[−1, 1]`.
fn critical_ratio(eta: f64) -> f64 {
    let c = eta.max(0.0);
    let w = |z: f64| (eta * z * z - c).exp();
    let num = integrate_adaptive(w, 0.0, 1.0, REL_TOL);
    let den = integrate_adaptive(|z| z * z * (1.0 - z * z) * w(z), 0.0, 1.0, REL_TOL);
    num / den
}

/// The minimizer `η*` of the critical ratio on `[0, 20]`.
pub fn eta_star() -> f64 {
    golden_max(|e| -critical_ratio(e), 0.0, 20.0, 1e-10)
}

/// Threshold intensity above which nonzero equilibria exist.
pub fn alpha_star() -> f64 {
    critical_ratio(eta_star())
}

/// Maier-Saupe constants on the stable (largest-root) branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumParams {
    pub alpha: f64,
    pub eta: f64,
    pub s2: f64,
    pub z: f64,
    pub log_z: f64,
    pub e0: f64,
}

impl EquilibriumParams {
    pub fn new(alpha: f64) -> Result<Self> {
        let roots = solve_eta(alpha)?;
        let eta = *roots.last().expect("solve_eta always returns 0");
        Ok(Self::from_eta(alpha, eta))
    }

    /// Constants for an explicit `η` (not necessarily self-consistent).
    pub fn from_eta(alpha: f64, eta: f64) -> Self {
        let s = s2(eta);
        let log_z = log_partition(eta);
        let e0 = eta * (2.0 * s + 1.0) / 3.0 - log_z + alpha / 3.0 - alpha / 3.0 * s * s;
        EquilibriumParams { alpha, eta, s2: s, z: log_z.exp(), log_z, e0 }
    }
}

/// `h_ν(m) = e^{η(m·ν)²} / Z` sampled on `grid`.
pub fn equilibrium_density(nu: &Vec3, eta: f64, grid: &Arc<SphereGrid>) -> Result<SphereField> {
    let n = crate::tensor::norm(nu);
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::Input(format!("director must be a unit vector, |nu| = {n}")));
    }
    let log_z = log_partition(eta);
    Ok(SphereField::from_fn(Arc::clone(grid), |m| {
        let c = crate::tensor::dot(m, nu);
        (eta * c * c - log_z).exp()
    }))
}

/// `E₀[f] = ∫ f ln f + α/3 − (α/2)|Q[f]|²`.
pub fn bulk_energy(f: &SphereField, alpha: f64) -> Result<f64> {
    bulk_energy_values(f.grid(), f.values(), alpha)
}

pub(crate) fn bulk_energy_values(grid: &SphereGrid, values: &[f64], alpha: f64) -> Result<f64> {
    let mut entropy = 0.0;
    for (&v, &w) in values.iter().zip(grid.weights()) {
        if !(v > 0.0) {
            return Err(Error::Domain(format!("density must be positive, found {v:e}")));
        }
        entropy += w * v * v.ln();
    }
    let q = grid.second_moment_values(values);
    Ok(entropy + alpha / 3.0 - 0.5 * alpha * q.ddot(&q))
}

/// Node values of `α(2/3 − m⊗m : A)`.
pub fn potential_values(grid: &SphereGrid, alpha: f64, a: &QTensor) -> Vec<f64> {
    grid.sample(|m| alpha * (2.0 / 3.0 - a.quadratic(m)))
}

/// Mean-field potential `U₀[f] = α(2/3 − m⊗m : Q[f])` of a unit-mass density.
pub fn u0_potential(f: &SphereField, alpha: f64) -> SphereField {
    let q = f.grid().second_moment_values(f.values());
    SphereField::new(Arc::clone(f.grid()), potential_values(f.grid(), alpha, &q))
        .expect("potential is finite")
}

/// Traceless basis of symmetric matrices, orthonormal for `A : B`.
fn traceless_basis() -> [QTensor; 5] {
    let r2 = 2f64.sqrt();
    let r6 = 6f64.sqrt();
    [
        QTensor([1.0 / r2, -1.0 / r2, 0.0, 0.0, 0.0, 0.0]),
        QTensor([-1.0 / r6, -1.0 / r6, 2.0 / r6, 0.0, 0.0, 0.0]),
        QTensor([0.0, 0.0, 0.0, 1.0 / r2, 0.0, 0.0]),
        QTensor([0.0, 0.0, 0.0, 0.0, 1.0 / r2, 0.0]),
        QTensor([0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / r2]),
    ]
}

/// Moments of the Bingham density `e^{B:m⊗m}/Z` on a quadrature grid.
#[derive(Clone, Debug)]
pub struct BinghamMoments {
    pub log_z: f64,
    pub q: QTensor,
    pub m4: S4Tensor,
}

/// Quadrature grid used for Bingham moments.
pub fn bingham_grid() -> Arc<SphereGrid> {
    build_grid(32).expect("valid band limit")
}

pub fn bingham_moments(b: &QTensor, grid: &SphereGrid) -> BinghamMoments {
    let expo: Vec<f64> = grid.nodes().iter().map(|m| b.quadratic(m)).collect();
    let shift = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vals: Vec<f64> = expo.iter().map(|e| (e - shift).exp()).collect();
    let z = grid.integrate_values(&vals);
    let scaled: Vec<f64> = vals.iter().map(|v| v / z).collect();
    BinghamMoments {
        log_z: shift + z.ln(),
        q: grid.second_moment_values(&scaled),
        m4: grid.fourth_moment_values(&scaled),
    }
}

fn check_feasible(q: &QTensor) -> Result<()> {
    if !q.is_finite() {
        return Err(Error::InfeasibleMoment("tensor has non-finite entries".into()));
    }
    if q.trace().abs() > 1e-10 {
        return Err(Error::InfeasibleMoment(format!("trace {:e} is not zero", q.trace())));
    }
    let e = q.eigenvalues();
    if e[0] <= -1.0 / 3.0 || e[2] >= 2.0 / 3.0 {
        return Err(Error::InfeasibleMoment(format!(
            "eigenvalues [{:.6}, {:.6}, {:.6}] outside (-1/3, 2/3)",
            e[0], e[1], e[2]
        )));
    }
    Ok(())
}

/// The traceless Bingham parameter `B` with `Q[e^{B:m⊗m}/Z] = Q`, by
/// damped Newton iteration on the convex dual `ln Z(B) − B:Q`.
pub fn bingham_map(q: &QTensor) -> Result<QTensor> {
    bingham_map_on(q, &bingham_grid(), QTensor::ZERO)
}

/// As [`bingham_map`] with an explicit grid and initial guess.
pub fn bingham_map_on(q: &QTensor, grid: &SphereGrid, guess: QTensor) -> Result<QTensor> {
    check_feasible(q)?;
    let basis = traceless_basis();
    let coords = |t: &QTensor| Vector5::from_fn(|k, _| t.ddot(&basis[k]));
    let tensor = |v: &Vector5<f64>| {
        basis.iter().zip(v.iter()).fold(QTensor::ZERO, |acc, (e, &c)| acc + *e * c)
    };
    let target = coords(q);
    let mut b = coords(&guess.deviatoric());
    let mut mom = bingham_moments(&tensor(&b), grid);
    let objective = |mom: &BinghamMoments, b: &Vector5<f64>| mom.log_z - b.dot(&target);
    let mut phi = objective(&mom, &b);
    let tol = 1e-13;
    for _ in 0..50 {
        let grad = coords(&mom.q) - target;
        let gnorm = grad.norm();
        if gnorm < tol {
            return Ok(tensor(&b));
        }
        let ek: Vec<QTensor> = basis.iter().map(|e| mom.m4.contract(e)).collect();
        let mean = coords(&mom.q);
        let hess = Matrix5::from_fn(|k, l| ek[k].ddot(&basis[l]) - mean[k] * mean[l]);
        let step = match hess.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad,
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = b - step * t;
            let cmom = bingham_moments(&tensor(&cand), grid);
            let cphi = objective(&cmom, &cand);
            if cphi.is_finite() && cphi <= phi - 1e-4 * t * grad.dot(&step) + 1e-15 * phi.abs() {
                b = cand;
                mom = cmom;
                phi = cphi;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let res = (coords(&mom.q) - target).norm();
    if res < 1e-10 {
        Ok(tensor(&b))
    } else {
        Err(Error::Convergence { iterations: 50, residual: res })
    }
}
