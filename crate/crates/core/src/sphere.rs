//! Functions on the unit sphere: a Gauss-Legendre × uniform-azimuth product
//! grid, real spherical-harmonic transforms, and the rotational gradient
//! `R = m ∧ ∇` together with the Laplace-Beltrami operator.
//!
//! Real harmonics are orthonormal, without Condon-Shortley phase:
//! `Y_l0 = P̄_l0`, `Y_lm = √2 P̄_lm cos mφ`, `Y_l,-m = √2 P̄_lm sin mφ`,
//! stored at index `l² + l + m`.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use once_cell::sync::{Lazy, OnceCell};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::tensor::{QTensor, S4Tensor, Vec3};

/// Index of the real harmonic `Y_lm` in a coefficient vector.
#[inline]
pub fn harmonic_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Number of coefficients for band limit `l`.
#[inline]
pub fn num_coeffs(l: usize) -> usize {
    (l + 1) * (l + 1)
}

/// Degree of the harmonic stored at `idx`.
#[inline]
pub fn degree_of(idx: usize) -> usize {
    (idx as f64).sqrt().floor() as usize
}

#[inline]
fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Orthonormal associated Legendre values `P̄_lm(x)`, `0 ≤ m ≤ l ≤ lmax`,
/// with `2π ∫ P̄_lm² dx = 1`.
fn normalized_legendre(lmax: usize, x: f64, s: f64, out: &mut [f64]) {
    out[0] = 1.0 / (4.0 * PI).sqrt();
    for m in 1..=lmax {
        let mf = m as f64;
        out[tri(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * out[tri(m - 1, m - 1)];
    }
    for m in 0..lmax {
        out[tri(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * out[tri(m, m)];
    }
    for m in 0..=lmax {
        let mf = m as f64;
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            out[tri(l, m)] = a * (x * out[tri(l - 1, m)] - b * out[tri(l - 2, m)]);
        }
    }
}

/// One component of the sparse coefficient-space matrix of `R_i`.
#[derive(Debug, Clone)]
struct SparseRows {
    rows: Vec<Vec<(u32, f64)>>,
}

impl SparseRows {
    fn apply(&self, input: &[f64], out: &mut [f64], accumulate: bool) {
        let n = input.len();
        for (r, o) in out.iter_mut().enumerate().take(n) {
            let s: f64 = self.rows[r].iter().map(|&(c, v)| v * input[c as usize]).sum();
            if accumulate {
                *o += s;
            } else {
                *o = s;
            }
        }
    }
}

/// Evaluates a real-harmonic expansion at an arbitrary unit vector.
pub fn evaluate_expansion(coeffs: &[f64], m: &Vec3) -> f64 {
    let l = degree_of(coeffs.len().max(1) - 1);
    let x = m[2].clamp(-1.0, 1.0);
    let s = (m[0] * m[0] + m[1] * m[1]).sqrt();
    let phi = m[1].atan2(m[0]);
    let mut p = vec![0.0; tri(l, l) + 1];
    normalized_legendre(l, x, s, &mut p);
    let mut v = 0.0;
    for deg in 0..=l {
        let base = deg * deg + deg;
        v += coeffs[base] * p[tri(deg, 0)];
        for mm in 1..=deg {
            let (sn, cs) = (mm as f64 * phi).sin_cos();
            let pv = SQRT_2 * p[tri(deg, mm)];
            v += pv * (coeffs[base + mm] * cs + coeffs[base - mm] * sn);
        }
    }
    v
}

/// Orthonormal zonal harmonic `P̄_l0(x) = √((2l+1)/4π) P_l(x)` for all
/// `l ≤ lmax`.
pub fn zonal_values(lmax: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; lmax + 1];
    let mut p0 = 1.0;
    let mut p1 = x;
    for l in 0..=lmax {
        let pl = match l {
            0 => 1.0,
            1 => x,
            _ => {
                let lf = l as f64;
                let p2 = ((2.0 * lf - 1.0) * x * p1 - (lf - 1.0) * p0) / lf;
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        p[l] = ((2.0 * l as f64 + 1.0) / (4.0 * PI)).sqrt() * pl;
    }
    p
}

/// Product quadrature grid on the sphere with band limit `lmax`.
#[derive(Debug)]
pub struct SphereGrid {
    lmax: usize,
    nphi: usize,
    cos_theta: Vec<f64>,
    sin_theta: Vec<f64>,
    theta_weights: Vec<f64>,
    phi: Vec<f64>,
    cos_mphi: Vec<f64>,
    sin_mphi: Vec<f64>,
    /// `nphi × (2 lmax + 1)`, columns `1, cos φ, sin φ, cos 2φ, …`.
    trig: DMatrix<f64>,
    trig_t: DMatrix<f64>,
    plm: Vec<f64>,
    dplm: Vec<f64>,
    plm_over_sin: Vec<f64>,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    rot: OnceCell<[SparseRows; 3]>,
}

static GRID_CACHE: Lazy<Mutex<HashMap<usize, Arc<SphereGrid>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

/// Shared grid for band limit `lmax` (built once per process).
pub fn build_grid(lmax: usize) -> Result<Arc<SphereGrid>> {
    if lmax < 2 {
        return Err(Error::Config(format!("sphere band limit must be at least 2, got {lmax}")));
    }
    let mut cache = GRID_CACHE.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(g) = cache.get(&lmax) {
        return Ok(Arc::clone(g));
    }
    let g = Arc::new(SphereGrid::construct(lmax));
    cache.insert(lmax, Arc::clone(&g));
    Ok(g)
}

impl SphereGrid {
    fn construct(lmax: usize) -> Self {
        let ntheta = lmax + 1;
        let nphi = 2 * lmax + 2;
        let (x, w) = gauss_legendre(ntheta);
        let s: Vec<f64> = x.iter().map(|x| (1.0 - x * x).sqrt()).collect();
        let phi: Vec<f64> = (0..nphi).map(|k| 2.0 * PI * k as f64 / nphi as f64).collect();
        let mut cos_mphi = vec![0.0; (lmax + 1) * nphi];
        let mut sin_mphi = vec![0.0; (lmax + 1) * nphi];
        for m in 0..=lmax {
            for k in 0..nphi {
                let (sn, cs) = (m as f64 * phi[k]).sin_cos();
                cos_mphi[m * nphi + k] = cs;
                sin_mphi[m * nphi + k] = sn;
            }
        }
        let nlm = tri(lmax, lmax) + 1;
        let mut plm = vec![0.0; ntheta * nlm];
        let mut dplm = vec![0.0; ntheta * nlm];
        let mut plm_over_sin = vec![0.0; ntheta * nlm];
        for j in 0..ntheta {
            let row = &mut plm[j * nlm..(j + 1) * nlm];
            normalized_legendre(lmax, x[j], s[j], row);
            for m in 0..=lmax {
                for l in m..=lmax {
                    let lf = l as f64;
                    let mf = m as f64;
                    let p = plm[j * nlm + tri(l, m)];
                    let prev = if l > m { plm[j * nlm + tri(l - 1, m)] } else { 0.0 };
                    let c = if l > m {
                        ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    dplm[j * nlm + tri(l, m)] = (lf * x[j] * p - c * prev) / s[j];
                    plm_over_sin[j * nlm + tri(l, m)] = p / s[j];
                }
            }
        }
        let dphi = 2.0 * PI / nphi as f64;
        let mut nodes = Vec::with_capacity(ntheta * nphi);
        let mut weights = Vec::with_capacity(ntheta * nphi);
        for j in 0..ntheta {
            for k in 0..nphi {
                let (sp, cp) = phi[k].sin_cos();
                nodes.push([s[j] * cp, s[j] * sp, x[j]]);
                weights.push(w[j] * dphi);
            }
        }
        let mut grid = SphereGrid {
            lmax,
            nphi,
            cos_theta: x,
            sin_theta: s,
            theta_weights: w,
            phi,
            trig: DMatrix::from_fn(nphi, 2 * lmax + 1, |k, c| match c {
                0 => 1.0,
                c if c % 2 == 1 => cos_mphi[c.div_ceil(2) * nphi + k],
                c => sin_mphi[(c / 2) * nphi + k],
            }),
            trig_t: DMatrix::zeros(0, 0),
            cos_mphi,
            sin_mphi,
            plm,
            dplm,
            plm_over_sin,
            nodes,
            weights,
            rot: OnceCell::new(),
        };
        grid.trig_t = grid.trig.transpose();
        grid
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn ntheta(&self) -> usize {
        self.lmax + 1
    }

    pub fn nphi(&self) -> usize {
        self.nphi
    }

    pub fn num_nodes(&self) -> usize {
        self.ntheta() * self.nphi
    }

    pub fn num_coeffs(&self) -> usize {
        num_coeffs(self.lmax)
    }

    /// Colatitudes of the Gauss-Legendre rings.
    pub fn theta_nodes(&self) -> Vec<f64> {
        self.cos_theta.iter().map(|x| x.acos()).collect()
    }

    pub fn theta_weights(&self) -> &[f64] {
        &self.theta_weights
    }

    pub fn phi_nodes(&self) -> &[f64] {
        &self.phi
    }

    /// Unit vectors `m` at the nodes, ring-major.
    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    /// Quadrature weight of every node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Samples `f(m)` at the nodes.
    pub fn sample<F: Fn(&Vec3) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(f).collect()
    }

    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    fn nlm(&self) -> usize {
        tri(self.lmax, self.lmax) + 1
    }

    /// Forward transform truncated to degree `lcut ≤ lmax`; exact for
    /// node values of band-limited functions.
    pub fn analyze_to(&self, values: &[f64], lcut: usize) -> Vec<f64> {
        assert_eq!(values.len(), self.num_nodes(), "field does not match grid");
        let lcut = lcut.min(self.lmax);
        let nphi = self.nphi;
        let nlm = self.nlm();
        let dphi = 2.0 * PI / nphi as f64;
        let mut coeffs = vec![0.0; num_coeffs(lcut)];
        let v = DMatrixView::from_slice(values, nphi, self.ntheta());
        let fourier = self.trig_t.rows(0, 2 * lcut + 1) * v;
        for j in 0..self.ntheta() {
            let col = fourier.column(j);
            let cm = |m: usize| if m == 0 { col[0] } else { col[2 * m - 1] };
            let sm = |m: usize| col[2 * m];
            let wj = self.theta_weights[j] * dphi;
            let p = &self.plm[j * nlm..(j + 1) * nlm];
            for l in 0..=lcut {
                let base = l * l + l;
                coeffs[base] += wj * p[tri(l, 0)] * cm(0);
                for m in 1..=l {
                    let pw = wj * SQRT_2 * p[tri(l, m)];
                    coeffs[base + m] += pw * cm(m);
                    coeffs[base - m] += pw * sm(m);
                }
            }
        }
        coeffs
    }

    pub fn analyze(&self, values: &[f64]) -> Vec<f64> {
        self.analyze_to(values, self.lmax)
    }

    /// Inverse transform; `coeffs` may be shorter than the grid's band limit.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_nodes()];
        self.synthesize_with(coeffs, &self.plm, false, &mut out);
        out
    }

    /// `∂θ f` at the nodes.
    pub fn synthesize_dtheta(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_nodes()];
        self.synthesize_with(coeffs, &self.dplm, false, &mut out);
        out
    }

    /// `(1/sinθ) ∂φ f` at the nodes.
    pub fn synthesize_dphi_over_sin(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_nodes()];
        self.synthesize_with(coeffs, &self.plm_over_sin, true, &mut out);
        out
    }

    fn synthesize_with(&self, coeffs: &[f64], table: &[f64], dphi: bool, out: &mut [f64]) {
        let lc = degree_of(coeffs.len().max(1) - 1);
        assert_eq!(num_coeffs(lc), coeffs.len(), "coefficient vector length must be a square");
        assert!(lc <= self.lmax, "coefficients exceed grid band limit");
        let nphi = self.nphi;
        let nlm = self.nlm();
        let ntheta = self.ntheta();
        let mut fourier = DMatrix::zeros(2 * lc + 1, ntheta);
        for j in 0..ntheta {
            let p = &table[j * nlm..(j + 1) * nlm];
            let mut col = fourier.column_mut(j);
            for l in 0..=lc {
                let base = l * l + l;
                col[0] += coeffs[base] * p[tri(l, 0)];
                for m in 1..=l {
                    let pv = SQRT_2 * p[tri(l, m)];
                    col[2 * m - 1] += coeffs[base + m] * pv;
                    col[2 * m] += coeffs[base - m] * pv;
                }
            }
            if dphi {
                col[0] = 0.0;
                for m in 1..=lc {
                    let (a, b) = (col[2 * m - 1], col[2 * m]);
                    col[2 * m - 1] = m as f64 * b;
                    col[2 * m] = -(m as f64) * a;
                }
            }
        }
        let mut o = DMatrixViewMut::from_slice(out, nphi, ntheta);
        o.gemm(1.0, &self.trig.columns(0, 2 * lc + 1), &fourier, 0.0);
    }

    fn rot_matrices(&self) -> &[SparseRows; 3] {
        self.rot.get_or_init(|| {
            let n = self.num_coeffs();
            let mut rows: [Vec<Vec<(u32, f64)>>; 3] = [vec![Vec::new(); n], vec![Vec::new(); n], vec![Vec::new(); n]];
            let mut unit = vec![0.0; n];
            for b in 0..n {
                unit[b] = 1.0;
                let dth = self.synthesize_dtheta(&unit);
                let dph = self.synthesize_dphi_over_sin(&unit);
                unit[b] = 0.0;
                let l = degree_of(b);
                let mut comp = [vec![0.0; self.num_nodes()], vec![0.0; self.num_nodes()], vec![0.0; self.num_nodes()]];
                for j in 0..self.ntheta() {
                    let ct = self.cos_theta[j];
                    for k in 0..self.nphi {
                        let i = j * self.nphi + k;
                        let (sp, cp) = (self.sin_mphi[self.nphi + k], self.cos_mphi[self.nphi + k]);
                        comp[0][i] = -sp * dth[i] - ct * cp * dph[i];
                        comp[1][i] = cp * dth[i] - ct * sp * dph[i];
                        comp[2][i] = self.sin_theta[j] * dph[i];
                    }
                }
                for (c, values) in comp.iter().enumerate() {
                    let coeffs = self.analyze_to(values, l);
                    for (r, &v) in coeffs.iter().enumerate().skip(l * l) {
                        if v.abs() > 1e-13 {
                            rows[c][r].push((b as u32, v));
                        }
                    }
                }
            }
            rows.map(|rows| SparseRows { rows })
        })
    }

    /// Applies `R_i` (i = 0, 1, 2) in coefficient space. Works for any
    /// coefficient vector up to the grid band limit.
    pub fn apply_rot(&self, i: usize, coeffs: &[f64], out: &mut [f64]) {
        self.rot_matrices()[i].apply(coeffs, out, false);
    }

    /// Accumulates `R_i coeffs` into `out`.
    pub fn apply_rot_add(&self, i: usize, coeffs: &[f64], out: &mut [f64]) {
        self.rot_matrices()[i].apply(coeffs, out, true);
    }

    /// Laplace-Beltrami eigenvalues applied in place.
    pub fn apply_laplacian(&self, coeffs: &mut [f64]) {
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let l = degree_of(idx) as f64;
            *c *= -l * (l + 1.0);
        }
    }

    /// `∫ (m⊗m − I/3) f dm`.
    pub fn second_moment_values(&self, values: &[f64]) -> QTensor {
        let mut acc = [0.0; 6];
        for ((m, &w), &f) in self.nodes.iter().zip(&self.weights).zip(values) {
            let wf = w * f;
            acc[0] += wf * m[0] * m[0];
            acc[1] += wf * m[1] * m[1];
            acc[2] += wf * m[2] * m[2];
            acc[3] += wf * m[0] * m[1];
            acc[4] += wf * m[0] * m[2];
            acc[5] += wf * m[1] * m[2];
        }
        // subtract the trace part exactly so the result is traceless to round-off
        QTensor(acc).deviatoric()
    }

    /// `∫ m⊗m⊗m⊗m f dm`.
    pub fn fourth_moment_values(&self, values: &[f64]) -> S4Tensor {
        let mut t = S4Tensor::default();
        for ((m, &w), &f) in self.nodes.iter().zip(&self.weights).zip(values) {
            t.add_outer4(m, w * f);
        }
        t
    }
}

/// Node values of a scalar function on a sphere grid.
#[derive(Clone, Debug)]
pub struct SphereField {
    grid: Arc<SphereGrid>,
    values: Vec<f64>,
}

impl SphereField {
    pub fn new(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::Input(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.num_nodes()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("field contains non-finite values".into()));
        }
        Ok(SphereField { grid, values })
    }

    pub fn from_fn<F: Fn(&Vec3) -> f64>(grid: Arc<SphereGrid>, f: F) -> Self {
        let values = grid.sample(f);
        SphereField { grid, values }
    }

    pub fn from_coeffs(grid: Arc<SphereGrid>, coeffs: &[f64]) -> Self {
        let values = grid.synthesize(coeffs);
        SphereField { grid, values }
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn coeffs(&self) -> Vec<f64> {
        self.grid.analyze(&self.values)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> SphereField {
        SphereField { grid: Arc::clone(&self.grid), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &SphereField) -> SphereField {
        self.zip(other, |a, b| a * b)
    }

    pub fn zip<F: Fn(f64, f64) -> f64>(&self, other: &SphereField, f: F) -> SphereField {
        assert!(Arc::ptr_eq(&self.grid, &other.grid) || self.grid.lmax == other.grid.lmax);
        SphereField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &SphereField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn integrate(f: &SphereField) -> f64 {
    f.grid.integrate_values(&f.values)
}

/// Componentwise `(R_1 f, R_2 f, R_3 f)`.
pub fn rot_grad(f: &SphereField) -> [SphereField; 3] {
    let g = &f.grid;
    let c = g.analyze(&f.values);
    let mut rc = vec![0.0; c.len()];
    [0, 1, 2].map(|i| {
        g.apply_rot(i, &c, &mut rc);
        SphereField::from_coeffs(Arc::clone(g), &rc)
    })
}

/// `R · v`.
pub fn div_rot(v: &[SphereField; 3]) -> SphereField {
    let g = &v[0].grid;
    let mut acc = vec![0.0; g.num_coeffs()];
    for (i, comp) in v.iter().enumerate() {
        let c = g.analyze(&comp.values);
        g.apply_rot_add(i, &c, &mut acc);
    }
    SphereField::from_coeffs(Arc::clone(g), &acc)
}

pub fn laplace_beltrami(f: &SphereField) -> SphereField {
    let mut c = f.coeffs();
    f.grid.apply_laplacian(&mut c);
    SphereField::from_coeffs(Arc::clone(&f.grid), &c)
}

pub fn second_moment(f: &SphereField) -> QTensor {
    f.grid.second_moment_values(&f.values)
}

pub fn fourth_moment(f: &SphereField) -> S4Tensor {
    f.grid.fourth_moment_values(&f.values)
}
