//! Gaussian interaction kernel on a periodic torus and the Fourier
//! multipliers built from it: mollification by `k_ε`, `L_ε = (I − k_ε*)/ε`
//! and its square root `T_ε`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::QTensor;

/// Gaussian kernel `k(x) = (a/π)^{d/2} e^{−a|x|²}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub a: f64,
    pub d: usize,
    /// `∫|x|² k dx = d / (2a)`.
    pub mu: f64,
    /// Constant in `c0 |ξ|² k̂² ≤ 1 − k̂`.
    pub c0: f64,
}

impl KernelSpec {
    pub fn gaussian(a: f64, d: usize) -> Result<Self> {
        if !(a > 0.0 && a < PI) {
            return Err(Error::Config(format!("kernel width a must lie in (0, pi), got {a}")));
        }
        if !(d == 1 || d == 2) {
            return Err(Error::Config(format!("spatial dimension must be 1 or 2, got {d}")));
        }
        Ok(KernelSpec { a, d, mu: d as f64 / (2.0 * a), c0: PI * PI / a })
    }

    /// Same kernel with a different second-moment constant (for scaling checks).
    pub fn with_mu(self, mu: f64) -> Self {
        KernelSpec { mu, ..self }
    }

    /// Minimum of `(1 − k̂)/(|ξ|² k̂²)` over the nonzero rescaled lattice
    /// frequencies `√ε ξ`, clamped to `π²/a`.
    pub fn certify_c0(&self, grid: &TorusGrid, eps: f64) -> f64 {
        let se = eps.sqrt();
        let mut c = PI * PI / self.a;
        for s in 0..grid.num_sites() {
            let xi: Vec<f64> = grid.frequency(s).iter().map(|v| v * se).collect();
            let r2: f64 = xi.iter().map(|v| v * v).sum();
            if r2 == 0.0 {
                continue;
            }
            let k = khat(self, &xi);
            let ratio = one_minus_khat(self, &xi) / (r2 * k * k);
            if ratio.is_finite() {
                c = c.min(ratio);
            }
        }
        c
    }
}

/// `k̂(ξ) = e^{−π²|ξ|²/a}`.
pub fn khat(spec: &KernelSpec, xi: &[f64]) -> f64 {
    let r2: f64 = xi.iter().map(|v| v * v).sum();
    (-PI * PI * r2 / spec.a).exp()
}

fn one_minus_khat(spec: &KernelSpec, xi: &[f64]) -> f64 {
    let r2: f64 = xi.iter().map(|v| v * v).sum();
    -(-PI * PI * r2 / spec.a).exp_m1()
}

/// `h(ξ) = ξ √((1 − k̂(ξ))/|ξ|²)`, with `h(0) = 0`.
pub fn h_multiplier(spec: &KernelSpec, xi: &[f64]) -> Vec<f64> {
    let r2: f64 = xi.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return vec![0.0; xi.len()];
    }
    let s = (one_minus_khat(spec, xi) / r2).sqrt();
    xi.iter().map(|v| v * s).collect()
}

/// `(1/ε) ∫_{|x| ≥ δ/√ε} k(x) dx` in closed form.
pub fn tail_mass(spec: &KernelSpec, delta: f64, eps: f64) -> f64 {
    let r = delta / eps.sqrt();
    let outside = match spec.d {
        1 => statrs::function::erf::erfc(spec.a.sqrt() * r),
        _ => (-spec.a * r * r).exp(),
    };
    outside / eps
}

/// Periodic grid `[0, X)^d` with `n` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGrid {
    pub d: usize,
    pub length: f64,
    pub n: usize,
}

impl TorusGrid {
    pub fn new(d: usize, length: f64, n: usize) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return Err(Error::Config(format!("torus dimension must be 1 or 2, got {d}")));
        }
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::Config(format!("nodes per axis must be a power of two, got {n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("torus length must be positive, got {length}")));
        }
        Ok(TorusGrid { d, length, n })
    }

    pub fn num_sites(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    /// Multi-index of a site (axis 0 slowest).
    pub fn index(&self, site: usize) -> Vec<usize> {
        let mut idx = vec![0; self.d];
        let mut s = site;
        for k in (0..self.d).rev() {
            idx[k] = s % self.n;
            s /= self.n;
        }
        idx
    }

    /// Periodic neighbour of `site` one node forward (`forward`) or
    /// backward along `axis`.
    pub fn neighbor(&self, site: usize, axis: usize, forward: bool) -> usize {
        let stride = self.n.pow((self.d - 1 - axis) as u32);
        let i = (site / stride) % self.n;
        let j = if forward { (i + 1) % self.n } else { (i + self.n - 1) % self.n };
        site - i * stride + j * stride
    }

    pub fn position(&self, site: usize) -> Vec<f64> {
        self.index(site).iter().map(|&i| i as f64 * self.spacing()).collect()
    }

    fn axis_frequency(&self, k: usize) -> f64 {
        let kk = if k <= self.n / 2 { k as f64 } else { k as f64 - self.n as f64 };
        kk / self.length
    }

    /// Frequency vector `ξ ∈ (Z/X)^d` of the Fourier mode stored at `site`.
    pub fn frequency(&self, site: usize) -> Vec<f64> {
        self.index(site).iter().map(|&k| self.axis_frequency(k)).collect()
    }

    fn is_nyquist(&self, k: usize) -> bool {
        k == self.n / 2
    }

    /// Discrete `L²` norm `(Σ |u|² h^d)^{1/2}`.
    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        (u.iter().map(|v| v * v).sum::<f64>() * self.cell_volume()).sqrt()
    }

    pub fn l2_norm_complex(&self, u: &[Complex64]) -> f64 {
        (u.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_volume()).sqrt()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * self.cell_volume()
    }

    /// In-place d-dimensional FFT; the inverse includes the `1/N` factor.
    pub fn fft(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.num_sites());
        let plan = fft_plan(self.n, inverse);
        let n = self.n;
        match self.d {
            1 => plan.process(data),
            _ => {
                // rows are contiguous (axis 1), then columns via a scratch line
                plan.process(data);
                let mut line = vec![Complex64::new(0.0, 0.0); n];
                for col in 0..n {
                    for row in 0..n {
                        line[row] = data[row * n + col];
                    }
                    plan.process(&mut line);
                    for row in 0..n {
                        data[row * n + col] = line[row];
                    }
                }
            }
        }
        if inverse {
            let s = 1.0 / self.num_sites() as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn forward(&self, u: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft(&mut data, false);
        data
    }

    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.fft(&mut data, true);
        data.into_iter().map(|v| v.re).collect()
    }

    /// Applies a real, even Fourier multiplier to a real field.
    pub fn apply_multiplier(&self, u: &[f64], mult: &[f64]) -> Vec<f64> {
        let mut data = self.forward(u);
        for (v, m) in data.iter_mut().zip(mult) {
            *v *= *m;
        }
        self.inverse_real(data)
    }

    /// Spectral gradient (multiplier `2πiξ`, Nyquist modes dropped).
    pub fn gradient(&self, u: &[f64]) -> Vec<Vec<f64>> {
        let hat = self.forward(u);
        (0..self.d)
            .map(|axis| {
                let mut data = hat.clone();
                for (s, v) in data.iter_mut().enumerate() {
                    let k = self.index(s)[axis];
                    if self.is_nyquist(k) {
                        *v = Complex64::new(0.0, 0.0);
                    } else {
                        *v *= Complex64::new(0.0, 2.0 * PI * self.axis_frequency(k));
                    }
                }
                self.inverse_real(data)
            })
            .collect()
    }

    /// Spectral Laplacian (multiplier `−4π²|ξ|²`).
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mult: Vec<f64> = (0..self.num_sites())
            .map(|s| {
                let xi = self.frequency(s);
                -4.0 * PI * PI * xi.iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        self.apply_multiplier(u, &mult)
    }
}

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

fn fft_plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = PLANNER.lock().unwrap_or_else(|e| e.into_inner());
    if inverse {
        p.plan_fft_inverse(n)
    } else {
        p.plan_fft_forward(n)
    }
}

type TableKey = (usize, usize, u64, u64, u64);

static KHAT_TABLES: Lazy<Mutex<HashMap<TableKey, Arc<Vec<f64>>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

/// Cached table of `k̂(√ε ξ)` over the frequency lattice.
pub fn khat_table(grid: &TorusGrid, spec: &KernelSpec, eps: f64) -> Arc<Vec<f64>> {
    let key = (grid.d, grid.n, grid.length.to_bits(), spec.a.to_bits(), eps.to_bits());
    let mut cache = KHAT_TABLES.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(t) = cache.get(&key) {
        return Arc::clone(t);
    }
    let se = eps.sqrt();
    let table: Vec<f64> = (0..grid.num_sites())
        .map(|s| {
            let xi: Vec<f64> = grid.frequency(s).iter().map(|v| v * se).collect();
            khat(spec, &xi)
        })
        .collect();
    let t = Arc::new(table);
    cache.insert(key, Arc::clone(&t));
    t
}

/// `(1 − k̂(√ε ξ))/ε` over the lattice.
pub fn l_eps_table(grid: &TorusGrid, spec: &KernelSpec, eps: f64) -> Vec<f64> {
    let se = eps.sqrt();
    (0..grid.num_sites())
        .map(|s| {
            let xi: Vec<f64> = grid.frequency(s).iter().map(|v| v * se).collect();
            one_minus_khat(spec, &xi) / eps
        })
        .collect()
}

fn check_eps(eps: f64) {
    assert!(eps > 0.0 && eps.is_finite(), "eps must be positive");
}

/// `u * k_ε` on the torus.
pub fn convolve_keps(grid: &TorusGrid, spec: &KernelSpec, u: &[f64], eps: f64) -> Vec<f64> {
    check_eps(eps);
    grid.apply_multiplier(u, &khat_table(grid, spec, eps))
}

/// `L_ε u = (u − u * k_ε)/ε`.
pub fn apply_l_eps(grid: &TorusGrid, spec: &KernelSpec, u: &[f64], eps: f64) -> Vec<f64> {
    check_eps(eps);
    grid.apply_multiplier(u, &l_eps_table(grid, spec, eps))
}

/// `T_ε u`, one complex field per spatial direction.
pub fn apply_t_eps(grid: &TorusGrid, spec: &KernelSpec, u: &[f64], eps: f64) -> Vec<Vec<Complex64>> {
    check_eps(eps);
    let hat = grid.forward(u);
    let se = eps.sqrt();
    let mults: Vec<Vec<f64>> = (0..grid.num_sites())
        .map(|s| {
            let xi: Vec<f64> = grid.frequency(s).iter().map(|v| v * se).collect();
            h_multiplier(spec, &xi).into_iter().map(|h| h / se).collect()
        })
        .collect();
    (0..grid.d)
        .map(|k| {
            let mut data: Vec<Complex64> = hat.iter().zip(&mults).map(|(v, m)| v * m[k]).collect();
            grid.fft(&mut data, true);
            data
        })
        .collect()
}

/// One traceless symmetric tensor per torus site.
#[derive(Clone, Debug)]
pub struct QTensorField {
    pub grid: TorusGrid,
    pub values: Vec<QTensor>,
}

impl QTensorField {
    pub fn new(grid: TorusGrid, values: Vec<QTensor>) -> Result<Self> {
        if values.len() != grid.num_sites() {
            return Err(Error::Input(format!(
                "tensor field has {} sites, grid has {}",
                values.len(),
                grid.num_sites()
            )));
        }
        Ok(QTensorField { grid, values })
    }

    pub fn constant(grid: TorusGrid, q: QTensor) -> Self {
        QTensorField { grid, values: vec![q; grid.num_sites()] }
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|q| q.0[c]).collect()
    }

    fn from_components(grid: TorusGrid, comps: &[Vec<f64>]) -> Self {
        let values = (0..grid.num_sites())
            .map(|s| QTensor(std::array::from_fn(|c| comps[c][s])))
            .collect();
        QTensorField { grid, values }
    }

    fn map_components<F: Fn(&[f64]) -> Vec<f64>>(&self, f: F) -> Self {
        let comps: Vec<Vec<f64>> = (0..6).map(|c| f(&self.component(c))).collect();
        Self::from_components(self.grid, &comps)
    }

    pub fn convolve_keps(&self, spec: &KernelSpec, eps: f64) -> Self {
        self.map_components(|u| convolve_keps(&self.grid, spec, u, eps))
    }

    pub fn apply_l_eps(&self, spec: &KernelSpec, eps: f64) -> Self {
        self.map_components(|u| apply_l_eps(&self.grid, spec, u, eps))
    }

    /// `Σ_x Q:P h^d`.
    pub fn inner(&self, other: &QTensorField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.ddot(b)).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn sub(&self, other: &QTensorField) -> QTensorField {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a - *b).collect();
        QTensorField { grid: self.grid, values }
    }

    /// `‖T_ε Q‖²`, summed over spatial directions and tensor entries.
    pub fn t_eps_norm_sqr(&self, spec: &KernelSpec, eps: f64) -> f64 {
        let mut total = 0.0;
        for c in 0..6 {
            let w = if c < 3 { 1.0 } else { 2.0 };
            for comp in apply_t_eps(&self.grid, spec, &self.component(c), eps) {
                total += w * self.grid.l2_norm_complex(&comp).powi(2);
            }
        }
        total
    }
}

/// `(α/4) ∬ |Q(x) − Q(y)|² k_ε(x − y) dx dy` by direct double summation
/// against the periodized discrete kernel.
pub fn doubled_energy_form(q: &QTensorField, spec: &KernelSpec, alpha: f64, eps: f64) -> f64 {
    let grid = &q.grid;
    let n = grid.num_sites();
    // discrete kernel weights c(z) with Σ_y c(x − y) u(y) = (u * k_ε)(x)
    let kernel = grid.inverse_real(khat_table(grid, spec, eps).iter().map(|&v| Complex64::new(v, 0.0)).collect());
    let idx: Vec<Vec<usize>> = (0..n).map(|s| grid.index(s)).collect();
    let offset = |x: usize, y: usize| -> usize {
        let mut s = 0;
        for k in 0..grid.d {
            s = s * grid.n + (idx[x][k] + grid.n - idx[y][k]) % grid.n;
        }
        s
    };
    let mut total = 0.0;
    for x in 0..n {
        let mut row = 0.0;
        for y in 0..n {
            if x == y {
                continue;
            }
            let diff = q.values[x] - q.values[y];
            row += diff.ddot(&diff) * kernel[offset(x, y)];
        }
        total += row;
    }
    0.25 * alpha * total * grid.cell_volume()
}

/// `(αε/2) ⟨Q, L_ε Q⟩`, the spectral form of [`doubled_energy_form`].
pub fn doubled_energy_spectral(q: &QTensorField, spec: &KernelSpec, alpha: f64, eps: f64) -> f64 {
    0.5 * alpha * eps * q.inner(&q.apply_l_eps(spec, eps))
}
