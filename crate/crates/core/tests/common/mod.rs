#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use onsager_core::sphere::{num_coeffs, SphereField, SphereGrid};
use onsager_core::tensor::{QTensor, Vec3};
use rand::Rng;

/// Coefficients of a random field of degree `≤ lmax`, unit-variance entries.
pub fn random_coeffs<R: Rng>(rng: &mut R, lmax: usize) -> Vec<f64> {
    (0..num_coeffs(lmax)).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_field<R: Rng>(rng: &mut R, grid: &Arc<SphereGrid>) -> SphereField {
    SphereField::from_coeffs(Arc::clone(grid), &random_coeffs(rng, grid.lmax()))
}

/// Positive band-limited probability density: `(1 + small perturbation)/4π`.
pub fn random_density<R: Rng>(rng: &mut R, grid: &Arc<SphereGrid>, lcut: usize, amplitude: f64) -> Vec<f64> {
    let mut c = vec![0.0; grid.num_coeffs()];
    for v in c.iter_mut().take(num_coeffs(lcut)).skip(1) {
        *v = rng.gen_range(-1.0..1.0);
    }
    let pert = grid.synthesize(&c);
    let scale = amplitude / pert.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    pert.iter().map(|p| (1.0 + scale * p) / (4.0 * PI)).collect()
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v: Vec3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

pub fn random_symmetric<R: Rng>(rng: &mut R) -> QTensor {
    QTensor(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
}

pub fn random_traceless<R: Rng>(rng: &mut R, scale: f64) -> QTensor {
    (random_symmetric(rng) * scale).deviatoric()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
