#![allow(clippy::needless_range_loop)]

mod common;

use std::f64::consts::PI;

use common::*;
use onsager_core::kernel::*;
use onsager_core::tensor::QTensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mode(grid: &TorusGrid, k: &[f64]) -> Vec<f64> {
    (0..grid.num_sites())
        .map(|s| {
            let x = grid.position(s);
            let phase: f64 = x.iter().zip(k).map(|(x, k)| 2.0 * PI * k * x / grid.length).sum();
            phase.cos()
        })
        .collect()
}

fn random_grid_field<R: Rng>(rng: &mut R, grid: &TorusGrid) -> Vec<f64> {
    (0..grid.num_sites()).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn spec_validation() {
    assert!(KernelSpec::gaussian(0.0, 1).is_err());
    assert!(KernelSpec::gaussian(PI, 1).is_err());
    assert!(KernelSpec::gaussian(1.0, 3).is_err());
    let s = KernelSpec::gaussian(0.5, 2).unwrap();
    assert!((s.mu - 2.0).abs() < 1e-15);
    assert!(TorusGrid::new(1, 1.0, 12).is_err());
    assert!(TorusGrid::new(3, 1.0, 8).is_err());
    assert!(TorusGrid::new(1, -1.0, 8).is_err());
}

#[test]
fn fourier_transform_moments() {
    for (a, d) in [(1.0, 1), (0.7, 2), (2.5, 2)] {
        let spec = KernelSpec::gaussian(a, d).unwrap();
        let zero = vec![0.0; d];
        assert!((khat(&spec, &zero) - 1.0).abs() < 1e-15);
        // finite-difference gradient and Hessian trace at the origin
        let h = 1e-4;
        let mut lap = 0.0;
        for i in 0..d {
            let mut p = zero.clone();
            let mut m = zero.clone();
            p[i] = h;
            m[i] = -h;
            let (kp, km) = (khat(&spec, &p), khat(&spec, &m));
            assert!(((kp - km) / (2.0 * h)).abs() < 1e-10);
            lap += (kp - 2.0 + km) / (h * h);
        }
        let expect = -4.0 * PI * PI * spec.mu;
        assert!((lap - expect).abs() < 1e-5 * expect.abs(), "{lap} vs {expect}");
    }
}

#[test]
fn kernel_integrates_to_one_in_real_space() {
    // Riemann sum of (a/π)^{d/2} e^{−a|x|²} on a fine lattice
    for (a, d) in [(1.0f64, 1usize), (0.8, 2)] {
        let h = 0.02;
        let r = (40.0 / a).sqrt();
        let m = (r / h) as i64;
        let norm = (a / PI).powf(d as f64 / 2.0);
        let (mut mass, mut second) = (0.0, 0.0);
        let axis: Vec<f64> = (-m..=m).map(|i| i as f64 * h).collect();
        if d == 1 {
            for x in &axis {
                let k = norm * (-a * x * x).exp();
                mass += k * h;
                second += x * x * k * h;
            }
        } else {
            for x in &axis {
                for y in &axis {
                    let r2 = x * x + y * y;
                    let k = norm * (-a * r2).exp();
                    mass += k * h * h;
                    second += r2 * k * h * h;
                }
            }
        }
        let spec = KernelSpec::gaussian(a, d).unwrap();
        assert!((mass - 1.0).abs() < 1e-10);
        assert!((second - spec.mu).abs() < 1e-9);
    }
}

#[test]
fn h_multiplier_squares_to_symbol() {
    let spec = KernelSpec::gaussian(1.3, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let xi = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let h = h_multiplier(&spec, &xi);
        let hh: f64 = h.iter().map(|v| v * v).sum();
        assert!((hh - (1.0 - khat(&spec, &xi))).abs() < 1e-14);
    }
    assert_eq!(h_multiplier(&spec, &[0.0, 0.0]), vec![0.0, 0.0]);
}

#[test]
fn single_mode_scaling() {
    let grid = TorusGrid::new(2, 7.0, 16).unwrap();
    let spec = KernelSpec::gaussian(1.0, 2).unwrap();
    let k = [2.0, -3.0];
    let u = mode(&grid, &k);
    let eps = 0.05;
    let xi2 = (k[0] * k[0] + k[1] * k[1]) / (grid.length * grid.length);
    let factor = (-PI * PI * eps * xi2 / spec.a).exp();
    let v = convolve_keps(&grid, &spec, &u, eps);
    let w = apply_l_eps(&grid, &spec, &u, eps);
    for s in 0..grid.num_sites() {
        assert!((v[s] - factor * u[s]).abs() < 1e-13);
        assert!((w[s] - (1.0 - factor) / eps * u[s]).abs() < 1e-12);
    }
}

#[test]
fn symbol_approaches_gradient_limit() {
    let grid = TorusGrid::new(1, 20.0, 64).unwrap();
    let spec = KernelSpec::gaussian(1.0, 1).unwrap();
    let eps = 1e-4;
    let table = l_eps_table(&grid, &spec, eps);
    for s in 1..6 {
        let xi = grid.frequency(s);
        let xi2: f64 = xi.iter().map(|v| v * v).sum();
        let limit = 2.0 * PI * PI * spec.mu * xi2 / spec.d as f64;
        assert!((table[s] / limit - 1.0).abs() < 1e-2);
    }
    assert_eq!(table[0], 0.0);
}

#[test]
fn t_eps_tends_to_scaled_gradient() {
    // T_ε u → ∇u/(2i√a) for smooth u (frequencies in cycles per unit length)
    let grid = TorusGrid::new(1, 10.0, 64).unwrap();
    let spec = KernelSpec::gaussian(1.0, 1).unwrap();
    let u = mode(&grid, &[1.0]);
    let t = apply_t_eps(&grid, &spec, &u, 1e-6);
    let scale = 0.5 / spec.a.sqrt();
    for s in 0..grid.num_sites() {
        let x = grid.position(s)[0];
        let du = -(2.0 * PI / grid.length) * (2.0 * PI * x / grid.length).sin();
        assert!(t[0][s].re.abs() < 1e-12);
        assert!((t[0][s].im + scale * du).abs() < 1e-6, "{} {}", t[0][s], du);
    }
}

#[test]
fn c0_certificate() {
    for (a, d, eps) in [(1.0, 1usize, 0.1), (0.5, 2, 0.01), (2.0, 2, 1.0)] {
        let spec = KernelSpec::gaussian(a, d).unwrap();
        let grid = TorusGrid::new(d, 20.0, 32).unwrap();
        let c0 = spec.certify_c0(&grid, eps);
        assert!(c0 > 0.0 && c0 <= PI * PI / a + 1e-12);
        let se = eps.sqrt();
        for s in 1..grid.num_sites() {
            let xi: Vec<f64> = grid.frequency(s).iter().map(|v| v * se).collect();
            let r2: f64 = xi.iter().map(|v| v * v).sum();
            let k = khat(&spec, &xi);
            assert!(c0 * r2 * k * k <= 1.0 - k + 1e-15);
        }
    }
}

#[test]
fn tail_mass_decreases() {
    for d in [1, 2] {
        let spec = KernelSpec::gaussian(1.0, d).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [1.0, 0.5, 0.1, 0.05, 0.01] {
            let t = tail_mass(&spec, 1.0, eps);
            assert!(t < prev && t >= 0.0);
            prev = t;
        }
        assert!(tail_mass(&spec, 1.0, 1e-3) < 1e-100);
    }
    // d = 2: ∫_{|x|>r} k = e^{−a r²}
    let spec = KernelSpec::gaussian(0.5, 2).unwrap();
    assert!((tail_mass(&spec, 1.0, 1.0) - (-0.5f64).exp()).abs() < 1e-15);
}

#[test]
fn doubled_energy_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (d, n) in [(1usize, 32usize), (2, 8)] {
        let grid = TorusGrid::new(d, 4.0, n).unwrap();
        let spec = KernelSpec::gaussian(1.0, d).unwrap();
        let values = (0..grid.num_sites()).map(|_| random_traceless(&mut rng, 0.3)).collect();
        let q = QTensorField::new(grid, values).unwrap();
        for eps in [0.05, 0.5] {
            let a = doubled_energy_form(&q, &spec, 8.0, eps);
            let b = doubled_energy_spectral(&q, &spec, 8.0, eps);
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
            // ‖T_ε Q‖² = ⟨Q, L_ε Q⟩
            let t = q.t_eps_norm_sqr(&spec, eps);
            assert!((0.5 * 8.0 * eps * t - b).abs() < 1e-10 * b.abs().max(1.0));
        }
    }
    let grid = TorusGrid::new(1, 4.0, 16).unwrap();
    let spec = KernelSpec::gaussian(1.0, 1).unwrap();
    let c = QTensorField::constant(grid, QTensor::uniaxial(0.5, &[0.0, 0.0, 1.0]));
    assert!(doubled_energy_spectral(&c, &spec, 8.0, 0.1).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn convolution_is_a_contraction(seed in any::<u64>(), eps in 1e-3f64..2.0) {
        let grid = TorusGrid::new(2, 5.0, 16).unwrap();
        let spec = KernelSpec::gaussian(1.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_grid_field(&mut rng, &grid);
        let v = convolve_keps(&grid, &spec, &u, eps);
        prop_assert!(grid.l2_norm(&v) <= grid.l2_norm(&u) * (1.0 + 1e-12));
        // mean is preserved
        let mu: f64 = u.iter().sum();
        let mv: f64 = v.iter().sum();
        prop_assert!((mu - mv).abs() < 1e-10);
    }

    #[test]
    fn l_eps_is_t_eps_squared(seed in any::<u64>(), eps in 1e-3f64..1.0) {
        let grid = TorusGrid::new(1, 8.0, 64).unwrap();
        let spec = KernelSpec::gaussian(1.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_grid_field(&mut rng, &grid);
        let v = random_grid_field(&mut rng, &grid);
        let lhs = grid.inner(&u, &apply_l_eps(&grid, &spec, &v, eps));
        let tu = apply_t_eps(&grid, &spec, &u, eps);
        let tv = apply_t_eps(&grid, &spec, &v, eps);
        let rhs: f64 = tu[0].iter().zip(&tv[0]).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * grid.cell_volume();
        prop_assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        // L_ε is non-negative and self-adjoint
        let luu = grid.inner(&u, &apply_l_eps(&grid, &spec, &u, eps));
        prop_assert!(luu >= -1e-12);
        let lvu = grid.inner(&v, &apply_l_eps(&grid, &spec, &u, eps));
        prop_assert!((lhs - lvu).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
