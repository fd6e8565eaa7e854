//! Small dense tensors on R^3: symmetric second-order (`QTensor`) and fully
//! symmetric fourth-order (`S4Tensor`) moments.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Matrix3, SymmetricEigen};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

// (row, col) of the six stored entries
const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

fn slot(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        (1, 2) => 5,
        _ => unreachable!("index out of range"),
    }
}

/// Symmetric 3x3 tensor stored as `[xx, yy, zz, xy, xz, yz]`.
///
/// Used both for traceless order tensors and for general symmetric
/// matrices such as the Bingham parameter `B`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QTensor(pub [f64; 6]);

impl QTensor {
    pub const ZERO: QTensor = QTensor([0.0; 6]);

    pub fn from_matrix(m: &Mat3) -> Self {
        let mut q = [0.0; 6];
        for (s, &(i, j)) in PAIRS.iter().enumerate() {
            q[s] = if i == j { m[i][i] } else { 0.5 * (m[i][j] + m[j][i]) };
        }
        QTensor(q)
    }

    pub fn to_matrix(&self) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.get(i, j);
            }
        }
        m
    }

    /// `s (nu ⊗ nu - I/3)`.
    pub fn uniaxial(s: f64, nu: &Vec3) -> Self {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = s * (nu[i] * nu[j] - IDENTITY[i][j] / 3.0);
            }
        }
        QTensor::from_matrix(&m)
    }

    /// `a ⊗ a`.
    pub fn outer(a: &Vec3) -> Self {
        QTensor([a[0] * a[0], a[1] * a[1], a[2] * a[2], a[0] * a[1], a[0] * a[2], a[1] * a[2]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[slot(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    /// Removes the trace: `A - tr(A) I / 3`.
    pub fn deviatoric(&self) -> Self {
        let t = self.trace() / 3.0;
        let mut q = self.0;
        q[0] -= t;
        q[1] -= t;
        q[2] -= t;
        QTensor(q)
    }

    /// Frobenius inner product `A : B`.
    pub fn ddot(&self, other: &QTensor) -> f64 {
        let a = &self.0;
        let b = &other.0;
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    /// `A v`.
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.get(i, 0) * v[0] + self.get(i, 1) * v[1] + self.get(i, 2) * v[2];
        }
        out
    }

    /// `v · A v`.
    pub fn quadratic(&self, v: &Vec3) -> f64 {
        let q = &self.0;
        q[0] * v[0] * v[0]
            + q[1] * v[1] * v[1]
            + q[2] * v[2] * v[2]
            + 2.0 * (q[3] * v[0] * v[1] + q[4] * v[0] * v[2] + q[5] * v[1] * v[2])
    }

    /// Symmetrized product `A B + B A`.
    pub fn sym_product(&self, other: &QTensor) -> Self {
        let a = self.to_matrix();
        let b = other.to_matrix();
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    m[i][j] += a[i][k] * b[k][j] + b[i][k] * a[k][j];
                }
            }
        }
        QTensor::from_matrix(&m)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let mut e: Vec<f64> = self.eigen().0.to_vec();
        e.sort_by(f64::total_cmp);
        [e[0], e[1], e[2]]
    }

    /// Eigenvector of the largest eigenvalue (the director of a uniaxial tensor).
    pub fn principal_axis(&self) -> Vec3 {
        let (vals, vecs) = self.eigen();
        let k = (0..3).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
        vecs[k]
    }

    fn eigen(&self) -> ([f64; 3], [Vec3; 3]) {
        let m = self.to_matrix();
        let mat = Matrix3::from_fn(|i, j| m[i][j]);
        let eig = SymmetricEigen::new(mat);
        let mut vecs = [[0.0; 3]; 3];
        for (k, v) in vecs.iter_mut().enumerate() {
            for i in 0..3 {
                v[i] = eig.eigenvectors[(i, k)];
            }
        }
        ([eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]], vecs)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Add for QTensor {
    type Output = QTensor;
    fn add(self, rhs: QTensor) -> QTensor {
        let mut q = self.0;
        for (a, b) in q.iter_mut().zip(rhs.0) {
            *a += b;
        }
        QTensor(q)
    }
}

impl AddAssign for QTensor {
    fn add_assign(&mut self, rhs: QTensor) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Sub for QTensor {
    type Output = QTensor;
    fn sub(self, rhs: QTensor) -> QTensor {
        self + (-rhs)
    }
}

impl Neg for QTensor {
    type Output = QTensor;
    fn neg(self) -> QTensor {
        self * -1.0
    }
}

impl Mul<f64> for QTensor {
    type Output = QTensor;
    fn mul(self, s: f64) -> QTensor {
        QTensor(self.0.map(|v| v * s))
    }
}

/// Fully symmetric rank-4 tensor on R^3, stored by monomial exponents
/// `(p, q, r)` with `p + q + r = 4` (15 entries).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct S4Tensor(pub [f64; 15]);

/// Exponent triples in storage order.
pub const S4_EXPONENTS: [(u8, u8, u8); 15] = {
    let mut out = [(0u8, 0u8, 0u8); 15];
    let mut n = 0;
    let mut p = 4i32;
    while p >= 0 {
        let mut q = 4 - p;
        while q >= 0 {
            out[n] = (p as u8, q as u8, (4 - p - q) as u8);
            n += 1;
            q -= 1;
        }
        p -= 1;
    }
    out
};

fn s4_slot(p: usize, q: usize, r: usize) -> usize {
    // position of (p, q, r) in S4_EXPONENTS
    let before: usize = (0..(4 - p)).map(|k| k + 1).sum();
    debug_assert_eq!(p + q + r, 4);
    before + (4 - p - q)
}

impl S4Tensor {
    /// Entry `T_ijkl`.
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let mut c = [0usize; 3];
        for idx in [i, j, k, l] {
            c[idx] += 1;
        }
        self.0[s4_slot(c[0], c[1], c[2])]
    }

    /// Accumulates `w · m⊗m⊗m⊗m`.
    pub fn add_outer4(&mut self, m: &Vec3, w: f64) {
        for (s, &(p, q, r)) in S4_EXPONENTS.iter().enumerate() {
            self.0[s] += w * m[0].powi(p as i32) * m[1].powi(q as i32) * m[2].powi(r as i32);
        }
    }

    /// `(T : A)_ij = T_ijkl A_kl`.
    pub fn contract(&self, a: &QTensor) -> QTensor {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for k in 0..3 {
                    for l in 0..3 {
                        s += self.get(i, j, k, l) * a.get(k, l);
                    }
                }
                *v = s;
            }
        }
        QTensor::from_matrix(&m)
    }

    /// `T_ijkk`.
    pub fn trace_pair(&self) -> QTensor {
        self.contract(&QTensor::from_matrix(&IDENTITY))
    }

    /// Isotropic fourth moment of the uniform probability density:
    /// `(δij δkl + δik δjl + δil δjk) / 15`.
    pub fn isotropic() -> Self {
        let mut t = [0.0; 15];
        for (s, &(p, q, r)) in S4_EXPONENTS.iter().enumerate() {
            // ∫ x^p y^q z^r over the sphere / 4π for even exponents
            let dfact = |n: u8| -> f64 {
                match n {
                    0 => 1.0,
                    2 => 1.0,
                    4 => 3.0,
                    _ => 0.0,
                }
            };
            t[s] = dfact(p) * dfact(q) * dfact(r) / 15.0;
        }
        S4Tensor(t)
    }
}

impl Add for S4Tensor {
    type Output = S4Tensor;
    fn add(self, rhs: S4Tensor) -> S4Tensor {
        let mut t = self.0;
        for (a, b) in t.iter_mut().zip(rhs.0) {
            *a += b;
        }
        S4Tensor(t)
    }
}

impl Mul<f64> for S4Tensor {
    type Output = S4Tensor;
    fn mul(self, s: f64) -> S4Tensor {
        S4Tensor(self.0.map(|v| v * s))
    }
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Rotation matrix about unit `axis` by `angle` (Rodrigues).
pub fn rotation(axis: &Vec3, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let [x, y, z] = *axis;
    let t = 1.0 - c;
    [
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ]
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}
