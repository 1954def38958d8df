//! Real symmetric 3×3 tensors.
//!
//! Strain rates, stresses and the atoms of matrix-valued measures all live
//! here. Only the six independent components are stored, so symmetry holds
//! by construction.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// A real symmetric 3×3 matrix stored as `(xx, yy, zz, xy, xz, yz)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMat3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub xz: f64,
    pub yz: f64,
}

impl SymMat3 {
    pub const ZERO: SymMat3 = SymMat3 {
        xx: 0.0,
        yy: 0.0,
        zz: 0.0,
        xy: 0.0,
        xz: 0.0,
        yz: 0.0,
    };

    pub const IDENTITY: SymMat3 = SymMat3 {
        xx: 1.0,
        yy: 1.0,
        zz: 1.0,
        xy: 0.0,
        xz: 0.0,
        yz: 0.0,
    };

    pub fn new(xx: f64, yy: f64, zz: f64, xy: f64, xz: f64, yz: f64) -> Self {
        SymMat3 {
            xx,
            yy,
            zz,
            xy,
            xz,
            yz,
        }
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        SymMat3::new(a, b, c, 0.0, 0.0, 0.0)
    }

    /// Components in storage order `(xx, yy, zz, xy, xz, yz)`.
    pub fn to_array(self) -> [f64; 6] {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz]
    }

    pub fn from_array(c: [f64; 6]) -> Self {
        SymMat3::new(c[0], c[1], c[2], c[3], c[4], c[5])
    }

    /// Symmetric part of a full 3×3 matrix given row-major.
    pub fn sym_part(m: &[[f64; 3]; 3]) -> Self {
        SymMat3::new(
            m[0][0],
            m[1][1],
            m[2][2],
            0.5 * (m[0][1] + m[1][0]),
            0.5 * (m[0][2] + m[2][0]),
            0.5 * (m[1][2] + m[2][1]),
        )
    }

    /// The rank-one tensor `w ⊗ w`.
    pub fn outer(w: [f64; 3]) -> Self {
        SymMat3::new(
            w[0] * w[0],
            w[1] * w[1],
            w[2] * w[2],
            w[0] * w[1],
            w[0] * w[2],
            w[1] * w[2],
        )
    }

    /// The symmetrized product `½(a ⊗ b + b ⊗ a)`.
    pub fn sym_outer(a: [f64; 3], b: [f64; 3]) -> Self {
        SymMat3::new(
            a[0] * b[0],
            a[1] * b[1],
            a[2] * b[2],
            0.5 * (a[0] * b[1] + a[1] * b[0]),
            0.5 * (a[0] * b[2] + a[2] * b[0]),
            0.5 * (a[1] * b[2] + a[2] * b[1]),
        )
    }

    /// Entry `(i, j)` for `i, j ∈ {0, 1, 2}`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            (2, 2) => self.zz,
            (0, 1) => self.xy,
            (0, 2) => self.xz,
            (1, 2) => self.yz,
            _ => panic!("index ({i}, {j}) out of range for a 3x3 tensor"),
        }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    /// Double contraction `A : B = Σ_ij A_ij B_ij`.
    pub fn ddot(&self, other: &SymMat3) -> f64 {
        self.xx * other.xx
            + self.yy * other.yy
            + self.zz * other.zz
            + 2.0 * (self.xy * other.xy + self.xz * other.xz + self.yz * other.yz)
    }

    pub fn norm_sq(&self) -> f64 {
        self.ddot(self)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Entrywise ℓ¹ norm over all nine entries.
    pub fn entry_l1(&self) -> f64 {
        self.xx.abs()
            + self.yy.abs()
            + self.zz.abs()
            + 2.0 * (self.xy.abs() + self.xz.abs() + self.yz.abs())
    }

    /// Quadratic form `ξᵀ A ξ`.
    pub fn quad_form(&self, xi: [f64; 3]) -> f64 {
        self.xx * xi[0] * xi[0]
            + self.yy * xi[1] * xi[1]
            + self.zz * xi[2] * xi[2]
            + 2.0 * (self.xy * xi[0] * xi[1] + self.xz * xi[0] * xi[2] + self.yz * xi[1] * xi[2])
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        [
            self.xx * v[0] + self.xy * v[1] + self.xz * v[2],
            self.xy * v[0] + self.yy * v[1] + self.yz * v[2],
            self.xz * v[0] + self.yz * v[1] + self.zz * v[2],
        ]
    }

    pub fn scale(self, s: f64) -> Self {
        SymMat3::from_array(self.to_array().map(|c| c * s))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// Smallest eigenvalue, accurate to roundoff relative to the norm even
    /// for repeated eigenvalues.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = nalgebra::Matrix3::new(
            self.xx, self.xy, self.xz, self.xy, self.yy, self.yz, self.xz, self.yz, self.zz,
        );
        m.symmetric_eigenvalues().min()
    }

    pub fn det(&self) -> f64 {
        self.xx * (self.yy * self.zz - self.yz * self.yz)
            - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }
}

impl Add for SymMat3 {
    type Output = SymMat3;
    fn add(self, o: SymMat3) -> SymMat3 {
        SymMat3::new(
            self.xx + o.xx,
            self.yy + o.yy,
            self.zz + o.zz,
            self.xy + o.xy,
            self.xz + o.xz,
            self.yz + o.yz,
        )
    }
}

impl AddAssign for SymMat3 {
    fn add_assign(&mut self, o: SymMat3) {
        *self = *self + o;
    }
}

impl Sub for SymMat3 {
    type Output = SymMat3;
    fn sub(self, o: SymMat3) -> SymMat3 {
        SymMat3::new(
            self.xx - o.xx,
            self.yy - o.yy,
            self.zz - o.zz,
            self.xy - o.xy,
            self.xz - o.xz,
            self.yz - o.yz,
        )
    }
}

impl Neg for SymMat3 {
    type Output = SymMat3;
    fn neg(self) -> SymMat3 {
        self.scale(-1.0)
    }
}

impl Mul<f64> for SymMat3 {
    type Output = SymMat3;
    fn mul(self, s: f64) -> SymMat3 {
        self.scale(s)
    }
}

impl Mul<SymMat3> for f64 {
    type Output = SymMat3;
    fn mul(self, m: SymMat3) -> SymMat3 {
        m.scale(self)
    }
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_and_norm() {
        let m = SymMat3::new(1.0, 2.0, 3.0, 0.5, -1.0, 2.0);
        assert_eq!(m.trace(), 6.0);
        let full: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum();
        assert!((m.norm_sq() - full).abs() < 1e-14);
        assert_eq!(SymMat3::ZERO.norm(), 0.0);
    }

    #[test]
    fn outer_is_rank_one() {
        let w = [1.0, 2.0, -1.0];
        let m = SymMat3::outer(w);
        assert!((m.trace() - 6.0).abs() < 1e-15);
        assert!(m.det().abs() < 1e-12);
        assert!(m.min_eigenvalue().abs() < 1e-12);
    }

    #[test]
    fn min_eigenvalue_diag_and_rotated() {
        assert_eq!(SymMat3::diag(1.0, -1.0, 0.0).min_eigenvalue(), -1.0);
        // eigenvalues of [[2,1,0],[1,2,0],[0,0,5]] are 1, 3, 5
        let m = SymMat3::new(2.0, 2.0, 5.0, 1.0, 0.0, 0.0);
        assert!((m.min_eigenvalue() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quad_form_matches_apply() {
        let m = SymMat3::new(1.0, 2.0, 3.0, 0.5, -1.0, 2.0);
        let xi = [0.3, -0.7, 1.1];
        assert!((m.quad_form(xi) - dot3(xi, m.apply(xi))).abs() < 1e-14);
    }
}
