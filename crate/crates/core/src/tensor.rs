//! Small fixed-size vector and 3×3 tensor helpers.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Index, IndexMut, Mul, Sub};

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Real 3×3 tensor, row-major, indices (x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tensor3(pub [[f64; 3]; 3]);

impl Tensor3 {
    pub const ZERO: Tensor3 = Tensor3([[0.0; 3]; 3]);
    pub const IDENTITY: Tensor3 = Tensor3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn diag(x: f64, y: f64, z: f64) -> Self {
        Tensor3([[x, 0.0, 0.0], [0.0, y, 0.0], [0.0, 0.0, z]])
    }

    /// Outer product a bᵀ.
    pub fn outer(a: Vec3, b: Vec3) -> Self {
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i] * b[j];
            }
        }
        Tensor3(t)
    }

    pub fn from_row_major(v: [f64; 9]) -> Self {
        Tensor3([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let t = &self.0;
        [
            t[0][0], t[0][1], t[0][2], t[1][0], t[1][1], t[1][2], t[2][0], t[2][1], t[2][2],
        ]
    }

    pub fn transpose(&self) -> Self {
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[j][i];
            }
        }
        Tensor3(t)
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut t = self.0;
        t.iter_mut().flatten().for_each(|v| *v *= s);
        Tensor3(t)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let t = &self.0;
        [dot(t[0], v), dot(t[1], v), dot(t[2], v)]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (self.0[i][j] - self.0[j][i]).abs() <= tol))
    }

    /// Rotation by `angle` radians about the z axis.
    pub fn rotation_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Tensor3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    /// R T Rᵀ
    pub fn rotated(&self, r: &Tensor3) -> Self {
        *r * *self * r.transpose()
    }

    /// Frobenius norm of the transverse (x, y) block, which carries the
    /// electron spin-flipping part of a hyperfine tensor.
    pub fn transverse_block_norm(&self) -> f64 {
        let t = &self.0;
        (t[0][0].powi(2) + t[0][1].powi(2) + t[1][0].powi(2) + t[1][1].powi(2)).sqrt()
    }
}

impl Index<(usize, usize)> for Tensor3 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

impl Add for Tensor3 {
    type Output = Tensor3;
    fn add(self, rhs: Tensor3) -> Tensor3 {
        let mut t = self.0;
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] += rhs.0[i][j];
            }
        }
        Tensor3(t)
    }
}

impl Sub for Tensor3 {
    type Output = Tensor3;
    fn sub(self, rhs: Tensor3) -> Tensor3 {
        self + rhs.scaled(-1.0)
    }
}

impl Mul for Tensor3 {
    type Output = Tensor3;
    fn mul(self, rhs: Tensor3) -> Tensor3 {
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Tensor3(t)
    }
}
