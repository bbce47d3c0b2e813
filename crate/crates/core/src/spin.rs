//! Angular momentum matrices.
//!
//! Basis ordering is descending magnetic quantum number: index `k` holds
//! `m = S - k`, so for the defect spin the rows are `m_S = +1, 0, -1`.

use faer::{c64, Mat};

/// Cartesian spin matrices for one spin.
#[derive(Debug, Clone)]
pub struct SpinMatrices {
    pub twice_spin: u8,
    pub x: Mat<c64>,
    pub y: Mat<c64>,
    pub z: Mat<c64>,
    pub plus: Mat<c64>,
    pub minus: Mat<c64>,
}

impl SpinMatrices {
    pub fn new(twice_spin: u8) -> Self {
        let n = twice_spin as usize + 1;
        let s = twice_spin as f64 / 2.0;
        let m = |k: usize| s - k as f64;
        let z = Mat::from_fn(n, n, |i, j| if i == j { c64::new(m(i), 0.0) } else { c64::new(0.0, 0.0) });
        // <m+1| S+ |m> = sqrt(s(s+1) - m(m+1)); m+1 lives one row above m.
        let plus = Mat::from_fn(n, n, |i, j| {
            if j == i + 1 {
                let mj = m(j);
                c64::new((s * (s + 1.0) - mj * (mj + 1.0)).sqrt(), 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        let minus = plus.adjoint().to_owned();
        let x = Mat::from_fn(n, n, |i, j| (plus[(i, j)] + minus[(i, j)]) * 0.5);
        let y = Mat::from_fn(n, n, |i, j| (plus[(i, j)] - minus[(i, j)]) * c64::new(0.0, -0.5));
        SpinMatrices { twice_spin, x, y, z, plus, minus }
    }

    pub fn dim(&self) -> usize {
        self.twice_spin as usize + 1
    }

    /// Component `a` (0 = x, 1 = y, 2 = z).
    pub fn component(&self, a: usize) -> &Mat<c64> {
        match a {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("spin component index {a} out of range"),
        }
    }

    /// Index of magnetic sublevel `m` (given as twice m).
    pub fn index_of(&self, twice_m: i32) -> Option<usize> {
        let k = (self.twice_spin as i32 - twice_m) / 2;
        if (self.twice_spin as i32 - twice_m) % 2 != 0 || k < 0 || k > self.twice_spin as i32 {
            None
        } else {
            Some(k as usize)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commutator_residual(a: &Mat<c64>, b: &Mat<c64>, c: &Mat<c64>) -> f64 {
        // [a, b] - i c
        let ab = a * b;
        let ba = b * a;
        let n = a.nrows();
        let mut r = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let v = ab[(i, j)] - ba[(i, j)] - c64::new(0.0, 1.0) * c[(i, j)];
                r = r.max(v.norm());
            }
        }
        r
    }

    #[test]
    fn angular_momentum_algebra() {
        for two_s in 1..=6u8 {
            let s = SpinMatrices::new(two_s);
            assert!(commutator_residual(&s.x, &s.y, &s.z) < 1e-12);
            assert!(commutator_residual(&s.y, &s.z, &s.x) < 1e-12);
            assert!(commutator_residual(&s.z, &s.x, &s.y) < 1e-12);
            let ss = s.twice_spin as f64 / 2.0;
            let casimir = &s.x * &s.x + &s.y * &s.y + &s.z * &s.z;
            for i in 0..s.dim() {
                for j in 0..s.dim() {
                    let expect = if i == j { ss * (ss + 1.0) } else { 0.0 };
                    assert!((casimir[(i, j)] - c64::new(expect, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sublevel_indexing() {
        let s = SpinMatrices::new(2);
        assert_eq!(s.index_of(2), Some(0));
        assert_eq!(s.index_of(0), Some(1));
        assert_eq!(s.index_of(-2), Some(2));
        assert_eq!(s.index_of(1), None);
    }
}
