//! Small dense complex matrices and matrices of jets.

use std::sync::Arc;

use nalgebra::DMatrix;
pub use num_complex::Complex64 as C64;

use crate::jet::{Jet, JetError, JetSpace};

pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn comm(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn anticomm(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_real(m: &RMat) -> f64 {
    m.iter().map(|z| z.abs()).fold(0.0, f64::max)
}

pub fn complexify(m: &RMat) -> CMat {
    m.map(c)
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Numerical rank with a cutoff relative to the largest singular value.
pub fn numerical_rank(m: &RMat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Row-major matrix of jets sharing one jet space.
#[derive(Clone, Debug)]
pub struct JetMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Jet>,
}

impl JetMat {
    pub fn constant(space: &Arc<JetSpace>, order: usize, m: &CMat) -> JetMat {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(Jet::constant(space, order, m[(i, j)]));
            }
        }
        JetMat { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn zeros(space: &Arc<JetSpace>, order: usize, rows: usize, cols: usize) -> JetMat {
        JetMat { rows, cols, data: vec![Jet::zero(space, order); rows * cols] }
    }

    pub fn identity(space: &Arc<JetSpace>, order: usize, n: usize) -> JetMat {
        let mut m = JetMat::zeros(space, order, n, n);
        for i in 0..n {
            m.data[i * n + i] = Jet::constant(space, order, ONE);
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> &Jet {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Jet) {
        self.data[i * self.cols + j] = v;
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        self.data[0].space()
    }

    pub fn order(&self) -> usize {
        self.data.iter().map(|j| j.order()).min().unwrap_or(0)
    }

    pub fn value(&self) -> CMat {
        CMat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).value())
    }

    pub fn mul(&self, o: &JetMat) -> JetMat {
        assert_eq!(self.cols, o.rows, "jet matrix shape mismatch");
        let order = self.order().min(o.order());
        let sp = self.space().clone();
        let mut data = Vec::with_capacity(self.rows * o.cols);
        for i in 0..self.rows {
            for j in 0..o.cols {
                let mut acc = Jet::zero(&sp, order);
                for k in 0..self.cols {
                    acc.add_product(self.get(i, k), o.get(k, j));
                }
                data.push(acc);
            }
        }
        JetMat { rows: self.rows, cols: o.cols, data }
    }

    pub fn mul_const_left(&self, m: &CMat) -> JetMat {
        let order = self.order();
        let sp = self.space().clone();
        let mut data = Vec::with_capacity(m.nrows() * self.cols);
        for i in 0..m.nrows() {
            for j in 0..self.cols {
                let mut acc = Jet::zero(&sp, order);
                for k in 0..self.rows {
                    if m[(i, k)] != ZERO {
                        acc = &acc + &self.get(k, j).scale(m[(i, k)]);
                    }
                }
                data.push(acc);
            }
        }
        JetMat { rows: m.nrows(), cols: self.cols, data }
    }

    pub fn add(&self, o: &JetMat) -> JetMat {
        JetMat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &JetMat) -> JetMat {
        JetMat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, k: C64) -> JetMat {
        JetMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.scale(k)).collect() }
    }

    pub fn scale_jet(&self, k: &Jet) -> JetMat {
        JetMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * k).collect() }
    }

    pub fn truncate(&self, order: usize) -> JetMat {
        JetMat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.truncate(order)).collect() }
    }

    pub fn transpose(&self) -> JetMat {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j).clone());
            }
        }
        JetMat { rows: self.cols, cols: self.rows, data }
    }

    /// Matrix-vector product with a column of jets.
    pub fn apply(&self, v: &[Jet]) -> Vec<Jet> {
        let order = self.order().min(v.iter().map(|j| j.order()).min().unwrap_or(0));
        let sp = self.space().clone();
        (0..self.rows)
            .map(|i| {
                let mut acc = Jet::zero(&sp, order);
                for (k, vk) in v.iter().enumerate() {
                    acc.add_product(self.get(i, k), vk);
                }
                acc
            })
            .collect()
    }

    /// Inverse by Newton iteration `X ← X(2 − AX)` from the inverse of the
    /// base value; each step doubles the number of correct jet degrees.
    pub fn inverse(&self) -> Result<JetMat, JetError> {
        assert_eq!(self.rows, self.cols);
        let v = self.value();
        let vinv = v.clone().try_inverse().ok_or(JetError::Domain { func: "matrix inverse", value: v.determinant() })?;
        let order = self.order();
        let sp = self.space().clone();
        let mut x = JetMat::constant(&sp, order, &vinv);
        let two = JetMat::identity(&sp, order, self.rows).scale(c(2.0));
        let mut correct = 1;
        while correct <= order {
            x = x.mul(&two.sub(&self.mul(&x)));
            correct *= 2;
        }
        Ok(x)
    }

    /// Matrix exponential by scaling and squaring with a Taylor core.
    pub fn exp(&self) -> JetMat {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let norm: f64 = (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j).max_abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut s = 0u32;
        while norm / 2f64.powi(s as i32) > 0.5 {
            s += 1;
        }
        let a = self.scale(c(1.0 / 2f64.powi(s as i32)));
        let order = self.order();
        let sp = self.space().clone();
        let mut term = JetMat::identity(&sp, order, n);
        let mut sum = term.clone();
        for k in 1..=24 {
            term = term.mul(&a).scale(c(1.0 / k as f64));
            sum = sum.add(&term);
        }
        for _ in 0..s {
            sum = sum.mul(&sum);
        }
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jet_inverse_matches_numeric_derivative() {
        let sp = JetSpace::get(1, 3);
        let t = Jet::var(&sp, 3, 0, c(0.2));
        let one = Jet::constant(&sp, 3, ONE);
        let m = JetMat { rows: 2, cols: 2, data: vec![one.clone(), t.clone(), (&t * &t), one.add_scalar(c(1.0))] };
        let inv = m.inverse().unwrap();
        let prod = m.mul(&inv);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                let e = prod.get(i, j);
                assert_abs_diff_eq!(e.value().re, want, epsilon = 1e-14);
                assert!(e.coeffs()[1..].iter().all(|z| z.norm() < 1e-13));
            }
        }
    }

    #[test]
    fn jet_exp_of_rotation_generator() {
        let sp = JetSpace::get(1, 4);
        let t = Jet::var(&sp, 4, 0, c(0.7));
        let z = Jet::zero(&sp, 4);
        let m = JetMat { rows: 2, cols: 2, data: vec![z.clone(), -&t, t.clone(), z] };
        let e = m.exp();
        let want_c = t.cos().unwrap();
        let want_s = t.sin().unwrap();
        for k in 0..5 {
            assert_abs_diff_eq!((e.get(0, 0).coeffs()[k] - want_c.coeffs()[k]).norm(), 0.0, epsilon = 1e-13);
            assert_abs_diff_eq!((e.get(1, 0).coeffs()[k] - want_s.coeffs()[k]).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn rank_of_antisymmetric() {
        let m = RMat::from_row_slice(3, 3, &[0.0, 1.0, 2.0, -1.0, 0.0, 3.0, -2.0, -3.0, 0.0]);
        assert_eq!(numerical_rank(&m, 1e-9), 2);
        assert_eq!(numerical_rank(&RMat::zeros(3, 3), 1e-9), 0);
    }
}
