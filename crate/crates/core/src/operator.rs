//! First-order matrix differential operators evaluated at a point, applied
//! to spinor jets.

use std::sync::Arc;

use crate::jet::{Jet, JetError, JetSpace};
use crate::linalg::{c, CMat, ZERO};

/// `d×d` matrix of optional jets; `None` entries are exact zeros.
#[derive(Debug, Clone)]
pub struct MatJet {
    pub d: usize,
    pub entries: Vec<Option<Jet>>,
}

impl MatJet {
    pub fn zero(d: usize) -> MatJet {
        MatJet { d, entries: vec![None; d * d] }
    }

    /// `f · E`
    pub fn scalar(d: usize, f: &Jet) -> MatJet {
        let mut m = MatJet::zero(d);
        for i in 0..d {
            m.entries[i * d + i] = Some(f.clone());
        }
        m
    }

    pub fn constant(m: &CMat, space: &Arc<JetSpace>, order: usize) -> MatJet {
        let d = m.nrows();
        let mut out = MatJet::zero(d);
        for i in 0..d {
            for j in 0..d {
                if m[(i, j)] != ZERO {
                    out.entries[i * d + j] = Some(Jet::constant(space, order, m[(i, j)]));
                }
            }
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Jet> {
        self.entries[i * self.d + j].as_ref()
    }

    fn accumulate(&mut self, i: usize, j: usize, v: Jet) {
        let slot = &mut self.entries[i * self.d + j];
        *slot = Some(match slot.take() {
            Some(x) => &x + &v,
            None => v,
        });
    }

    /// `self += m · f` for a constant matrix `m` and scalar jet `f`.
    pub fn add_term(&mut self, m: &CMat, f: &Jet) {
        if f.max_abs() == 0.0 {
            return;
        }
        for i in 0..self.d {
            for j in 0..self.d {
                let k = m[(i, j)];
                if k != ZERO {
                    self.accumulate(i, j, f.scale(k));
                }
            }
        }
    }

    pub fn add(&self, o: &MatJet) -> MatJet {
        let mut out = self.clone();
        for i in 0..self.d {
            for j in 0..self.d {
                if let Some(v) = o.get(i, j) {
                    out.accumulate(i, j, v.clone());
                }
            }
        }
        out
    }

    pub fn scale(&self, k: crate::linalg::C64) -> MatJet {
        MatJet { d: self.d, entries: self.entries.iter().map(|e| e.as_ref().map(|j| j.scale(k))).collect() }
    }

    pub fn value(&self) -> CMat {
        CMat::from_fn(self.d, self.d, |i, j| self.get(i, j).map_or(ZERO, |v| v.value()))
    }

    /// Matrix–vector product; the result has the smaller of the two orders.
    pub fn apply(&self, v: &[Jet], out: &mut [Jet]) {
        for i in 0..self.d {
            for j in 0..self.d {
                if let Some(a) = self.get(i, j) {
                    out[i].add_product(a, &v[j]);
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().flatten().map(|j| j.max_abs()).fold(0.0, f64::max)
    }
}

/// `A^i(x) ∂_i + B(x)` with coefficient jets expanded at a base point.
#[derive(Debug, Clone)]
pub struct OpAtPoint {
    pub deriv: Vec<MatJet>,
    pub pot: MatJet,
}

impl OpAtPoint {
    pub fn zero(nvars: usize, d: usize) -> OpAtPoint {
        OpAtPoint { deriv: vec![MatJet::zero(d); nvars], pot: MatJet::zero(d) }
    }

    pub fn dim(&self) -> usize {
        self.pot.d
    }

    pub fn add(&self, o: &OpAtPoint) -> OpAtPoint {
        OpAtPoint { deriv: self.deriv.iter().zip(&o.deriv).map(|(a, b)| a.add(b)).collect(), pot: self.pot.add(&o.pot) }
    }

    pub fn scale(&self, k: crate::linalg::C64) -> OpAtPoint {
        OpAtPoint { deriv: self.deriv.iter().map(|a| a.scale(k)).collect(), pot: self.pot.scale(k) }
    }

    /// `self + k·E` in the potential.
    pub fn shift(&self, k: crate::linalg::C64, space: &Arc<JetSpace>, order: usize) -> OpAtPoint {
        let mut out = self.clone();
        let d = self.dim();
        out.pot.add_term(&(CMat::identity(d, d) * k), &Jet::constant(space, order, c(1.0)));
        out
    }

    /// Lift a scalar (`d = 1`) operator to act diagonally on `d`
    /// components.
    pub fn lift(&self, d: usize) -> OpAtPoint {
        assert_eq!(self.dim(), 1);
        let lift1 = |m: &MatJet| match m.get(0, 0) {
            Some(j) => MatJet::scalar(d, j),
            None => MatJet::zero(d),
        };
        OpAtPoint { deriv: self.deriv.iter().map(lift1).collect(), pot: lift1(&self.pot) }
    }

    /// `(A^i ∂_i + B) ψ`; the result is one jet order lower than `ψ`.
    pub fn apply(&self, psi: &[Jet]) -> Result<Vec<Jet>, JetError> {
        let d = self.dim();
        assert_eq!(psi.len(), d, "spinor dimension");
        let order = psi[0].order().checked_sub(1).ok_or(JetError::OrderUnderflow)?;
        let sp = psi[0].space().clone();
        let mut out = vec![Jet::zero(&sp, order); d];
        for (i, a) in self.deriv.iter().enumerate() {
            if a.entries.iter().all(Option::is_none) {
                continue;
            }
            let dpsi = psi.iter().map(|p| p.diff(i)).collect::<Result<Vec<_>, _>>()?;
            a.apply(&dpsi, &mut out);
        }
        let low: Vec<Jet> = psi.iter().map(|p| p.truncate(order)).collect();
        self.pot.apply(&low, &mut out);
        Ok(out)
    }
}

/// Apply the ordered word `ops[w[0]] ∘ ops[w[1]] ∘ …` (rightmost first).
pub fn apply_word(ops: &[OpAtPoint], word: &[usize], psi: &[Jet]) -> Result<Vec<Jet>, JetError> {
    let mut v = psi.to_vec();
    for &k in word.iter().rev() {
        v = ops[k].apply(&v)?;
    }
    Ok(v)
}

/// Distinct orderings of a multiset of letters in lexicographic order.
pub fn distinct_orderings(letters: &[usize]) -> Vec<Vec<usize>> {
    let mut w = letters.to_vec();
    w.sort_unstable();
    let mut out = vec![w.clone()];
    loop {
        // next lexicographic permutation
        let n = w.len();
        if n < 2 {
            break;
        }
        let mut i = n - 1;
        while i > 0 && w[i - 1] >= w[i] {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        let mut j = n - 1;
        while w[j] <= w[i - 1] {
            j -= 1;
        }
        w.swap(i - 1, j);
        w[i..].reverse();
        out.push(w.clone());
    }
    out
}

/// Symmetrized product `X_{a}·X_{b}·…`: the average over all orderings.
pub fn apply_symmetrized(ops: &[OpAtPoint], letters: &[usize], psi: &[Jet]) -> Result<Vec<Jet>, JetError> {
    let words = distinct_orderings(letters);
    let w = c(1.0 / words.len() as f64);
    let mut acc: Option<Vec<Jet>> = None;
    for word in &words {
        let v = apply_word(ops, word, psi)?;
        acc = Some(match acc {
            None => v,
            Some(a) => a.iter().zip(&v).map(|(x, y)| x + y).collect(),
        });
    }
    Ok(acc.expect("non-empty word set").iter().map(|j| j.scale(w)).collect())
}

/// Linear combination of symmetrized words.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPolynomial {
    pub terms: Vec<(crate::linalg::C64, Vec<usize>)>,
}

impl OperatorPolynomial {
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.1.len()).max().unwrap_or(0)
    }

    pub fn apply(&self, ops: &[OpAtPoint], psi: &[Jet]) -> Result<Vec<Jet>, JetError> {
        let order = psi[0].order().checked_sub(self.degree()).ok_or(JetError::OrderUnderflow)?;
        let sp = psi[0].space().clone();
        let mut acc = vec![Jet::zero(&sp, order); psi.len()];
        for (k, letters) in &self.terms {
            let v = if letters.is_empty() { psi.to_vec() } else { apply_symmetrized(ops, letters, psi)? };
            for (a, x) in acc.iter_mut().zip(&v) {
                *a = &*a + &x.scale(*k);
            }
        }
        Ok(acc)
    }
}

/// Monomial test spinors `(x − x₀)^α e_c` for `|α| ≤ degree`.
pub fn monomial_tests(space: &Arc<JetSpace>, order: usize, d: usize, degree: usize) -> Vec<Vec<Jet>> {
    let n = space.len(degree.min(order));
    let mut out = Vec::with_capacity(n * d);
    for idx in 0..n {
        for comp in 0..d {
            let mut coeffs = vec![ZERO; space.len(order)];
            coeffs[idx] = c(1.0);
            let mono = Jet::from_coeffs(space, order, coeffs);
            let zero = Jet::zero(space, order);
            out.push((0..d).map(|k| if k == comp { mono.clone() } else { zero.clone() }).collect());
        }
    }
    out
}

/// Largest component of `v` at the base point.
pub fn value_norm(v: &[Jet]) -> f64 {
    v.iter().map(|j| j.value().norm()).fold(0.0, f64::max)
}

/// Euclidean norm of the base-point values.
pub fn value_norm2(v: &[Jet]) -> f64 {
    v.iter().map(|j| j.value().norm_sqr()).sum::<f64>().sqrt()
}

/// `max_ψ |(P∘Q − Q∘P)ψ|` at the base point over the given tests.
pub fn commutator_residual(p: &OpAtPoint, q: &OpAtPoint, tests: &[Vec<Jet>]) -> Result<f64, JetError> {
    let mut r: f64 = 0.0;
    for t in tests {
        let pq = p.apply(&q.apply(t)?)?;
        let qp = q.apply(&p.apply(t)?)?;
        let d: Vec<Jet> = pq.iter().zip(&qp).map(|(a, b)| a - b).collect();
        r = r.max(value_norm(&d));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use proptest::prelude::*;

    fn partial(nvars: usize, var: usize, d: usize, sp: &Arc<JetSpace>, order: usize) -> OpAtPoint {
        let mut op = OpAtPoint::zero(nvars, d);
        op.deriv[var] = MatJet::scalar(d, &Jet::constant(sp, order, ONE));
        op
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let sp = JetSpace::get(2, 3);
        let dx = partial(2, 0, 2, &sp, 3);
        let psi = vec![Jet::constant(&sp, 3, c(2.0)), Jet::constant(&sp, 3, c(-1.0))];
        let out = dx.apply(&psi).unwrap();
        assert!(out.iter().all(|j| j.max_abs() == 0.0));
        assert_eq!(out[0].order(), 2);
    }

    #[test]
    fn partials_commute_exactly() {
        let sp = JetSpace::get(2, 3);
        let dx = partial(2, 0, 1, &sp, 3);
        let dy = partial(2, 1, 1, &sp, 3);
        let tests = monomial_tests(&sp, 3, 1, 3);
        assert_eq!(commutator_residual(&dx, &dy, &tests).unwrap(), 0.0);
    }

    #[test]
    fn symmetrized_square_is_second_derivative() {
        let sp = JetSpace::get(1, 4);
        let dx = partial(1, 0, 1, &sp, 4);
        let x = Jet::var(&sp, 4, 0, c(0.3));
        let f = x.sin().unwrap();
        let v = apply_symmetrized(std::slice::from_ref(&dx), &[0, 0], std::slice::from_ref(&f)).unwrap();
        assert!((v[0].value() + f.value()).norm() < 1e-15);
    }

    #[test]
    fn distinct_orderings_of_multiset() {
        assert_eq!(distinct_orderings(&[1, 0, 0]), vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
        assert_eq!(distinct_orderings(&[2, 1, 0]).len(), 6);
        assert_eq!(distinct_orderings(&[3]).len(), 1);
    }

    #[test]
    fn symmetrized_product_averages_orderings() {
        // x∂ and ∂ on f: (x∂∂ + ∂x∂)/2 f = x f'' + f'/2
        let sp = JetSpace::get(1, 3);
        let x = Jet::var(&sp, 3, 0, c(0.4));
        let mut xd = OpAtPoint::zero(1, 1);
        xd.deriv[0] = MatJet::scalar(1, &x);
        let d = partial(1, 0, 1, &sp, 3);
        let f = x.exp().unwrap();
        let v = apply_symmetrized(&[xd, d], &[0, 1], std::slice::from_ref(&f)).unwrap();
        let want = f.value() * 0.4 + f.value() * 0.5;
        assert!((v[0].value() - want).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn operators_are_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, x0 in -0.5f64..0.5) {
            let sp = JetSpace::get(1, 3);
            let x = Jet::var(&sp, 3, 0, c(x0));
            let mut op = OpAtPoint::zero(1, 2);
            let m = CMat::from_row_slice(2, 2, &[ONE, c(2.0), c(-1.0), c(0.5)]);
            op.deriv[0].add_term(&m, &x.sin().unwrap());
            op.pot.add_term(&m.transpose(), &x.exp().unwrap());
            let u = vec![x.cos().unwrap(), (&x * &x)];
            let v = vec![x.exp().unwrap(), x.clone()];
            let comb: Vec<Jet> = u.iter().zip(&v).map(|(p, q)| &p.scale(c(a)) + &q.scale(c(b))).collect();
            let lhs = op.apply(&comb).unwrap();
            let ou = op.apply(&u).unwrap();
            let ov = op.apply(&v).unwrap();
            for k in 0..2 {
                let rhs = &ou[k].scale(c(a)) + &ov[k].scale(c(b));
                prop_assert!((&lhs[k] - &rhs).max_abs() < 1e-12);
            }
        }
    }
}
