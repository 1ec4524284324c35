//! Structure-constant algebra and coadjoint-orbit invariants.

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::linalg::{numerical_rank, CMat, RMat};
use crate::sampling::stream_rng;

/// Relative singular-value cutoff for orbit ranks.
pub const RANK_TOL: f64 = 1e-9;

/// Lie algebra given by structure constants `C^C_{AB}` in a labelled basis.
#[derive(Debug, Clone)]
pub struct LieAlgebra {
    dim: usize,
    labels: Vec<String>,
    c: Vec<f64>,
}

impl LieAlgebra {
    /// `c[(a * dim + b) * dim + k]` is `C^k_{ab}`.
    pub fn new(labels: Vec<String>, c: Vec<f64>) -> Self {
        let dim = labels.len();
        assert_eq!(c.len(), dim * dim * dim, "structure constant count");
        LieAlgebra { dim, labels, c }
    }

    pub fn abelian(dim: usize) -> Self {
        let labels = (1..=dim).map(|i| format!("e{i}")).collect();
        LieAlgebra::new(labels, vec![0.0; dim * dim * dim])
    }

    /// Builds from `[e_a, e_b] = Σ coef e_k` triples, filling the
    /// antisymmetric partner of every entry.
    pub fn from_brackets(labels: Vec<String>, brackets: &[(usize, usize, usize, f64)]) -> Self {
        let dim = labels.len();
        let mut c = vec![0.0; dim * dim * dim];
        for &(a, b, k, v) in brackets {
            c[(a * dim + b) * dim + k] += v;
            c[(b * dim + a) * dim + k] -= v;
        }
        LieAlgebra::new(labels, c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// `C^k_{ab}`.
    #[inline]
    pub fn c(&self, a: usize, b: usize, k: usize) -> f64 {
        self.c[(a * self.dim + b) * self.dim + k]
    }

    pub fn set_c(&mut self, a: usize, b: usize, k: usize, v: f64) {
        self.c[(a * self.dim + b) * self.dim + k] = v;
    }

    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        for a in 0..n {
            if x[a] == 0.0 {
                continue;
            }
            for b in 0..n {
                if y[b] == 0.0 {
                    continue;
                }
                for (k, o) in out.iter_mut().enumerate() {
                    *o += x[a] * y[b] * self.c(a, b, k);
                }
            }
        }
        out
    }

    /// Matrix of `ad_x` acting on coefficient columns.
    pub fn ad_matrix(&self, x: &[f64]) -> RMat {
        let n = self.dim;
        RMat::from_fn(n, n, |k, b| (0..n).map(|a| x[a] * self.c(a, b, k)).sum())
    }

    pub fn antisymmetry_residual(&self) -> f64 {
        let n = self.dim;
        let mut r: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for k in 0..n {
                    r = r.max((self.c(a, b, k) + self.c(b, a, k)).abs());
                }
            }
        }
        r
    }

    /// Largest Jacobi defect over all index quadruples.
    pub fn jacobi_residual(&self) -> f64 {
        let n = self.dim;
        let mut r: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for cc in 0..n {
                    for d in 0..n {
                        let s: f64 = (0..n)
                            .map(|e| {
                                self.c(a, b, e) * self.c(e, cc, d)
                                    + self.c(b, cc, e) * self.c(e, a, d)
                                    + self.c(cc, a, e) * self.c(e, b, d)
                            })
                            .sum();
                        r = r.max(s.abs());
                    }
                }
            }
        }
        r
    }

    /// `C_AB(f) = C^C_{AB} f_C`.
    pub fn coadjoint_matrix(&self, f: &[C64]) -> CMat {
        let n = self.dim;
        CMat::from_fn(n, n, |a, b| (0..n).map(|k| f[k] * self.c(a, b, k)).sum())
    }

    pub fn coadjoint_matrix_real(&self, f: &[f64]) -> RMat {
        let n = self.dim;
        RMat::from_fn(n, n, |a, b| (0..n).map(|k| f[k] * self.c(a, b, k)).sum())
    }

    pub fn orbit_dimension(&self, f: &[f64]) -> usize {
        numerical_rank(&self.coadjoint_matrix_real(f), RANK_TOL)
    }

    /// `dim − max rank` over seeded random covectors in `[−1, 1]^dim`.
    pub fn algebra_index(&self, samples: usize, seed: u64) -> IndexEstimate {
        let mut rng = stream_rng(seed, "algebra_index");
        let ranks: Vec<usize> = (0..samples.max(1))
            .map(|_| {
                let f: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                self.orbit_dimension(&f)
            })
            .collect();
        let max = *ranks.iter().max().unwrap_or(&0);
        let min = *ranks.iter().min().unwrap_or(&0);
        IndexEstimate { index: self.dim - max, generic_rank: max, ranks_disagree: max != min }
    }

    pub fn poisson_bracket(&self, phi: &DualPolynomial, psi: &DualPolynomial, f: &[C64]) -> C64 {
        let gp = phi.gradient(f);
        let gq = psi.gradient(f);
        let cm = self.coadjoint_matrix(f);
        let mut s = C64::new(0.0, 0.0);
        for a in 0..self.dim {
            for b in 0..self.dim {
                s += cm[(a, b)] * gp[a] * gq[b];
            }
        }
        s
    }

    /// Max over samples and `A` of `|C_AB(f) ∂K/∂f_B|`.
    pub fn verify_casimir(&self, k: &DualPolynomial, samples: usize, seed: u64) -> f64 {
        self.casimir_samples(k, samples, seed).into_iter().map(|(r, _)| r).fold(0.0, f64::max)
    }

    /// Per covector: `max_A |{K, f_A}|(f)` with the covector `f`.
    pub fn casimir_samples(&self, k: &DualPolynomial, samples: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
        let mut rng = stream_rng(seed, "verify_casimir");
        (0..samples)
            .map(|_| {
                let f: Vec<C64> = (0..self.dim).map(|_| C64::new(rng.gen_range(-1.0..=1.0), 0.0)).collect();
                let cm = self.coadjoint_matrix(&f);
                let g = k.gradient(&f);
                let mut worst: f64 = 0.0;
                for a in 0..self.dim {
                    let s: C64 = (0..self.dim).map(|b| cm[(a, b)] * g[b]).sum();
                    worst = worst.max(s.norm());
                }
                (worst, f.iter().map(|z| z.re).collect())
            })
            .collect()
    }

    /// Max `|Γ(f)|` over random covectors with `f_α = 0` on the isotropy part.
    pub fn identity_on_annihilator(&self, split: &SubalgebraSplit, gamma: &DualPolynomial, samples: usize, seed: u64) -> f64 {
        self.annihilator_samples(split, gamma, samples, seed).into_iter().map(|(r, _)| r).fold(0.0, f64::max)
    }

    pub fn annihilator_samples(&self, split: &SubalgebraSplit, gamma: &DualPolynomial, samples: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
        let mut rng = stream_rng(seed, "identity_on_annihilator");
        (0..samples)
            .map(|_| {
                let mut f = vec![C64::new(0.0, 0.0); self.dim];
                for &a in &split.m {
                    f[a] = C64::new(rng.gen_range(-1.0..=1.0), 0.0);
                }
                (gamma.eval(&f).norm(), f.iter().map(|z| z.re).collect())
            })
            .collect()
    }

    /// Max `|G_ab C^a_{cα} + G_ac C^a_{bα}|`; `g` is indexed by positions in `split.m`.
    pub fn adh_invariance_residual(&self, split: &SubalgebraSplit, g: &RMat) -> f64 {
        let m = &split.m;
        let mut r: f64 = 0.0;
        for &al in &split.h {
            for (bi, &b) in m.iter().enumerate() {
                for (ci, &cc) in m.iter().enumerate() {
                    let mut s = 0.0;
                    for (ai, &a) in m.iter().enumerate() {
                        s += g[(ai, bi)] * self.c(cc, al, a) + g[(ai, ci)] * self.c(b, al, a);
                    }
                    r = r.max(s.abs());
                }
            }
        }
        r
    }

    /// Polarization conditions for `λ`: closure, isotropy and dimension.
    pub fn check_polarization(&self, lambda: &[f64], p: &PolarizationSpec, orbit_dim: usize) -> PolarizationReport {
        let basis = &p.basis;
        let mut closure: f64 = 0.0;
        let mut isotropy: f64 = 0.0;
        for x in basis {
            for y in basis {
                let z = self.bracket(x, y);
                closure = closure.max(p.distance_from_span(&z));
                let v: f64 = z.iter().zip(lambda).map(|(a, b)| a * b).sum();
                isotropy = isotropy.max(v.abs());
            }
        }
        let dim = p.dimension();
        let expected = self.dim as i64 - orbit_dim as i64 / 2;
        PolarizationReport { closure_residual: closure, isotropy_residual: isotropy, dim, expected_dim: expected, dim_ok: dim as i64 == expected }
    }

    /// `β_ᾱ = ½[Tr ad_ᾱ − Tr(ad_ᾱ|_𝔭)]` for each polarization basis vector.
    pub fn beta_vector(&self, p: &PolarizationSpec) -> Vec<f64> {
        let pm = p.matrix();
        let pinv = pm.clone().pseudo_inverse(1e-12).expect("pseudo-inverse of polarization basis");
        p.basis
            .iter()
            .map(|x| {
                let ad = self.ad_matrix(x);
                let full = ad.trace();
                let restricted = (&pinv * &ad * &pm).trace();
                0.5 * (full - restricted)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexEstimate {
    pub index: usize,
    pub generic_rank: usize,
    /// Sampled ranks varied; the estimate might come from unlucky draws.
    pub ranks_disagree: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubalgebraSplit {
    pub h: Vec<usize>,
    pub m: Vec<usize>,
}

impl SubalgebraSplit {
    pub fn new(dim: usize, h: Vec<usize>) -> Self {
        let m = (0..dim).filter(|i| !h.contains(i)).collect();
        SubalgebraSplit { h, m }
    }

    /// Max `|C^a_{αβ}|` with `a` in the complement.
    pub fn closure_residual(&self, alg: &LieAlgebra) -> f64 {
        let mut r: f64 = 0.0;
        for &a in &self.h {
            for &b in &self.h {
                for &k in &self.m {
                    r = r.max(alg.c(a, b, k).abs());
                }
            }
        }
        r
    }
}

/// Symmetric non-degenerate form on the complement, both index positions.
#[derive(Debug, Clone)]
pub struct BilinearForm {
    pub lower: RMat,
    pub upper: RMat,
}

impl BilinearForm {
    pub fn from_upper(upper: RMat) -> Option<Self> {
        let lower = upper.clone().try_inverse()?;
        Some(BilinearForm { lower, upper })
    }

    pub fn from_lower(lower: RMat) -> Option<Self> {
        let upper = lower.clone().try_inverse()?;
        Some(BilinearForm { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn symmetry_residual(&self) -> f64 {
        crate::linalg::max_abs_real(&(&self.lower - self.lower.transpose()))
    }

    pub fn inverse_residual(&self) -> f64 {
        let n = self.dim();
        crate::linalg::max_abs_real(&(&self.lower * &self.upper - RMat::identity(n, n)))
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.upper.clone().svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }
}

#[derive(Debug, Clone)]
pub struct PolarizationSpec {
    pub basis: Vec<Vec<f64>>,
}

impl PolarizationSpec {
    /// Columns are the basis vectors.
    pub fn matrix(&self) -> RMat {
        let n = self.basis.first().map_or(0, |v| v.len());
        RMat::from_fn(n, self.basis.len(), |i, j| self.basis[j][i])
    }

    pub fn dimension(&self) -> usize {
        numerical_rank(&self.matrix(), RANK_TOL)
    }

    pub fn distance_from_span(&self, z: &[f64]) -> f64 {
        let pm = self.matrix();
        let pinv = pm.clone().pseudo_inverse(1e-12).expect("pseudo-inverse of polarization basis");
        let zv = nalgebra::DVector::from_column_slice(z);
        let proj = &pm * (&pinv * &zv);
        (zv - proj).amax()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationReport {
    pub closure_residual: f64,
    pub isotropy_residual: f64,
    pub dim: usize,
    pub expected_dim: i64,
    pub dim_ok: bool,
}

/// Polynomial on the dual space: sum of `coef · Π f_{vars}` terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DualPolynomial {
    pub terms: Vec<(f64, Vec<usize>)>,
}

impl DualPolynomial {
    pub fn new(terms: Vec<(f64, Vec<usize>)>) -> Self {
        DualPolynomial { terms }
    }

    pub fn coordinate(a: usize) -> Self {
        DualPolynomial { terms: vec![(1.0, vec![a])] }
    }

    pub fn constant(v: f64) -> Self {
        DualPolynomial { terms: vec![(v, vec![])] }
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(_, v)| v.len()).max().unwrap_or(0)
    }

    pub fn eval(&self, f: &[C64]) -> C64 {
        self.terms.iter().map(|(c, vars)| vars.iter().fold(C64::new(*c, 0.0), |acc, &a| acc * f[a])).sum()
    }

    pub fn gradient(&self, f: &[C64]) -> Vec<C64> {
        let mut g = vec![C64::new(0.0, 0.0); f.len()];
        for (c, vars) in &self.terms {
            for (pos, &a) in vars.iter().enumerate() {
                let rest = vars.iter().enumerate().filter(|(p, _)| *p != pos).fold(C64::new(*c, 0.0), |acc, (_, &b)| acc * f[b]);
                g[a] += rest;
            }
        }
        g
    }

    pub fn mul(&self, o: &DualPolynomial) -> DualPolynomial {
        let mut terms = Vec::new();
        for (a, va) in &self.terms {
            for (b, vb) in &o.terms {
                let mut v = va.clone();
                v.extend(vb);
                terms.push((a * b, v));
            }
        }
        DualPolynomial { terms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn five_dim() -> LieAlgebra {
        let labels = (1..=5).map(|i| format!("e{i}")).collect();
        LieAlgebra::from_brackets(
            labels,
            &[(0, 3, 0, -1.0), (0, 4, 1, 1.0), (1, 2, 0, 1.0), (1, 3, 1, 1.0), (2, 3, 2, -2.0), (2, 4, 3, 1.0), (3, 4, 4, -2.0)],
        )
    }

    fn five_casimir() -> DualPolynomial {
        DualPolynomial::new(vec![(1.0, vec![4, 0, 0]), (1.0, vec![1, 3, 0]), (-1.0, vec![1, 1, 2])])
    }

    fn cf(v: &[f64]) -> Vec<C64> {
        v.iter().map(|&x| C64::new(x, 0.0)).collect()
    }

    #[test]
    fn five_dim_is_a_lie_algebra() {
        let g = five_dim();
        assert_eq!(g.antisymmetry_residual(), 0.0);
        assert_eq!(g.jacobi_residual(), 0.0);
        assert_eq!(LieAlgebra::abelian(4).jacobi_residual(), 0.0);
    }

    #[test]
    fn perturbed_constants_break_jacobi() {
        let mut g = five_dim();
        g.set_c(0, 3, 0, -1.0 + 1e-3);
        g.set_c(3, 0, 0, 1.0 - 1e-3);
        assert!(g.jacobi_residual() >= 1e-3 - 1e-15);
    }

    #[test]
    fn orbit_dimensions_and_index() {
        let g = five_dim();
        assert_eq!(g.orbit_dimension(&[1.0, 0.0, 0.0, 0.0, 0.7]), 4);
        assert_eq!(g.orbit_dimension(&[0.0; 5]), 0);
        assert_eq!(g.algebra_index(20, 1).index, 1);
        assert_eq!(LieAlgebra::abelian(3).algebra_index(5, 1).index, 3);
    }

    #[test]
    fn casimir_and_bracket_example() {
        let g = five_dim();
        assert!(g.verify_casimir(&five_casimir(), 30, 2) < 1e-12);
        assert_eq!(g.verify_casimir(&DualPolynomial::constant(3.0), 5, 2), 0.0);
        let f = cf(&[0.3, -0.2, 0.5, 0.9, -0.4]);
        let pb = g.poisson_bracket(&DualPolynomial::coordinate(0), &DualPolynomial::coordinate(3), &f);
        assert_abs_diff_eq!(pb.re, -0.3, epsilon = 1e-15);
    }

    #[test]
    fn adh_invariance_of_five_dim_form() {
        let g = five_dim();
        let split = SubalgebraSplit::new(5, vec![4]);
        assert_eq!(split.closure_residual(&g), 0.0);
        let (c1, c2, c3, c4) = (0.7, -0.4, 1.3, -0.9);
        let upper = RMat::from_row_slice(4, 4, &[0.0, 0.0, 0.0, -c3, 0.0, c4, c3, c2, 0.0, c3, 0.0, 0.0, -c3, c2, 0.0, c1]);
        let form = BilinearForm::from_upper(upper).unwrap();
        assert!(g.adh_invariance_residual(&split, &form.lower) < 1e-13);
        let random = RMat::from_row_slice(4, 4, &[1.0, 0.2, 0.3, 0.1, 0.2, 2.0, 0.4, 0.5, 0.3, 0.4, 3.0, 0.6, 0.1, 0.5, 0.6, 4.0]);
        assert!(g.adh_invariance_residual(&split, &random) > 1e-3);
    }

    #[test]
    fn polarization_and_beta() {
        let g = five_dim();
        let unit = |k: usize| {
            let mut v = vec![0.0; 5];
            v[k] = 1.0;
            v
        };
        let p = PolarizationSpec { basis: vec![unit(0), unit(1), unit(4)] };
        let lambda = [1.0, 0.0, 0.0, 0.0, 0.4];
        let rep = g.check_polarization(&lambda, &p, g.orbit_dimension(&lambda));
        assert!(rep.closure_residual < 1e-12 && rep.isotropy_residual < 1e-12 && rep.dim_ok);
        let ab = LieAlgebra::abelian(3);
        let whole = PolarizationSpec { basis: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]] };
        assert_eq!(ab.beta_vector(&whole), vec![0.0; 3]);
    }

    proptest! {
        #[test]
        fn coadjoint_matrix_is_linear_and_antisymmetric(v in prop::collection::vec(-1.0f64..1.0, 12)) {
            let g = five_dim();
            let (a, b) = (v[10], v[11]);
            let f = cf(&v[0..5]);
            let h = cf(&v[5..10]);
            let mix: Vec<C64> = f.iter().zip(&h).map(|(x, y)| x * a + y * b).collect();
            let lhs = g.coadjoint_matrix(&mix);
            let rhs = g.coadjoint_matrix(&f) * C64::new(a, 0.0) + g.coadjoint_matrix(&h) * C64::new(b, 0.0);
            prop_assert!(crate::linalg::max_abs(&(&lhs - &rhs)) < 1e-12);
            prop_assert!(crate::linalg::max_abs(&(&lhs + lhs.transpose())) < 1e-15);
            // entrywise triple-loop oracle
            for p in 0..5 { for q in 0..5 {
                let mut s = 0.0;
                for k in 0..5 { s += g.c(p, q, k) * v[k]; }
                prop_assert!((g.coadjoint_matrix(&f)[(p, q)].re - s).abs() < 1e-15);
            }}
        }

        #[test]
        fn poisson_bracket_antisymmetric_and_leibniz(v in prop::collection::vec(-1.0f64..1.0, 5)) {
            let g = five_dim();
            let f = cf(&v);
            let phi = DualPolynomial::new(vec![(1.0, vec![0, 1]), (0.5, vec![3])]);
            let psi = DualPolynomial::new(vec![(2.0, vec![4, 2]), (-1.0, vec![1, 1])]);
            let chi = five_casimir();
            let ab = g.poisson_bracket(&phi, &psi, &f);
            let ba = g.poisson_bracket(&psi, &phi, &f);
            prop_assert!((ab + ba).norm() < 1e-12);
            prop_assert!(g.poisson_bracket(&phi, &phi, &f).norm() < 1e-12);
            let lhs = g.poisson_bracket(&phi.mul(&psi), &DualPolynomial::coordinate(2), &f);
            let rhs = phi.eval(&f) * g.poisson_bracket(&psi, &DualPolynomial::coordinate(2), &f)
                + psi.eval(&f) * g.poisson_bracket(&phi, &DualPolynomial::coordinate(2), &f);
            prop_assert!((lhs - rhs).norm() < 1e-10);
            for a in 0..5 {
                prop_assert!(g.poisson_bracket(&chi, &DualPolynomial::coordinate(a), &f).norm() < 1e-12);
            }
        }

        #[test]
        fn orbit_dimension_is_even(v in prop::collection::vec(-1.0f64..1.0, 5)) {
            prop_assert_eq!(five_dim().orbit_dimension(&v) % 2, 0);
        }
    }
}
