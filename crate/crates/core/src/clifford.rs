//! Gamma matrices for an arbitrary non-degenerate form, isotropy spin
//! generators and the constant parts of the spin connection.

use nalgebra::DVector;
use thiserror::Error;

use crate::lie::{BilinearForm, LieAlgebra, SubalgebraSplit};
use crate::linalg::{anticomm, c, comm, max_abs, CMat, I, ONE, ZERO};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CliffordError {
    #[error("bilinear form is near-degenerate (condition number {0:e})")]
    Degenerate(f64),
    #[error("expected {expected} gamma matrices, got {got}")]
    Count { expected: usize, got: usize },
    #[error("gamma matrices must be square of equal size")]
    Shape,
}

#[derive(Debug, Clone)]
pub struct GammaSet {
    /// `γ̂^a`
    pub upper: Vec<CMat>,
    /// `γ̂_a = G_ab γ̂^b`
    pub lower: Vec<CMat>,
}

impl GammaSet {
    pub fn from_upper(upper: Vec<CMat>, form: &BilinearForm) -> Result<GammaSet, CliffordError> {
        let n = form.dim();
        if upper.len() != n {
            return Err(CliffordError::Count { expected: n, got: upper.len() });
        }
        let d = upper[0].nrows();
        if upper.iter().any(|g| g.nrows() != d || g.ncols() != d) {
            return Err(CliffordError::Shape);
        }
        let lower = (0..n)
            .map(|a| {
                let mut m = CMat::zeros(d, d);
                for b in 0..n {
                    m += &upper[b] * c(form.lower[(a, b)]);
                }
                m
            })
            .collect();
        Ok(GammaSet { upper, lower })
    }

    pub fn spinor_dim(&self) -> usize {
        self.upper[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn identity(&self) -> CMat {
        CMat::identity(self.spinor_dim(), self.spinor_dim())
    }
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Euclidean Clifford generators of size `2^⌊n/2⌋` (Jordan–Wigner).
pub fn euclidean_generators(n: usize) -> Vec<CMat> {
    let sx = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
    let sy = CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]);
    let sz = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
    let id2 = CMat::identity(2, 2);
    let k = n / 2;
    let chain = |j: usize, mid: &CMat| {
        let mut out = CMat::identity(1, 1);
        for _ in 0..j {
            out = kron(&out, &sz);
        }
        out = kron(&out, mid);
        for _ in (j + 1)..k {
            out = kron(&out, &id2);
        }
        out
    };
    let mut gens = Vec::with_capacity(n);
    for j in 0..k {
        gens.push(chain(j, &sx));
        gens.push(chain(j, &sy));
    }
    if n % 2 == 1 {
        let mut out = CMat::identity(1, 1);
        for _ in 0..k {
            out = kron(&out, &sz);
        }
        gens.push(out);
    }
    gens
}

/// `G^{ab} = S D Sᵀ`, signature generators scaled by `i` on negative
/// eigenvalues, then `γ̂^a = Σ_k S_ak √|D_k| Γ^k`.
pub fn build_gammas(form: &BilinearForm) -> Result<GammaSet, CliffordError> {
    let cond = form.condition_number();
    if !(cond <= 1e12) {
        return Err(CliffordError::Degenerate(cond));
    }
    let n = form.dim();
    let eig = form.upper.clone().symmetric_eigen();
    let base = euclidean_generators(n);
    let d = base[0].nrows();
    let std: Vec<CMat> = (0..n)
        .map(|k| if eig.eigenvalues[k] > 0.0 { base[k].clone() } else { &base[k] * I })
        .collect();
    let upper = (0..n)
        .map(|a| {
            let mut m = CMat::zeros(d, d);
            for k in 0..n {
                m += &std[k] * c(eig.eigenvectors[(a, k)] * eig.eigenvalues[k].abs().sqrt());
            }
            m
        })
        .collect();
    GammaSet::from_upper(upper, form)
}

/// `max |{γ̂^a, γ̂^b} − 2G^{ab}E|`.
pub fn anticommutator_residual(g: &GammaSet, form: &BilinearForm) -> f64 {
    let e = g.identity();
    let mut r: f64 = 0.0;
    for a in 0..g.len() {
        for b in 0..g.len() {
            r = r.max(max_abs(&(anticomm(&g.upper[a], &g.upper[b]) - &e * c(2.0 * form.upper[(a, b)]))));
        }
    }
    r
}

/// `max |{γ̂_a, γ̂_b} − 2G_{ab}E|`.
pub fn lowered_anticommutator_residual(g: &GammaSet, form: &BilinearForm) -> f64 {
    let e = g.identity();
    let mut r: f64 = 0.0;
    for a in 0..g.len() {
        for b in 0..g.len() {
            r = r.max(max_abs(&(anticomm(&g.lower[a], &g.lower[b]) - &e * c(2.0 * form.lower[(a, b)]))));
        }
    }
    r
}

/// `Λ_α = −⅛ G_ac C^a_{αb} [γ̂^b, γ̂^c]` for every `α` of the split.
pub fn spin_generators(alg: &LieAlgebra, split: &SubalgebraSplit, form: &BilinearForm, g: &GammaSet) -> Vec<CMat> {
    let m = &split.m;
    let d = g.spinor_dim();
    split
        .h
        .iter()
        .map(|&alpha| {
            let mut out = CMat::zeros(d, d);
            for (ai, &a) in m.iter().enumerate() {
                for (bi, &b) in m.iter().enumerate() {
                    let k = alg.c(alpha, b, a);
                    if k == 0.0 {
                        continue;
                    }
                    for ci in 0..m.len() {
                        let w = form.lower[(ai, ci)] * k;
                        if w != 0.0 {
                            out -= comm(&g.upper[bi], &g.upper[ci]) * c(w / 8.0);
                        }
                    }
                }
            }
            out
        })
        .collect()
}

/// `max |[Λ_α, Λ_β] − C^γ_{αβ} Λ_γ|`.
pub fn isotropy_rep_residual(lam: &[CMat], alg: &LieAlgebra, split: &SubalgebraSplit) -> f64 {
    let mut r: f64 = 0.0;
    for (i, &a) in split.h.iter().enumerate() {
        for (j, &b) in split.h.iter().enumerate() {
            let mut m = comm(&lam[i], &lam[j]);
            for (k, &g) in split.h.iter().enumerate() {
                m -= &lam[k] * c(alg.c(a, b, g));
            }
            r = r.max(max_abs(&m));
        }
    }
    r
}

/// `max |[Λ_α, γ̂^a] − C^a_{bα} γ̂^b|`.
pub fn comm1_residual(lam: &[CMat], g: &GammaSet, alg: &LieAlgebra, split: &SubalgebraSplit) -> f64 {
    let mut r: f64 = 0.0;
    for (i, &alpha) in split.h.iter().enumerate() {
        for (ai, &a) in split.m.iter().enumerate() {
            let mut m = comm(&lam[i], &g.upper[ai]);
            for (bi, &b) in split.m.iter().enumerate() {
                m -= &g.upper[bi] * c(alg.c(b, alpha, a));
            }
            r = r.max(max_abs(&m));
        }
    }
    r
}

/// `max |[Λ_α, γ̂_a] − C^b_{αa} γ̂_b|`.
pub fn comm2_residual(lam: &[CMat], g: &GammaSet, alg: &LieAlgebra, split: &SubalgebraSplit) -> f64 {
    let mut r: f64 = 0.0;
    for (i, &alpha) in split.h.iter().enumerate() {
        for (ai, &a) in split.m.iter().enumerate() {
            let mut m = comm(&lam[i], &g.lower[ai]);
            for (bi, &b) in split.m.iter().enumerate() {
                m -= &g.lower[bi] * c(alg.c(alpha, a, b));
            }
            r = r.max(max_abs(&m));
        }
    }
    r
}

pub fn trace_residual(mats: &[CMat]) -> f64 {
    mats.iter().map(|m| m.trace().norm()).fold(0.0, f64::max)
}

/// `Γ_a = −¼ Γ^d_{ba} γ̂^b γ̂_d`, with `gam[a][b][c]` = `Γ^a_{bc}` in 𝔪 positions.
pub fn spin_connection_constants(gam: &[f64], g: &GammaSet) -> Vec<CMat> {
    let n = g.len();
    let d = g.spinor_dim();
    (0..n)
        .map(|a| {
            let mut out = CMat::zeros(d, d);
            for b in 0..n {
                for dd in 0..n {
                    let k = gam[(dd * n + b) * n + a];
                    if k != 0.0 {
                        out -= &g.upper[b] * &g.lower[dd] * c(k / 4.0);
                    }
                }
            }
            out
        })
        .collect()
}

/// `γ̂^a Γ_a`.
pub fn contract_upper(g: &GammaSet, mats: &[CMat]) -> CMat {
    let mut out = CMat::zeros(g.spinor_dim(), g.spinor_dim());
    for (a, m) in mats.iter().enumerate() {
        out += &g.upper[a] * m;
    }
    out
}

/// `Γ(x) = γ̂^a(Γ_a + η_a^α Λ_α)` given `eta_h[a][α]` at the point.
pub fn spin_connection_at(g: &GammaSet, gamma_a: &[CMat], lam: &[CMat], eta_h: &[Vec<f64>]) -> CMat {
    let mut out = contract_upper(g, gamma_a);
    for (a, row) in eta_h.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            if v != 0.0 {
                out += &g.upper[a] * &lam[k] * c(v);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectivityReport {
    pub sys_ba: f64,
    pub sys_b: f64,
    pub cond_ls2: f64,
}

/// Algebraic conditions for `iħγ̂^a(∂_a + Γ_a)` to be the projection of an
/// invariant operator.
pub fn verify_projectivity(g: &GammaSet, lam: &[CMat], gamma_a: &[CMat], alg: &LieAlgebra, split: &SubalgebraSplit, hbar: f64) -> ProjectivityReport {
    let ih = I * hbar;
    let ba: Vec<CMat> = g.upper.iter().map(|m| m * ih).collect();
    let gamma = contract_upper(g, gamma_a);
    let b = &gamma * ih;
    let mut sys_ba: f64 = 0.0;
    let mut sys_b: f64 = 0.0;
    let mut cond: f64 = 0.0;
    for (i, &alpha) in split.h.iter().enumerate() {
        for (ai, &a) in split.m.iter().enumerate() {
            let mut m = comm(&ba[ai], &lam[i]);
            for (bi, &bb) in split.m.iter().enumerate() {
                m += &ba[bi] * c(alg.c(bb, alpha, a));
            }
            sys_ba = sys_ba.max(max_abs(&m));
        }
        let mut m = comm(&b, &lam[i]);
        let mut rhs = CMat::zeros(g.spinor_dim(), g.spinor_dim());
        for (ai, &a) in split.m.iter().enumerate() {
            for (k, &beta) in split.h.iter().enumerate() {
                let w = alg.c(a, alpha, beta);
                if w != 0.0 {
                    m -= &ba[ai] * &lam[k] * c(w);
                    rhs += &g.upper[ai] * &lam[k] * c(w);
                }
            }
        }
        sys_b = sys_b.max(max_abs(&m));
        cond = cond.max(max_abs(&(comm(&gamma, &lam[i]) - rhs)));
    }
    ProjectivityReport { sys_ba, sys_b, cond_ls2: cond }
}

/// `(i/2) Tr(γ̂¹γ̂²γ̂³)` for three 2×2 gammas.
pub fn pseudospin(g: &GammaSet) -> Option<f64> {
    if g.len() != 3 || g.spinor_dim() != 2 {
        return None;
    }
    Some(((&g.upper[0] * &g.upper[1] * &g.upper[2]).trace() * I * 0.5).re)
}

/// Least-squares intertwiner `S` with `S a_k = b_k S`; returns the smallest
/// singular value of the stacked linear system (zero when the sets are
/// similar) and the reciprocal condition number of `S`.
pub fn intertwiner_residual(a: &[CMat], b: &[CMat]) -> (f64, f64) {
    let d = a[0].nrows();
    let dd = d * d;
    let mut sys = CMat::zeros(dd * a.len(), dd);
    let id = CMat::identity(d, d);
    for (k, (ak, bk)) in a.iter().zip(b).enumerate() {
        // vec(S a) − vec(b S) with column-major vec
        let blk = ak.transpose().kronecker(&id) - id.kronecker(bk);
        sys.view_mut((k * dd, 0), (dd, dd)).copy_from(&blk);
    }
    let svd = sys.svd(false, true);
    let (imin, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let vt = svd.v_t.expect("right singular vectors");
    let v: DVector<_> = vt.row(imin).transpose().map(|z| z.conj());
    let s = CMat::from_column_slice(d, d, v.as_slice());
    let sv = s.svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin_s = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    (smin, if smax > 0.0 { smin_s / smax } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RMat;
    use proptest::prelude::*;

    fn five_dim() -> LieAlgebra {
        let labels = (1..=5).map(|i| format!("e{i}")).collect();
        LieAlgebra::from_brackets(
            labels,
            &[(0, 3, 0, -1.0), (0, 4, 1, 1.0), (1, 2, 0, 1.0), (1, 3, 1, 1.0), (2, 3, 2, -2.0), (2, 4, 3, 1.0), (3, 4, 4, -2.0)],
        )
    }

    fn five_form(c1: f64, c2: f64, c3: f64, c4: f64) -> BilinearForm {
        let up = RMat::from_row_slice(4, 4, &[0.0, 0.0, 0.0, -c3, 0.0, c4, c3, c2, 0.0, c3, 0.0, 0.0, -c3, c2, 0.0, c1]);
        BilinearForm::from_upper(up).unwrap()
    }

    fn algebraic_christoffel(alg: &LieAlgebra, split: &SubalgebraSplit, form: &BilinearForm) -> Vec<f64> {
        crate::geometry::christoffel_algebraic(alg, split, form)
    }

    #[test]
    fn euclidean_pair_and_minkowski_triple() {
        let id = BilinearForm::from_upper(RMat::identity(2, 2)).unwrap();
        let g = build_gammas(&id).unwrap();
        assert_eq!(g.spinor_dim(), 2);
        assert!(anticommutator_residual(&g, &id) < 1e-15);
        let mink = BilinearForm::from_upper(RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, -1.0]))).unwrap();
        let g = build_gammas(&mink).unwrap();
        assert!(anticommutator_residual(&g, &mink) < 1e-15);
        assert!(lowered_anticommutator_residual(&g, &mink) < 1e-15);
        assert!((pseudospin(&g).unwrap().abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_form_rejected() {
        let f = BilinearForm { upper: RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]), lower: RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e14]) };
        assert!(matches!(build_gammas(&f), Err(CliffordError::Degenerate(_))));
    }

    #[test]
    fn five_dim_spin_generator_closed_form() {
        let (c1, c2, c3, c4) = (0.7, -0.4, 1.3, -0.9);
        let alg = five_dim();
        let split = SubalgebraSplit::new(5, vec![4]);
        let form = five_form(c1, c2, c3, c4);
        let g = build_gammas(&form).unwrap();
        assert_eq!(g.spinor_dim(), 4);
        assert!(anticommutator_residual(&g, &form) < 1e-12);
        let lam = spin_generators(&alg, &split, &form, &g);
        let want = &g.upper[0] * &g.upper[2] * c(1.0 / (2.0 * c3));
        assert!(max_abs(&(&lam[0] - want)) < 1e-12);
        assert!(comm1_residual(&lam, &g, &alg, &split) < 1e-12);
        assert!(comm2_residual(&lam, &g, &alg, &split) < 1e-12);
        assert!(trace_residual(&lam) < 1e-12);
        let ga = spin_connection_constants(&algebraic_christoffel(&alg, &split, &form), &g);
        let p = verify_projectivity(&g, &lam, &ga, &alg, &split, 1.0);
        assert!(p.sys_ba < 1e-11 && p.sys_b < 1e-11 && p.cond_ls2 < 1e-11, "{p:?}");
        // constant spin connection in closed form
        let gg = contract_upper(&g, &ga);
        let (g1, g2, g3, g4) = (&g.upper[0], &g.upper[1], &g.upper[2], &g.upper[3]);
        let closed = g1 * g2 * g3 * c(c1 / (4.0 * c3 * c3)) + g1 * g3 * g4 * c(c2 / (4.0 * c3 * c3)) + g2 * g3 * g4 * c(1.0 / c3)
            - g1 * c(c1 / (4.0 * c3))
            + g3 * c(3.0 * c2 / (4.0 * c3))
            - g4 * c(2.0);
        assert!(max_abs(&(gg - closed)) < 1e-12);
    }

    #[test]
    fn perturbed_generators_detected() {
        let alg = five_dim();
        let split = SubalgebraSplit::new(5, vec![4]);
        let form = five_form(0.7, -0.4, 1.3, -0.9);
        let g = build_gammas(&form).unwrap();
        let mut lam = spin_generators(&alg, &split, &form, &g);
        // a single generator closes trivially; the γ-action detects the change
        lam[0][(0, 0)] += c(1e-3);
        assert!(comm1_residual(&lam, &g, &alg, &split) > 1e-4);
    }

    #[test]
    fn trivial_isotropy_action_has_zero_generators() {
        let alg = LieAlgebra::abelian(3);
        let split = SubalgebraSplit::new(3, vec![2]);
        let form = BilinearForm::from_upper(RMat::identity(2, 2)).unwrap();
        let g = build_gammas(&form).unwrap();
        let lam = spin_generators(&alg, &split, &form, &g);
        assert_eq!(max_abs(&lam[0]), 0.0);
        assert_eq!(isotropy_rep_residual(&lam, &alg, &split), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_admissible_forms_give_valid_gammas(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, c3 in 0.3f64..2.0, c4 in -2.0f64..2.0, flip in proptest::bool::ANY) {
            let c3 = if flip { -c3 } else { c3 };
            let form = five_form(c1, c2, c3, c4);
            let g = build_gammas(&form).unwrap();
            prop_assert!(anticommutator_residual(&g, &form) < 1e-11);
            prop_assert!(lowered_anticommutator_residual(&g, &form) < 1e-10);
        }

        #[test]
        fn gammas_are_basis_covariant(angle in 0.0f64..std::f64::consts::TAU, axis in 0usize..3) {
            let up = RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, -1.0, 2.0]));
            let form = BilinearForm::from_upper(up.clone()).unwrap();
            let mut o = RMat::identity(4, 4);
            let (i, j) = [(0, 1), (1, 2), (2, 3)][axis];
            o[(i, i)] = angle.cos();
            o[(j, j)] = angle.cos();
            o[(i, j)] = -angle.sin();
            o[(j, i)] = angle.sin();
            let rotated = BilinearForm::from_upper(&o * &up * o.transpose()).unwrap();
            let g = build_gammas(&form).unwrap();
            let gr = build_gammas(&rotated).unwrap();
            let transported: Vec<CMat> = (0..4).map(|a| {
                let mut m = CMat::zeros(4, 4);
                for b in 0..4 { m += &g.upper[b] * c(o[(a, b)]); }
                m
            }).collect();
            let (res, rcond) = intertwiner_residual(&transported, &gr.upper);
            prop_assert!(res < 1e-8);
            prop_assert!(rcond > 1e-6);
        }
    }
}
