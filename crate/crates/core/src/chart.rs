//! Numeric group engine: matrix realisation of canonical coordinates of the
//! second kind, chart inversion, and invariant frames as jets.

use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::jet::{Jet, JetError, JetSpace};
use crate::lie::LieAlgebra;
use crate::linalg::{c, numerical_rank, JetMat, RMat, ONE};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChartError {
    #[error("chart inversion did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular frame: {0}")]
    Singular(#[from] JetError),
}

/// `ρ(e_A)` for every basis element.
#[derive(Debug, Clone)]
pub struct MatrixRep {
    pub n: usize,
    pub mats: Vec<RMat>,
}

impl MatrixRep {
    pub fn new(mats: Vec<RMat>) -> Self {
        let n = mats.first().map_or(0, |m| m.nrows());
        MatrixRep { n, mats }
    }

    /// Adjoint representation; faithful only for centreless algebras.
    pub fn adjoint(alg: &LieAlgebra) -> Self {
        let mats = (0..alg.dim())
            .map(|a| {
                let mut x = vec![0.0; alg.dim()];
                x[a] = 1.0;
                alg.ad_matrix(&x)
            })
            .collect();
        MatrixRep::new(mats)
    }

    /// Max entry of `[ρ_A, ρ_B] − C^C_{AB} ρ_C`.
    pub fn homomorphism_residual(&self, alg: &LieAlgebra) -> f64 {
        let d = alg.dim();
        let mut r: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let mut m = &self.mats[a] * &self.mats[b] - &self.mats[b] * &self.mats[a];
                for k in 0..d {
                    m -= &self.mats[k] * alg.c(a, b, k);
                }
                r = r.max(crate::linalg::max_abs_real(&m));
            }
        }
        r
    }

    /// Columns are the flattened generators.
    fn stacked(&self) -> RMat {
        let nn = self.n * self.n;
        RMat::from_fn(nn, self.mats.len(), |r, a| self.mats[a][(r / self.n, r % self.n)])
    }

    pub fn is_faithful(&self) -> bool {
        numerical_rank(&self.stacked(), 1e-9) == self.mats.len()
    }
}

/// Coordinate `k` multiplies `exp(c_k ρ(e_{basis[k]}))`; coordinate 0 is the
/// rightmost factor.
#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub names: Vec<String>,
    pub basis: Vec<usize>,
}

#[derive(Debug)]
pub struct GroupChart {
    pub rep: MatrixRep,
    pub chart: ChartSpec,
    gens: Vec<RMat>,
    /// Maps a flattened matrix to basis coefficients.
    decompose: RMat,
}

/// Invariant frames at one point as jets in the seeded coordinates.
#[derive(Debug, Clone)]
pub struct FrameJets {
    /// `xi.get(i, A)` = `ξ_A^i`.
    pub xi: JetMat,
    /// `eta.get(i, A)` = `η_A^i`.
    pub eta: JetMat,
    /// `sigma.get(A, i)` = `σ^A_i`.
    pub sigma: JetMat,
}

impl GroupChart {
    pub fn new(rep: MatrixRep, chart: ChartSpec) -> Self {
        let gens = chart.basis.iter().map(|&a| rep.mats[a].clone()).collect();
        let decompose = rep.stacked().pseudo_inverse(1e-12).expect("pseudo-inverse of generators");
        GroupChart { rep, chart, gens, decompose }
    }

    pub fn dim(&self) -> usize {
        self.chart.names.len()
    }

    pub fn matrix(&self, coords: &[f64]) -> RMat {
        let n = self.rep.n;
        let mut g = RMat::identity(n, n);
        for (k, &ck) in coords.iter().enumerate() {
            g = (&self.gens[k] * ck).exp() * g;
        }
        g
    }

    /// `∂g/∂c_k` for every coordinate.
    fn jacobian(&self, coords: &[f64]) -> RMat {
        let n = self.rep.n;
        let m = self.dim();
        let factors: Vec<RMat> = coords.iter().enumerate().map(|(k, &ck)| (&self.gens[k] * ck).exp()).collect();
        let mut right = vec![RMat::identity(n, n); m + 1];
        for k in 0..m {
            right[k + 1] = &factors[k] * &right[k];
        }
        let mut left = RMat::identity(n, n);
        let mut jac = RMat::zeros(n * n, m);
        for k in (0..m).rev() {
            let d = &left * &self.gens[k] * &right[k + 1];
            for r in 0..n * n {
                jac[(r, k)] = d[(r / n, r % n)];
            }
            left = &left * &factors[k];
        }
        jac
    }

    /// Newton iteration with step halving; polishes two steps past the
    /// tolerance so the coordinates are accurate to rounding.
    pub fn invert(&self, target: &RMat, guess: &[f64]) -> Result<Vec<f64>, ChartError> {
        const TOL: f64 = 1e-11;
        const MAX_ITER: usize = 50;
        let resid = |c: &[f64]| (self.matrix(c) - target).norm();
        let mut x = guess.to_vec();
        let mut r = resid(&x);
        let mut polish = 0;
        for _ in 0..MAX_ITER {
            if r < TOL {
                polish += 1;
                if polish > 2 || r == 0.0 {
                    return Ok(x);
                }
            }
            let f = self.matrix(&x) - target;
            let fv = DVector::from_iterator(f.len(), (0..f.nrows()).flat_map(|i| (0..f.ncols()).map(move |j| (i, j))).map(|(i, j)| f[(i, j)]));
            let j = self.jacobian(&x);
            let step = j.svd(true, true).solve(&fv, 1e-14).map_err(|_| ChartError::NoConvergence { iterations: 0, residual: r })?;
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
                let rt = resid(&trial);
                if rt < r || t < 1e-6 || (r < TOL && rt <= r * 1.0001) {
                    x = trial;
                    r = rt;
                    break;
                }
                t *= 0.5;
            }
        }
        if r < TOL {
            Ok(x)
        } else {
            Err(ChartError::NoConvergence { iterations: MAX_ITER, residual: r })
        }
    }

    fn decompose_jets(&self, m: &JetMat) -> Vec<Jet> {
        let n = self.rep.n;
        let order = m.order();
        let sp = m.space().clone();
        (0..self.decompose.nrows())
            .map(|a| {
                let mut acc = Jet::zero(&sp, order);
                for r in 0..n * n {
                    let w = self.decompose[(a, r)];
                    if w != 0.0 {
                        acc = &acc + &m.data[r].scale(c(w));
                    }
                }
                acc
            })
            .collect()
    }

    /// `exp(c Y)` and `exp(−c Y)` as jets, with `c = base + δ`.
    fn factor_jets(&self, k: usize, base: f64, delta: &Jet, order: usize) -> (JetMat, JetMat) {
        let sp = delta.space().clone();
        let y = crate::linalg::complexify(&self.gens[k]);
        let e0 = crate::linalg::complexify(&(&self.gens[k] * base).exp());
        let e0i = crate::linalg::complexify(&(&self.gens[k] * -base).exp());
        let n = self.rep.n;
        let mut fwd = JetMat::identity(&sp, order, n);
        let mut bwd = JetMat::identity(&sp, order, n);
        if !delta.is_constant() {
            let mut ypow = crate::linalg::CMat::identity(n, n);
            let mut dpow = Jet::constant(&sp, order, ONE);
            let mut fact = 1.0;
            for p in 1..=order {
                ypow = &ypow * &y;
                dpow = &dpow * delta;
                fact *= p as f64;
                let t = JetMat::constant(&sp, order, &ypow).scale_jet(&dpow).scale(c(1.0 / fact));
                fwd = fwd.add(&t);
                bwd = if p % 2 == 1 { bwd.sub(&t) } else { bwd.add(&t) };
            }
        }
        (fwd.mul_const_left(&e0), bwd.mul_const_left(&e0i))
    }

    /// Frames at `base`; coordinate `k` is seeded as jet variable `seed[k]`
    /// when present and held constant otherwise.
    pub fn frame_jets(&self, base: &[f64], seed: &[Option<usize>], space: &Arc<JetSpace>, order: usize) -> Result<FrameJets, ChartError> {
        let m = self.dim();
        let n = self.rep.n;
        let deltas: Vec<Jet> = (0..m)
            .map(|k| match seed[k] {
                Some(v) => Jet::var(space, order, v, c(0.0)),
                None => Jet::zero(space, order),
            })
            .collect();
        let mut fwd = Vec::with_capacity(m);
        let mut bwd = Vec::with_capacity(m);
        for k in 0..m {
            let (f, b) = self.factor_jets(k, base[k], &deltas[k], order);
            fwd.push(f);
            bwd.push(b);
        }
        let yk: Vec<JetMat> = (0..m).map(|k| JetMat::constant(space, order, &crate::linalg::complexify(&self.gens[k]))).collect();

        // J_L[:, k] = coeffs of P_k⁻¹ Y_k P_k with P_k = F_k ⋯ F_0
        let mut jl = JetMat::zeros(space, order, m, m);
        let mut p = JetMat::identity(space, order, n);
        let mut pinv = JetMat::identity(space, order, n);
        for k in 0..m {
            p = fwd[k].mul(&p);
            pinv = pinv.mul(&bwd[k]);
            let col = self.decompose_jets(&pinv.mul(&yk[k]).mul(&p));
            for (a, v) in col.into_iter().enumerate() {
                jl.set(a, k, v);
            }
        }
        // J_R[:, k] = coeffs of L_k Y_k L_k⁻¹ with L_k = F_{m−1} ⋯ F_{k+1}
        let mut jr = JetMat::zeros(space, order, m, m);
        let mut l = JetMat::identity(space, order, n);
        let mut linv = JetMat::identity(space, order, n);
        for k in (0..m).rev() {
            let col = self.decompose_jets(&l.mul(&yk[k]).mul(&linv));
            for (a, v) in col.into_iter().enumerate() {
                jr.set(a, k, v);
            }
            l = l.mul(&fwd[k]);
            linv = bwd[k].mul(&linv);
        }
        let xi = jl.inverse()?;
        let eta = jr.inverse()?.scale(c(-1.0));
        let sigma = jr.scale(c(-1.0));
        Ok(FrameJets { xi, eta, sigma })
    }

    /// `ξ_A` at an arbitrary point by central differences of
    /// `coords(g · exp(t e_A))`.
    pub fn left_field_fd(&self, a: usize, point: &[f64], h: f64) -> Result<Vec<f64>, ChartError> {
        let g = self.matrix(point);
        let step = |t: f64| self.invert(&(&g * (&self.rep.mats[a] * t).exp()), point);
        let plus = step(h)?;
        let minus = step(-h)?;
        Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect())
    }

    /// `η_A` at an arbitrary point by central differences of
    /// `−coords(exp(t e_A) · g)`.
    pub fn right_field_fd(&self, a: usize, point: &[f64], h: f64) -> Result<Vec<f64>, ChartError> {
        let g = self.matrix(point);
        let step = |t: f64| self.invert(&((&self.rep.mats[a] * t).exp() * &g), point);
        let plus = step(h)?;
        let minus = step(-h)?;
        Ok(plus.iter().zip(&minus).map(|(p, m)| -(p - m) / (2.0 * h)).collect())
    }
}

/// Largest defect of `[F_A, F_B] = C^C_{AB} F_C` for vector-field jets with
/// `fields.get(i, A)` = `F_A^i`, taken at the base point.
pub fn field_commutator_residual(fields: &JetMat, alg: &LieAlgebra, sign: f64) -> Result<f64, JetError> {
    let nc = fields.rows;
    let d = alg.dim();
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            for i in 0..nc {
                let mut v = c(0.0);
                for j in 0..nc {
                    v += fields.get(j, a).value() * fields.get(i, b).diff(j)?.value();
                    v -= fields.get(j, b).value() * fields.get(i, a).diff(j)?.value();
                }
                for k in 0..d {
                    v -= fields.get(i, k).value() * (sign * alg.c(a, b, k));
                }
                worst = worst.max(v.norm());
            }
        }
    }
    Ok(worst)
}

/// Largest `[ξ_A, η_B]^i` at the base point.
pub fn mixed_commutator_residual(xi: &JetMat, eta: &JetMat) -> Result<f64, JetError> {
    let nc = xi.rows;
    let mut worst: f64 = 0.0;
    for a in 0..xi.cols {
        for b in 0..eta.cols {
            for i in 0..nc {
                let mut v = c(0.0);
                for j in 0..nc {
                    v += xi.get(j, a).value() * eta.get(i, b).diff(j)?.value();
                    v -= eta.get(j, b).value() * xi.get(i, a).diff(j)?.value();
                }
                worst = worst.max(v.norm());
            }
        }
    }
    Ok(worst)
}

/// Largest component of `2dσ^C + C^C_{AB} σ^A ∧ σ^B` at the base point.
pub fn maurer_cartan_residual(sigma: &JetMat, alg: &LieAlgebra) -> Result<f64, JetError> {
    let d = alg.dim();
    let nc = sigma.cols;
    let mut worst: f64 = 0.0;
    for cc in 0..d {
        for i in 0..nc {
            for j in (i + 1)..nc {
                let mut v = (sigma.get(cc, j).diff(i)?.value() - sigma.get(cc, i).diff(j)?.value()) * 2.0;
                for a in 0..d {
                    for b in 0..d {
                        let k = alg.c(a, b, cc);
                        if k != 0.0 {
                            let w = sigma.get(a, i).value() * sigma.get(b, j).value() - sigma.get(a, j).value() * sigma.get(b, i).value();
                            v += w * k;
                        }
                    }
                }
                worst = worst.max(v.norm());
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn five_dim() -> LieAlgebra {
        let labels = (1..=5).map(|i| format!("e{i}")).collect();
        LieAlgebra::from_brackets(
            labels,
            &[(0, 3, 0, -1.0), (0, 4, 1, 1.0), (1, 2, 0, 1.0), (1, 3, 1, 1.0), (2, 3, 2, -2.0), (2, 4, 3, 1.0), (3, 4, 4, -2.0)],
        )
    }

    fn e(n: usize, i: usize, j: usize) -> RMat {
        let mut m = RMat::zeros(n, n);
        m[(i, j)] = 1.0;
        m
    }

    fn five_rep() -> MatrixRep {
        MatrixRep::new(vec![e(3, 0, 2), e(3, 1, 2), -e(3, 0, 1), e(3, 0, 0) - e(3, 1, 1), -e(3, 1, 0)])
    }

    fn five_chart() -> GroupChart {
        let names = ["x1", "x2", "x3", "x4", "h"].iter().map(|s| s.to_string()).collect();
        GroupChart::new(five_rep(), ChartSpec { names, basis: vec![0, 1, 2, 3, 4] })
    }

    #[test]
    fn representation_is_faithful_homomorphism() {
        let rep = five_rep();
        assert_eq!(rep.homomorphism_residual(&five_dim()), 0.0);
        assert!(rep.is_faithful());
        assert!(MatrixRep::adjoint(&five_dim()).homomorphism_residual(&five_dim()) < 1e-14);
    }

    #[test]
    fn chart_identity_and_single_factor() {
        let ch = five_chart();
        assert_eq!(ch.matrix(&[0.0; 5]), RMat::identity(3, 3));
        let one = ch.matrix(&[0.0, 0.0, 0.0, 0.3, 0.0]);
        assert_abs_diff_eq!((one - (five_rep().mats[3].clone() * 0.3).exp()).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(ch.invert(&RMat::identity(3, 3), &[0.0; 5]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn chart_roundtrip_and_far_target_fails() {
        let ch = five_chart();
        let mut rng = crate::sampling::stream_rng(1, "roundtrip");
        for _ in 0..10 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let back = ch.invert(&ch.matrix(&x), &[0.0; 5]).unwrap();
            for (a, b) in back.iter().zip(&x) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
        // −I lies outside the image of the chart
        let far = -RMat::identity(3, 3);
        assert!(matches!(ch.invert(&far, &[0.0; 5]), Err(ChartError::NoConvergence { .. })));
    }

    #[test]
    fn frames_match_flow_differences() {
        let ch = five_chart();
        let x = [0.2, -0.1, 0.15, 0.25, 0.0];
        let sp = JetSpace::get(5, 1);
        let seed: Vec<Option<usize>> = (0..5).map(Some).collect();
        let fr = ch.frame_jets(&x, &seed, &sp, 1).unwrap();
        for a in 0..5 {
            let l = ch.left_field_fd(a, &x, 1e-5).unwrap();
            let r = ch.right_field_fd(a, &x, 1e-5).unwrap();
            for i in 0..5 {
                assert_abs_diff_eq!(fr.xi.get(i, a).value().re, l[i], epsilon = 1e-7);
                assert_abs_diff_eq!(fr.eta.get(i, a).value().re, r[i], epsilon = 1e-7);
            }
        }
        // ξ_5 = X_5 + e^{−2x⁴}∂_h, η_5 = −∂_h
        assert_abs_diff_eq!(fr.xi.get(4, 4).value().re, (-2.0f64 * 0.25).exp(), epsilon = 1e-13);
        assert_abs_diff_eq!(fr.eta.get(4, 4).value().re, -1.0, epsilon = 1e-13);
    }

    #[test]
    fn commutators_and_maurer_cartan() {
        let ch = five_chart();
        let g = five_dim();
        let x = [0.1, 0.2, -0.3, 0.05, 0.0];
        let sp = JetSpace::get(5, 2);
        let seed: Vec<Option<usize>> = (0..5).map(Some).collect();
        let fr = ch.frame_jets(&x, &seed, &sp, 2).unwrap();
        assert!(field_commutator_residual(&fr.xi, &g, 1.0).unwrap() < 1e-12);
        assert!(field_commutator_residual(&fr.eta, &g, 1.0).unwrap() < 1e-12);
        assert!(mixed_commutator_residual(&fr.xi, &fr.eta).unwrap() < 1e-12);
        assert!(maurer_cartan_residual(&fr.sigma, &g).unwrap() < 1e-12);
        let duality = fr.sigma.mul(&fr.eta);
        for a in 0..5 {
            for b in 0..5 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(duality.get(a, b).value().re, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn abelian_chart_has_trivial_frames() {
        let alg = LieAlgebra::abelian(2);
        let rep = MatrixRep::new(vec![e(3, 0, 2), e(3, 1, 2)]);
        assert_eq!(rep.homomorphism_residual(&alg), 0.0);
        let ch = GroupChart::new(rep, ChartSpec { names: vec!["a".into(), "b".into()], basis: vec![0, 1] });
        let sp = JetSpace::get(2, 1);
        let fr = ch.frame_jets(&[0.3, -0.2], &[Some(0), Some(1)], &sp, 1).unwrap();
        for a in 0..2 {
            for i in 0..2 {
                let want = if a == i { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(fr.sigma.get(a, i).value().re.abs(), want, epsilon = 1e-15);
                assert!(fr.sigma.get(a, i).diff(0).unwrap().value().norm() < 1e-15);
            }
        }
    }
}
