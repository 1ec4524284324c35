//! Invariant metric, Christoffel symbols and scalar curvature from frame
//! jets.

use crate::chart::FrameJets;
use crate::jet::{Jet, JetError};
use crate::lie::{BilinearForm, LieAlgebra, SubalgebraSplit};
use crate::linalg::{c, JetMat};

/// Metric and inverse metric jets over the `nx` coordinates of `M`.
#[derive(Debug, Clone)]
pub struct MetricJets {
    pub lower: JetMat,
    pub upper: JetMat,
}

/// `g_ij = G_ab σ^a_i σ^b_j` and `g^{ij} = G^{ab} η_a^i η_b^j`.
pub fn metric_jets(fr: &FrameJets, split: &SubalgebraSplit, form: &BilinearForm, nx: usize) -> MetricJets {
    let sp = fr.sigma.space().clone();
    let order = fr.sigma.order().min(fr.eta.order());
    let m = &split.m;
    let mut lower = JetMat::zeros(&sp, order, nx, nx);
    let mut upper = JetMat::zeros(&sp, order, nx, nx);
    for i in 0..nx {
        for j in i..nx {
            let mut lo = Jet::zero(&sp, order);
            let mut up = Jet::zero(&sp, order);
            for (ai, &a) in m.iter().enumerate() {
                for (bi, &b) in m.iter().enumerate() {
                    let gl = form.lower[(ai, bi)];
                    if gl != 0.0 {
                        lo = &lo + &(fr.sigma.get(a, i) * fr.sigma.get(b, j)).scale(c(gl));
                    }
                    let gu = form.upper[(ai, bi)];
                    if gu != 0.0 {
                        up = &up + &(fr.eta.get(i, a) * fr.eta.get(j, b)).scale(c(gu));
                    }
                }
            }
            lower.set(i, j, lo.clone());
            lower.set(j, i, lo);
            upper.set(i, j, up.clone());
            upper.set(j, i, up);
        }
    }
    MetricJets { lower, upper }
}

/// `Γ^a_{bc} = −½C^a_{bc} − ½G^{ad}[G_{ec}C^e_{bd} + G_{eb}C^e_{cd}]` over 𝔪,
/// flattened as `[a][b][c]`.
pub fn christoffel_algebraic(alg: &LieAlgebra, split: &SubalgebraSplit, form: &BilinearForm) -> Vec<f64> {
    let m = &split.m;
    let n = m.len();
    let cm = |a: usize, b: usize, cc: usize| alg.c(m[b], m[cc], m[a]);
    let mut out = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for cc in 0..n {
                let mut s = -0.5 * cm(a, b, cc);
                for d in 0..n {
                    let gad = form.upper[(a, d)];
                    if gad == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for e in 0..n {
                        inner += form.lower[(e, cc)] * cm(e, b, d) + form.lower[(e, b)] * cm(e, cc, d);
                    }
                    s -= 0.5 * gad * inner;
                }
                out[(a * n + b) * n + cc] = s;
            }
        }
    }
    out
}

/// Coordinate Christoffels `Γ^i_{jk}` (flattened `[i][j][k]`) assembled from
/// the frame: algebraic part, frame-derivative part and isotropy part. The
/// result has one jet order less than the frame.
pub fn christoffel_frame(fr: &FrameJets, alg: &LieAlgebra, split: &SubalgebraSplit, form: &BilinearForm, nx: usize) -> Result<Vec<Jet>, JetError> {
    let gam = christoffel_algebraic(alg, split, form);
    let m = &split.m;
    let n = m.len();
    let sp = fr.sigma.space().clone();
    let order = fr.sigma.order().min(fr.eta.order()).checked_sub(1).ok_or(JetError::OrderUnderflow)?;
    // ∂_k η_b^i
    let mut deta = vec![Vec::new(); nx];
    for (k, slot) in deta.iter_mut().enumerate() {
        *slot = (0..nx).flat_map(|i| m.iter().map(move |&b| (i, b))).map(|(i, b)| fr.eta.get(i, b).diff(k)).collect::<Result<Vec<_>, _>>()?;
    }
    let sig = |a: usize, i: usize| fr.sigma.get(a, i).truncate(order);
    let eta = |i: usize, a: usize| fr.eta.get(i, a).truncate(order);
    let mut out = Vec::with_capacity(nx * nx * nx);
    for i in 0..nx {
        for j in 0..nx {
            for k in 0..nx {
                let mut acc = Jet::zero(&sp, order);
                for a in 0..n {
                    let ea = eta(i, m[a]);
                    for b in 0..n {
                        let sb = sig(m[b], j);
                        for cc in 0..n {
                            let g = gam[(a * n + b) * n + cc];
                            if g != 0.0 {
                                acc = &acc + &(&(&sb * &sig(m[cc], k)) * &ea).scale(c(g));
                            }
                        }
                        for &alpha in &split.h {
                            let w = alg.c(m[b], alpha, m[a]);
                            if w != 0.0 {
                                acc = &acc - &(&(&sb * &sig(alpha, k)) * &ea).scale(c(w));
                            }
                        }
                    }
                }
                for b in 0..n {
                    acc = &acc - &(&sig(m[b], j) * &deta[k][i * n + b]);
                }
                out.push(acc);
            }
        }
    }
    Ok(out)
}

/// `Γ^i_{jk} = ½ g^{il}(∂_j g_{lk} + ∂_k g_{lj} − ∂_l g_{jk})`.
pub fn levi_civita_oracle(metric: &MetricJets) -> Result<Vec<Jet>, JetError> {
    let nx = metric.lower.rows;
    let order = metric.lower.order().checked_sub(1).ok_or(JetError::OrderUnderflow)?;
    let sp = metric.lower.space().clone();
    let mut dg = Vec::with_capacity(nx);
    for l in 0..nx {
        dg.push(metric.lower.data.iter().map(|j| j.diff(l)).collect::<Result<Vec<_>, _>>()?);
    }
    let d = |l: usize, a: usize, b: usize| &dg[l][a * nx + b];
    let mut out = Vec::with_capacity(nx * nx * nx);
    for i in 0..nx {
        for j in 0..nx {
            for k in 0..nx {
                let mut acc = Jet::zero(&sp, order);
                for l in 0..nx {
                    let s = &(d(j, l, k) + d(k, l, j)) - d(l, j, k);
                    acc = &acc + &(&metric.upper.get(i, l).truncate(order) * &s);
                }
                out.push(acc.scale(c(0.5)));
            }
        }
    }
    Ok(out)
}

/// `R^a_{bcd} = ∂_cΓ^a_{db} − ∂_dΓ^a_{cb} + Γ^a_{ce}Γ^e_{db} − Γ^a_{de}Γ^e_{cb}`,
/// `R_{bd} = R^a_{bda}`, `R = g^{bd}R_{bd}` at the base point.
pub fn scalar_curvature(gam: &[Jet], upper: &JetMat, nx: usize) -> Result<f64, JetError> {
    let g = |a: usize, b: usize, cc: usize| &gam[(a * nx + b) * nx + cc];
    let gv = |a: usize, b: usize, cc: usize| g(a, b, cc).value();
    let mut r = c(0.0);
    for b in 0..nx {
        for d in 0..nx {
            let mut ric = c(0.0);
            for a in 0..nx {
                // R^a_{b d a}
                let mut v = g(a, a, b).diff(d)?.value() - g(a, d, b).diff(a)?.value();
                for e in 0..nx {
                    v += gv(a, d, e) * gv(e, a, b) - gv(a, a, e) * gv(e, d, b);
                }
                ric += v;
            }
            r += upper.get(b, d).value() * ric;
        }
    }
    Ok(r.re)
}

/// Largest `|Γ^i_{jk} − Γ^i_{kj}|` at the base point.
pub fn torsion_residual(gam: &[Jet], nx: usize) -> f64 {
    let mut r: f64 = 0.0;
    for i in 0..nx {
        for j in 0..nx {
            for k in 0..nx {
                r = r.max((gam[(i * nx + j) * nx + k].value() - gam[(i * nx + k) * nx + j].value()).norm());
            }
        }
    }
    r
}

/// Largest `|∇_k g_ij|` at the base point.
pub fn metricity_residual(gam: &[Jet], metric: &MetricJets) -> Result<f64, JetError> {
    let nx = metric.lower.rows;
    let g = |a: usize, b: usize| metric.lower.get(a, b).value();
    let gm = |a: usize, b: usize, cc: usize| gam[(a * nx + b) * nx + cc].value();
    let mut r: f64 = 0.0;
    for k in 0..nx {
        for i in 0..nx {
            for j in 0..nx {
                let mut v = metric.lower.get(i, j).diff(k)?.value();
                for l in 0..nx {
                    v -= gm(l, k, i) * g(l, j) + gm(l, k, j) * g(i, l);
                }
                r = r.max(v.norm());
            }
        }
    }
    Ok(r)
}

/// Largest component of the Lie derivative of the metric along each field
/// `fields.get(i, A)` restricted to the first `nx` coordinates.
pub fn killing_residual(fields: &JetMat, metric: &MetricJets) -> Result<f64, JetError> {
    let nx = metric.lower.rows;
    let g = |a: usize, b: usize| metric.lower.get(a, b).value();
    let mut r: f64 = 0.0;
    for a in 0..fields.cols {
        for i in 0..nx {
            for j in 0..nx {
                let mut v = c(0.0);
                for k in 0..nx {
                    let xk = fields.get(k, a);
                    v += xk.value() * metric.lower.get(i, j).diff(k)?.value();
                    v += g(k, j) * xk.diff(i)?.value() + g(i, k) * xk.diff(j)?.value();
                }
                r = r.max(v.norm());
            }
        }
    }
    Ok(r)
}

/// Largest entry of `g_ij g^{jk} − δ_i^k` at the base point.
pub fn inverse_residual(metric: &MetricJets) -> f64 {
    let p = metric.lower.value() * metric.upper.value();
    let n = p.nrows();
    let mut r: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            r = r.max((p[(i, j)] - c(want)).norm());
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::JetSpace;
    use crate::linalg::{RMat, ONE};

    #[test]
    fn abelian_christoffels_vanish() {
        let alg = LieAlgebra::abelian(3);
        let split = SubalgebraSplit::new(3, vec![]);
        let form = BilinearForm::from_upper(RMat::identity(3, 3)).unwrap();
        assert!(christoffel_algebraic(&alg, &split, &form).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn algebraic_christoffel_antisymmetric_part() {
        let labels = (1..=5).map(|i| format!("e{i}")).collect();
        let alg = LieAlgebra::from_brackets(
            labels,
            &[(0, 3, 0, -1.0), (0, 4, 1, 1.0), (1, 2, 0, 1.0), (1, 3, 1, 1.0), (2, 3, 2, -2.0), (2, 4, 3, 1.0), (3, 4, 4, -2.0)],
        );
        let split = SubalgebraSplit::new(5, vec![4]);
        let (c1, c2, c3, c4) = (0.7, -0.4, 1.3, -0.9);
        let up = RMat::from_row_slice(4, 4, &[0.0, 0.0, 0.0, -c3, 0.0, c4, c3, c2, 0.0, c3, 0.0, 0.0, -c3, c2, 0.0, c1]);
        let form = BilinearForm::from_upper(up).unwrap();
        let g = christoffel_algebraic(&alg, &split, &form);
        for a in 0..4 {
            for b in 0..4 {
                for cc in 0..4 {
                    let d = g[(a * 4 + b) * 4 + cc] - g[(a * 4 + cc) * 4 + b];
                    assert!((d + alg.c(b, cc, a)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn oracle_on_exponential_line_metric() {
        // g = e^{2x}: Γ^x_xx = 1
        let sp = JetSpace::get(1, 2);
        let x = Jet::var(&sp, 2, 0, c(0.3));
        let g = x.scale(c(2.0)).exp().unwrap();
        let gi = g.recip().unwrap();
        let metric = MetricJets { lower: JetMat { rows: 1, cols: 1, data: vec![g] }, upper: JetMat { rows: 1, cols: 1, data: vec![gi] } };
        let gam = levi_civita_oracle(&metric).unwrap();
        assert!((gam[0].value() - ONE).norm() < 1e-14);
        // one-dimensional metrics are flat
        assert!(scalar_curvature(&gam, &metric.upper, 1).unwrap().abs() < 1e-14);
    }

    #[test]
    fn round_sphere_has_positive_constant_curvature() {
        // dθ² + sin²θ dφ²: the contraction used here gives R = −2
        let sp = JetSpace::get(2, 2);
        let th = Jet::var(&sp, 2, 0, c(0.7));
        let s2 = {
            let s = th.sin().unwrap();
            &s * &s
        };
        let one = Jet::constant(&sp, 2, ONE);
        let zero = Jet::zero(&sp, 2);
        let lower = JetMat { rows: 2, cols: 2, data: vec![one.clone(), zero.clone(), zero.clone(), s2.clone()] };
        let upper = JetMat { rows: 2, cols: 2, data: vec![one, zero.clone(), zero, s2.recip().unwrap()] };
        let metric = MetricJets { lower, upper };
        let gam = levi_civita_oracle(&metric).unwrap();
        let r = scalar_curvature(&gam, &metric.upper, 2).unwrap();
        assert!((r + 2.0).abs() < 1e-12, "{r}");
    }
}
