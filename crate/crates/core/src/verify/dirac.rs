use std::sync::Arc;

use rand::Rng;
use serde_json::json;

use super::geometry::over_points;
use super::{variant_suffix, variants_or_base, Comparison, Ctx};
use crate::jet::{Jet, JetError, JetSpace};
use crate::linalg::{c, CMat, C64, I};
use crate::model::{Model, ModelError};
use crate::operator::{monomial_tests, value_norm, OpAtPoint};
use crate::schema::Relation;

const CLOSED_TOL: f64 = 1e-10;
const RECONSTRUCTION_TOL: f64 = 1e-10;
const FD_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const LINEARITY_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-8;
const COMMUTES_TOL: f64 = 1e-6;
const EQUALS_TOL: f64 = 1e-8;

/// `max |(P − Q)ψ|` at the base point.
fn difference(p: &OpAtPoint, q: &OpAtPoint, tests: &[Vec<Jet>]) -> Result<f64, JetError> {
    let mut r: f64 = 0.0;
    for t in tests {
        let a = p.apply(t)?;
        let b = q.apply(t)?;
        let d: Vec<Jet> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        r = r.max(value_norm(&d));
    }
    Ok(r)
}

/// `max |([X_A, X_B] − C^C_{AB} X_C)ψ|`.
fn closure_defect(m: &Model, xs: &[OpAtPoint], tests: &[Vec<Jet>]) -> Result<f64, JetError> {
    let dim = m.dim();
    let mut worst: f64 = 0.0;
    for a in 0..dim {
        for b in (a + 1)..dim {
            for t in tests {
                let ab = xs[a].apply(&xs[b].apply(t)?)?;
                let ba = xs[b].apply(&xs[a].apply(t)?)?;
                let mut r: Vec<Jet> = ab.iter().zip(&ba).map(|(x, y)| x - y).collect();
                for k in 0..dim {
                    let ck = m.alg.c(a, b, k);
                    if ck != 0.0 {
                        let xk = xs[k].apply(t)?;
                        for (ri, xi) in r.iter_mut().zip(&xk) {
                            *ri = &*ri - &xi.truncate(ri.order()).scale(c(ck));
                        }
                    }
                }
                worst = worst.max(value_norm(&r));
            }
        }
    }
    Ok(worst)
}

fn test_order(ctx: &Ctx) -> usize {
    ctx.ver().test_degree.max(2)
}

pub(super) fn run(ctx: &mut Ctx) -> Result<(), ModelError> {
    let m = ctx.model;
    let n = ctx.points();
    let src = m.preferred_source();
    let d = m.spinor_dim();
    let pts = ctx.x_points("dirac", n);
    let degree = ctx.ver().test_degree;

    if let Some(closed) = &m.closed.dirac {
        ctx.check("dirac.closed_form", CLOSED_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &pts, |x| {
                let order = 1;
                let sp = m.x_space(order);
                let fr = m.frames_in(x, &sp, order, src)?;
                let want = closed.at(&m.x_env(x, &sp, order), 0, d, &sp, order)?;
                Ok(difference(&m.dirac_at(&fr), &want, &monomial_tests(&sp, order, d, 1))?)
            })
        })?;
    }
    if !m.closed.symmetry.is_empty() {
        ctx.check("dirac.symmetry_closed_form", CLOSED_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &pts, |x| {
                let order = 1;
                let sp = m.x_space(order);
                let fr = m.frames_in(x, &sp, order, src)?;
                let env = m.x_env(x, &sp, order);
                let tests = monomial_tests(&sp, order, d, 1);
                let mut worst: f64 = 0.0;
                for (a, cop) in &m.closed.symmetry {
                    let want = cop.at(&env, 0, d, &sp, order)?;
                    worst = worst.max(difference(&m.symmetry_at(&fr, *a), &want, &tests)?);
                }
                Ok(worst)
            })
        })?;
    }

    ctx.check("dirac.reconstruction", RECONSTRUCTION_TOL, Comparison::Below, || {
        over_points(Comparison::Below, &pts, |x| {
            let order = 1;
            let sp = m.x_space(order);
            let fr = m.frames_in(x, &sp, order, src)?;
            let op = m.dirac_at(&fr);
            let ih = I * m.hbar;
            let mut worst: f64 = 0.0;
            let tests = monomial_tests(&sp, order, d, 1);
            // tests come as [1·e_0..e_{d−1}, δx_0·e_0.., ...]
            for (k, t) in tests.iter().enumerate() {
                let col = k % d;
                let mono = k / d;
                let got: Vec<C64> = op.apply(t)?.iter().map(|j| j.value()).collect();
                let mut want = CMat::zeros(d, d);
                if mono == 0 {
                    for (ai, &a) in m.split.m.iter().enumerate() {
                        for (kk, _) in m.split.h.iter().enumerate() {
                            want += &m.gammas.upper[ai] * &m.lambda[kk] * (ih * fr.eta.get(m.h_row(kk), a).value());
                        }
                    }
                    want += &m.gamma_total * ih;
                } else {
                    let i = mono - 1;
                    for (ai, &a) in m.split.m.iter().enumerate() {
                        want += &m.gammas.upper[ai] * (ih * fr.eta.get(i, a).value());
                    }
                }
                for r in 0..d {
                    worst = worst.max((got[r] - want[(r, col)]).norm());
                }
            }
            Ok(worst)
        })
    })?;

    if let Some(g) = m.group.clone() {
        let mut rng = ctx.rng("fd_spinor");
        let a: Vec<C64> = (0..m.nx).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let v: Vec<C64> = (0..d).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        ctx.check("dirac.fd_application", FD_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &pts, |x| {
                let psi = |y: &[f64]| -> Vec<C64> {
                    let e: C64 = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<C64>().exp();
                    v.iter().map(|vi| vi * e).collect()
                };
                // jet path
                let order = 1;
                let sp = m.x_space(order);
                let fr = m.frames_in(x, &sp, order, src)?;
                let ej = exp_linear(&sp, order, x, &a)?;
                let pj: Vec<Jet> = v.iter().map(|vi| ej.scale(*vi)).collect();
                let jet: Vec<C64> = m.dirac_at(&fr).apply(&pj)?.iter().map(|j| j.value()).collect();
                // finite-difference path with numerically computed η
                let mut full = x.to_vec();
                full.resize(m.dim(), 0.0);
                let etas: Vec<Vec<f64>> = (0..m.dim()).map(|b| g.right_field_fd(b, &full, FD_STEP)).collect::<Result<_, _>>().map_err(|e| ModelError::Eval(e.to_string()))?;
                let p0 = crate::linalg::CMat::from_column_slice(d, 1, &psi(x));
                let grads: Vec<Vec<C64>> = (0..m.nx)
                    .map(|i| {
                        let mut xp = x.to_vec();
                        let mut xm = x.to_vec();
                        xp[i] += FD_STEP;
                        xm[i] -= FD_STEP;
                        psi(&xp).iter().zip(psi(&xm)).map(|(p, q)| (p - q) / (2.0 * FD_STEP)).collect()
                    })
                    .collect();
                let ih = I * m.hbar;
                let mut out = &m.gamma_total * &p0 * ih;
                for (ai, &b) in m.split.m.iter().enumerate() {
                    let mut inner = CMat::zeros(d, 1);
                    for (i, gr) in grads.iter().enumerate() {
                        for r in 0..d {
                            inner[(r, 0)] += gr[r] * etas[b][i];
                        }
                    }
                    for k in 0..m.split.h.len() {
                        inner += &m.lambda[k] * &p0 * c(etas[b][m.h_row(k)]);
                    }
                    out += &m.gammas.upper[ai] * inner * ih;
                }
                let scale = p0.norm().max(1.0);
                Ok((0..d).map(|r| (out[(r, 0)] - jet[r]).norm()).fold(0.0, f64::max) / scale)
            })
        })?;
    }

    let mut rng = ctx.rng("linearity");
    let coef: Vec<C64> = (0..2).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let seeds: Vec<u64> = (0..pts.len()).map(|_| rng.gen()).collect();
    let indexed: Vec<Vec<f64>> = pts.iter().enumerate().map(|(i, p)| {
        let mut q = p.clone();
        q.push(i as f64);
        q
    }).collect();
    ctx.check("dirac.linearity", LINEARITY_TOL, Comparison::Below, || {
        let mut out = over_points(Comparison::Below, &indexed, |xs| {
            let (x, s) = xs.split_at(m.nx);
            let order = 2;
            let sp = m.x_space(order);
            let fr = m.frames_in(x, &sp, order, src)?;
            let op = m.dirac_at(&fr);
            let mut r = crate::sampling::stream_rng(seeds[s[0] as usize], "linearity_point");
            let mut rand_spinor = || -> Vec<Jet> {
                (0..d).map(|_| Jet::from_coeffs(&sp, order, (0..sp.len(order)).map(|_| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect())).collect()
            };
            let p1 = rand_spinor();
            let p2 = rand_spinor();
            let mix: Vec<Jet> = p1.iter().zip(&p2).map(|(u, w)| &u.scale(coef[0]) + &w.scale(coef[1])).collect();
            let lhs = op.apply(&mix)?;
            let a1 = op.apply(&p1)?;
            let a2 = op.apply(&p2)?;
            let diff: Vec<Jet> = lhs.iter().zip(a1.iter().zip(&a2)).map(|(l, (u, w))| &(l - &u.scale(coef[0])) - &w.scale(coef[1])).collect();
            Ok(value_norm(&diff))
        })?;
        if let Some(w) = out.worst_point.as_mut() {
            w.truncate(m.nx);
        }
        Ok(out)
    })?;

    let order = test_order(ctx);
    ctx.check("dirac.symmetry_commutes", SYMMETRY_TOL, Comparison::Below, || {
        over_points(Comparison::Below, &pts, |x| {
            let sp = m.x_space(order);
            let fr = m.frames_in(x, &sp, order, src)?;
            let dm = m.dirac_at(&fr);
            let tests = monomial_tests(&sp, order, d, degree);
            let mut worst: f64 = 0.0;
            for a in 0..m.dim() {
                worst = worst.max(crate::operator::commutator_residual(&m.symmetry_at(&fr, a), &dm, &tests)?);
            }
            Ok(worst)
        })
    })?;
    ctx.check("dirac.symmetry_closure", SYMMETRY_TOL, Comparison::Below, || {
        over_points(Comparison::Below, &pts, |x| {
            let sp = m.x_space(order);
            let fr = m.frames_in(x, &sp, order, src)?;
            let xs: Vec<OpAtPoint> = (0..m.dim()).map(|a| m.symmetry_at(&fr, a)).collect();
            Ok(closure_defect(m, &xs, &monomial_tests(&sp, order, d, degree))?)
        })
    })?;

    polynomials(ctx, &pts)
}

fn exp_linear(sp: &Arc<JetSpace>, order: usize, x: &[f64], a: &[C64]) -> Result<Jet, ModelError> {
    let mut e = Jet::zero(sp, order);
    for (i, (xi, ai)) in x.iter().zip(a).enumerate() {
        e = &e + &Jet::var(sp, order, i, c(*xi)).scale(*ai);
    }
    Ok(e.exp()?)
}

fn polynomials(ctx: &mut Ctx, pts: &[Vec<f64>]) -> Result<(), ModelError> {
    let m = ctx.model;
    let degree = ctx.ver().test_degree;
    let jet_order = ctx.jet_order();
    for sp_def in &m.sym_polys {
        for var in variants_or_base(&sp_def.variants) {
            let md = m.with_params(&var)?;
            let id = format!("dirac.polynomial.{}{}", sp_def.id, variant_suffix(&var));
            let (tol, factor) = match &sp_def.relation {
                Relation::CommutesWithDirac => (COMMUTES_TOL, None),
                Relation::EqualsDirac { factor } => (EQUALS_TOL, Some(md.params.scalar(factor)?)),
            };
            let need = sp_def.poly.degree() + if factor.is_none() { 1 } else { 0 };
            let order = jet_order.max(need).max(degree);
            let poly = &sp_def.poly;
            let src = md.preferred_source();
            ctx.anchored(&sp_def.anchor).check(id, tol, Comparison::Below, || {
                let out = over_points(Comparison::Below, pts, |x| {
                    let sp = md.x_space(order);
                    let fr = md.frames_in(x, &sp, order, src)?;
                    let dm = md.dirac_at(&fr);
                    let xs: Vec<OpAtPoint> = (0..md.dim()).map(|a| md.symmetry_at(&fr, a)).collect();
                    let tests = monomial_tests(&sp, order, md.spinor_dim(), degree);
                    let mut worst: f64 = 0.0;
                    for t in &tests {
                        let r: Vec<Jet> = match factor {
                            None => {
                                let pd = poly.apply(&xs, &dm.apply(t)?)?;
                                let dp = dm.apply(&poly.apply(&xs, t)?)?;
                                pd.iter().zip(&dp).map(|(u, w)| u - w).collect()
                            }
                            Some(f) => {
                                let p = poly.apply(&xs, t)?;
                                let dd = dm.apply(t)?;
                                p.iter().zip(&dd).map(|(u, w)| u - &w.truncate(u.order()).scale(f)).collect()
                            }
                        };
                        worst = worst.max(value_norm(&r));
                    }
                    Ok(worst)
                })?;
                Ok(out.with_detail(json!({ "jet_order": order, "test_degree": degree })))
            })?;
        }
    }
    Ok(())
}
