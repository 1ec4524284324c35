use std::collections::BTreeMap;

use rand::Rng;
use serde_json::json;

use super::geometry::over_points;
use super::{collect, variant_suffix, variants_or_base, Comparison, Ctx, Outcome};
use crate::exec::par_map;
use crate::linalg::{c, comm, max_abs, vec_norm, CMat, C64, I};
use crate::model::{CompiledOde, Model, ModelError};
use crate::sampling::SampleBox;
use crate::schema::FamilySection;
use crate::solutions as so;

const ODE_SAMPLES: usize = 10;
const LOCAL_ERROR_TOL: f64 = 1e-10;
const ODE_RESIDUAL_TOL: f64 = 1e-8;
const STENCIL_STEP: f64 = 1e-3;
const EXP_TOL: f64 = 1e-10;
const SUPERPOSITION_TOL: f64 = 1e-10;
const COMMUTING_FLOOR: f64 = 1e-12;
const CLOSED_ODE_TOL: f64 = 1e-7;
const DIRAC_TOL: f64 = 1e-6;
const NORM_FLOOR: f64 = 1e-6;
const XLP_DEFAULT_TOL: f64 = 1e-7;
const CONTROL_FLOOR: f64 = 1e-2;
const FLOW_AMOUNT: f64 = 0.3;
const FLOW_TOL: f64 = 1e-6;
const FLOW_IDENTITY_TOL: f64 = 1e-12;
const GROUP_LAW_TOL: f64 = 1e-7;

fn ode_range(ode: &CompiledOde) -> (f64, f64) {
    let s = ode.start;
    if s == 0.0 {
        (-1.0, 1.0)
    } else if s > 0.0 {
        (0.5 * s, 2.0 * s)
    } else {
        (2.0 * s, 0.5 * s)
    }
}

fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    vec_norm(&d) / vec_norm(b).max(1e-300)
}

fn mat_vec(m: &CMat, v: &[C64]) -> Vec<C64> {
    (m * nalgebra::DVector::from_column_slice(v)).iter().copied().collect()
}

/// `ψ` at `u − 2h, …, u + 2h`, chained in short steps from `ψ(u − 2h)`.
fn stencil(m: &Model, ode: &CompiledOde, u: f64, tol: so::Tolerances) -> Result<[Vec<C64>; 5], ModelError> {
    let h = STENCIL_STEP;
    let mut cur = so::ode_solve(m, ode, u - 2.0 * h, None, tol)?.0;
    let mut out: Vec<Vec<C64>> = vec![cur.clone()];
    for k in 1..5 {
        let a = u + (k as f64 - 3.0) * h;
        let rhs = |s: f64, y: &[C64]| -> Result<Vec<C64>, ModelError> { Ok(mat_vec(&(so::ode_matrix(m, ode, s)? * (-I / m.hbar)), y)) };
        cur = so::integrate(rhs, a, &cur, a + h, tol)?.0;
        out.push(cur.clone());
    }
    Ok(out.try_into().expect("five stencil values"))
}

fn odes(ctx: &mut Ctx) -> Result<(), ModelError> {
    let m = ctx.model;
    let tol = so::Tolerances::default();
    for (name, ode) in &m.odes {
        let (lo, hi) = ode_range(ode);
        let us: Vec<Vec<f64>> = SampleBox { lo: vec![lo], hi: vec![hi] }.samples(ODE_SAMPLES, &mut ctx.rng(&format!("ode/{name}")));
        let id = |s: &str| format!("solutions.ode.{name}.{s}");
        ctx.check(id("local_error"), LOCAL_ERROR_TOL, Comparison::Below, || over_points(Comparison::Below, &us, |u| Ok(so::ode_solve(m, ode, u[0], None, tol)?.1.max_local_error)))?;
        ctx.check(id("residual"), ODE_RESIDUAL_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &us, |u| {
                let u = u[0];
                let s = stencil(m, ode, u, tol)?;
                let h = STENCIL_STEP;
                let d: Vec<C64> = (0..s[0].len()).map(|i| (s[0][i] - s[1][i] * 8.0 + s[3][i] * 8.0 - s[4][i]) / (12.0 * h)).collect();
                let lhs: Vec<C64> = d.iter().map(|z| z * I * m.hbar).collect();
                let rhs = mat_vec(&so::ode_matrix(m, ode, u)?, &s[2]);
                let diff: Vec<C64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
                Ok(vec_norm(&diff) / vec_norm(&s[2]))
            })
        })?;
        ctx.check(id("constant_matrix"), EXP_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &us, |u| {
                let m0 = so::ode_matrix(m, ode, u[0])? * (-I / m.hbar);
                let rhs = |_s: f64, y: &[C64]| -> Result<Vec<C64>, ModelError> { Ok(mat_vec(&m0, y)) };
                let got = so::integrate(rhs, 0.0, &ode.initial, 1.0, tol)?.0;
                let want = mat_vec(&m0.clone().exp(), &ode.initial);
                Ok(rel_diff(&got, &want))
            })
        })?;
        let mut rng = ctx.rng(&format!("ode_superposition/{name}"));
        let d = ode.initial.len();
        let mut rv = || -> Vec<C64> { (0..d).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect() };
        let (a0, b0) = (rv(), rv());
        let (ka, kb) = (C64::new(0.7, -0.4), C64::new(-1.1, 0.3));
        ctx.check(id("superposition"), SUPERPOSITION_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &us, |u| {
                let ya = so::ode_solve(m, ode, u[0], Some(&a0), tol)?.0;
                let yb = so::ode_solve(m, ode, u[0], Some(&b0), tol)?.0;
                let mix: Vec<C64> = a0.iter().zip(&b0).map(|(x, y)| x * ka + y * kb).collect();
                let ym = so::ode_solve(m, ode, u[0], Some(&mix), tol)?.0;
                let want: Vec<C64> = ya.iter().zip(&yb).map(|(x, y)| x * ka + y * kb).collect();
                Ok(rel_diff(&ym, &want))
            })
        })?;
        let mats: Vec<CMat> = us.iter().map(|u| so::ode_matrix(m, ode, u[0])).collect::<Result<_, _>>()?;
        let mut comm_norm: f64 = 0.0;
        for a in &mats {
            for b in &mats {
                comm_norm = comm_norm.max(max_abs(&comm(a, b)));
            }
        }
        ctx.check(id("commutator"), COMMUTING_FLOOR, Comparison::Info, || Ok(Outcome::scalar(comm_norm).with_detail(json!({ "commuting": comm_norm < COMMUTING_FLOOR }))))?;
        if comm_norm < COMMUTING_FLOOR {
            ctx.check(id("closed_form"), CLOSED_ODE_TOL, Comparison::Below, || {
                over_points(Comparison::Below, &us, |u| {
                    let n = 400;
                    let (a, b) = (ode.start, u[0]);
                    let h = (b - a) / n as f64;
                    let mut acc = CMat::zeros(d, d);
                    for k in 0..=n {
                        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                        acc += so::ode_matrix(m, ode, a + h * k as f64)? * c(w * h / 3.0);
                    }
                    let want = mat_vec(&(acc * (-I / m.hbar)).exp(), &ode.initial);
                    let got = so::ode_solve(m, ode, b, None, tol)?.0;
                    Ok(rel_diff(&got, &want))
                })
            })?;
        }
    }
    if !m.odes.is_empty() {
        let d = m.spinor_dim();
        let e = CMat::identity(d, d);
        let squares: Vec<(f64, C64)> = m
            .lambda
            .iter()
            .map(|l| {
                let sq = l * l;
                let k = sq.trace() / d as f64;
                (max_abs(&(&sq - &e * k)), k)
            })
            .collect();
        ctx.check("solutions.lambda_squared", 0.0, Comparison::Info, || {
            let worst = squares.iter().map(|s| s.0).fold(0.0, f64::max);
            let scalars: Vec<[f64; 2]> = squares.iter().map(|s| [s.1.re, s.1.im]).collect();
            Ok(Outcome::scalar(worst).with_detail(json!({ "scalar_part": scalars, "residual": "distance of Λ² from a multiple of E" })))
        })?;
    }
    Ok(())
}

struct MemberResult {
    values: Vec<f64>,
    points: Vec<(Vec<f64>, Result<so::PointResidual, ModelError>)>,
}

fn family_draws(ctx: &Ctx, fam: &FamilySection, var: &BTreeMap<String, f64>, label: &str) -> Vec<BTreeMap<String, f64>> {
    let mut rng = ctx.rng(label);
    (0..ctx.ver().solution_draws)
        .map(|_| {
            let mut v = var.clone();
            for (k, d) in &fam.draws {
                v.insert(k.clone(), so::draw(d, &mut rng));
            }
            v
        })
        .collect()
}

fn evaluate(members: &[so::FamilyMember], pts: &[Vec<f64>]) -> Vec<MemberResult> {
    let src = |mm: &so::FamilyMember| mm.model.preferred_source();
    members
        .iter()
        .map(|mm| MemberResult {
            values: mm.values.values().copied().collect(),
            points: par_map(pts, |x| (x.clone(), mm.residual_at(x, src(mm)))),
        })
        .collect()
}

fn gather(results: &[MemberResult], pick: impl Fn(&so::PointResidual) -> Option<f64>) -> Result<(Vec<(f64, Vec<f64>)>, Option<String>), ModelError> {
    let mut raw = Vec::new();
    for r in results {
        for (x, res) in &r.points {
            let mut p = x.clone();
            p.extend(&r.values);
            let v = match res {
                Ok(pr) => Ok(pick(pr).unwrap_or(f64::NAN)),
                Err(ModelError::Eval(e)) => Err(ModelError::Eval(e.clone())),
                Err(e) => return Err(ModelError::Eval(e.to_string())),
            };
            raw.push((v, p));
        }
    }
    collect(raw)
}

fn with_err(mut o: Outcome, err: Option<String>, extra: serde_json::Value) -> Outcome {
    let mut d = extra;
    if let Some(e) = err {
        d["error"] = json!(e);
    }
    o.detail = d;
    o
}

fn families(ctx: &mut Ctx) -> Result<(), ModelError> {
    let m = ctx.model;
    let Some(sol) = &m.file.solutions else { return Ok(()) };
    let [lo, hi] = ctx.ver().solution_box;
    let npts = ctx.opts.points.unwrap_or(ctx.ver().solution_points);
    for fam in &sol.families {
        for var in variants_or_base(&fam.variants) {
            let suffix = variant_suffix(&var);
            let base = format!("solutions.family.{}{suffix}", fam.id);
            let draws = family_draws(ctx, fam, &var, &base);
            let pts = SampleBox::cube(m.nx, lo, hi).samples(npts, &mut ctx.rng(&format!("{base}/points")));
            let members: Vec<so::FamilyMember> = draws.iter().map(|v| so::family_member(m, fam, v, &BTreeMap::new(), None)).collect::<Result<_, _>>()?;
            let results = evaluate(&members, &pts);
            let keys: Vec<String> = draws[0].keys().cloned().collect();
            let info = json!({ "point": "x then", "params": keys });

            let (s, e) = gather(&results, |r| Some(r.dirac))?;
            ctx.anchored(&fam.anchor).check(format!("{base}.dirac"), DIRAC_TOL, Comparison::Below, || Ok(with_err(Outcome::reduce(Comparison::Below, s), e, info.clone())))?;
            let (s, e) = gather(&results, |r| Some(r.norm))?;
            ctx.anchored(&fam.anchor).check(format!("{base}.nontrivial"), NORM_FLOOR, Comparison::Above, || Ok(with_err(Outcome::reduce(Comparison::Above, s), e, info.clone())))?;
            if !fam.companion.is_empty() {
                let (s, e) = gather(&results, |r| r.companion)?;
                let tol = fam.companion_tolerance.unwrap_or(XLP_DEFAULT_TOL);
                ctx.anchored("XLp").check(format!("{base}.xlp"), tol, Comparison::Below, || Ok(with_err(Outcome::reduce(Comparison::Below, s), e, info.clone())))?;
            }
            for ctl in &fam.controls {
                let members: Vec<so::FamilyMember> = draws.iter().map(|v| so::family_member(m, fam, v, &ctl.overrides, ctl.mass.as_deref())).collect::<Result<_, _>>()?;
                let results = evaluate(&members, &pts);
                // each member must fail somewhere: worst point per member, best member overall
                let mut per_member = Vec::new();
                let mut err = None;
                for r in &results {
                    let (s, e) = gather(std::slice::from_ref(r), |p| Some(p.dirac))?;
                    if e.is_some() {
                        err = e;
                    }
                    let o = Outcome::reduce(Comparison::Below, s);
                    per_member.push((o.residual, o.worst_point.unwrap_or_default()));
                }
                ctx.anchored(&fam.anchor).check(format!("{base}.control.{}", ctl.id), CONTROL_FLOOR, Comparison::Above, || Ok(with_err(Outcome::reduce(Comparison::Above, per_member), err, info.clone())))?;
            }
        }
    }
    Ok(())
}

fn flows(ctx: &mut Ctx) -> Result<(), ModelError> {
    let m = ctx.model;
    let Some(sol) = &m.file.solutions else { return Ok(()) };
    if sol.flows.is_empty() {
        return Ok(());
    }
    let Some(ftext) = &sol.flow_test_function else {
        return ctx.skip("solutions.flow", "no flow test function declared");
    };
    let lm = crate::lambda::lambda_model(m)?;
    let nq = lm.vars.len();
    let bx = match &sol.flow_box {
        Some(b) => SampleBox { lo: b.iter().map(|r| r[0]).collect(), hi: b.iter().map(|r| r[1]).collect() },
        None => SampleBox::cube(nq, -ctx.ver().lambda_box[1], ctx.ver().lambda_box[1]),
    };
    let npairs = ctx.ver().flow_pairs;
    for var in variants_or_base(&sol.flow_variants) {
        let suffix = variant_suffix(&var);
        let mv = so::apply_pins(&m.with_params(&var)?, &sol.flow_pinned)?;
        let f = lm.scope.parse("solutions.flow_test_function", ftext)?;
        for name in sol.flows.keys() {
            let flow = so::compile_flow(&mv, name)?;
            let base = format!("solutions.flow.{name}{suffix}");
            let mut rng = ctx.rng(&base);
            let pairs: Vec<Vec<f64>> = (0..npairs)
                .map(|_| {
                    let mut p = bx.sample(&mut rng);
                    p.push(rng.gen_range(-FLOW_AMOUNT..FLOW_AMOUNT));
                    p.push(rng.gen_range(-FLOW_AMOUNT / 2.0..FLOW_AMOUNT / 2.0));
                    p
                })
                .collect();
            ctx.check(format!("{base}.oracle"), FLOW_TOL, Comparison::Below, || {
                over_points(Comparison::Below, &pairs, |p| {
                    let (q, t) = (&p[..nq], p[nq]);
                    let got = so::flow_apply(&mv, &flow, &f, q, t)?;
                    let want = so::flow_oracle(&mv, flow.generator, &f, q, t)?;
                    Ok((got - want).norm() / want.norm().max(1.0))
                })
            })?;
            ctx.check(format!("{base}.identity"), FLOW_IDENTITY_TOL, Comparison::Below, || {
                over_points(Comparison::Below, &pairs, |p| {
                    let q = &p[..nq];
                    let got = so::flow_apply(&mv, &flow, &f, q, 0.0)?;
                    let qc: Vec<C64> = q.iter().map(|&v| c(v)).collect();
                    let want = f.eval_scalar(&lm.scope.env_scalar(&qc, &mv.params))?;
                    Ok((got - want).norm() / want.norm().max(1.0))
                })
            })?;
            ctx.check(format!("{base}.group_law"), GROUP_LAW_TOL, Comparison::Below, || {
                over_points(Comparison::Below, &pairs, |p| {
                    let (q, t1, t2) = (&p[..nq], p[nq] / 2.0, p[nq + 1]);
                    let two = so::flow_compose(&mv, &flow, &f, q, t1, t2)?;
                    let one = so::flow_apply(&mv, &flow, &f, q, t1 + t2)?;
                    Ok((two - one).norm() / one.norm().max(1.0))
                })
            })?;
        }
    }
    Ok(())
}

pub(super) fn run(ctx: &mut Ctx) -> Result<(), ModelError> {
    odes(ctx)?;
    families(ctx)?;
    flows(ctx)
}
