use std::collections::BTreeMap;

use serde_json::json;

use super::geometry::over_points;
use super::{variant_suffix, variants_or_base, Comparison, Ctx, Outcome};
use crate::lambda as lr;
use crate::model::{Model, ModelError};
use crate::sampling::{signed_magnitude, SampleBox};
use crate::solutions::{apply_pins, draw};

const REP_TOL: f64 = 1e-9;
const REP_SAMPLES: usize = 30;
const CASIMIR_TOL: f64 = 1e-9;
const SPREAD_TOL: f64 = 1e-8;
const SPREAD_TESTS: usize = 10;
const SPREAD_POINTS: usize = 20;
const MEASURE_TOL: f64 = 1e-10;
const REDUCED_TOL: f64 = 1e-8;
const CONTROL_FLOOR: f64 = 1e-2;
const CONTROL_SHIFT: f64 = 0.3;
const GRID_POINTS: usize = 5;

/// Points of the λ-variables with magnitudes in the λ box and random signs.
fn q_points(ctx: &Ctx, label: &str, n: usize, nq: usize) -> Vec<Vec<f64>> {
    let [lo, hi] = ctx.ver().lambda_box;
    let mut rng = ctx.rng(label);
    (0..n).map(|_| (0..nq).map(|_| signed_magnitude(&mut rng, lo, hi)).collect()).collect()
}

/// Points in the reduced-spinor box, or λ-box points when none is declared.
fn reduced_points(ctx: &Ctx, label: &str, n: usize, nq: usize) -> Vec<Vec<f64>> {
    match ctx.model.file.lambda_rep.as_ref().and_then(|l| l.reduced_box.clone()) {
        Some(b) => SampleBox { lo: b.iter().map(|r| r[0]).collect(), hi: b.iter().map(|r| r[1]).collect() }.samples(n, &mut ctx.rng(label)),
        None => q_points(ctx, label, n, nq),
    }
}

/// Model with the section parameters at the grid's expected values.
fn on_shell(m: &Model) -> Result<Model, ModelError> {
    match &m.file.verification.grid {
        Some(g) => {
            let pins: BTreeMap<String, String> = g.axes.iter().map(|a| (a.param.clone(), a.expect.clone())).collect();
            apply_pins(m, &pins)
        }
        None => Ok(m.clone()),
    }
}

pub(super) fn run(ctx: &mut Ctx) -> Result<(), ModelError> {
    let base = ctx.model;
    let Some(lm) = &base.lambda_rep else {
        return ctx.skip("lambda", "model declares no λ-representation");
    };
    let nq = lm.vars.len();
    let degree = ctx.ver().test_degree;

    let pts = q_points(ctx, "lambda_rep", REP_SAMPLES, nq);
    ctx.anchored(&lm.anchor).check("lambda.commutators", REP_TOL, Comparison::Below, || over_points(Comparison::Below, &pts, |q| lr::commutator_defect(base, q, degree)))?;

    // Casimir values at (section draw, point) pairs
    let ndraw = ctx.ver().lambda_draws;
    let mut rng = ctx.rng("lambda_casimir");
    let draws: Vec<BTreeMap<String, f64>> = (0..ndraw).map(|_| ctx.ver().section_draws.iter().map(|(k, d)| (k.clone(), draw(d, &mut rng))).collect()).collect();
    let cpts = q_points(ctx, "lambda_casimir_points", ndraw, nq);
    let tests: Vec<_> = (0..SPREAD_TESTS).map(|_| lr::random_test_coeffs(&mut rng, nq)).collect();
    for (idx, (k, _)) in lm.casimir_values.iter().enumerate() {
        let name = base.casimirs[*k].name.clone();
        let single = &tests[..1];
        ctx.check(format!("lambda.casimir.{name}"), CASIMIR_TOL, Comparison::Below, || {
            let mut samples = Vec::new();
            let mut err = None;
            for (d, q) in draws.iter().zip(&cpts) {
                let md = base.with_params(d)?;
                let want = md.lambda_rep.as_ref().expect("λ-rep").casimir_values[idx].1;
                let mut point: Vec<f64> = d.values().copied().collect();
                point.extend(q);
                match lr::casimir_ratios(&md, *k, q, single) {
                    Ok(r) => samples.push(((r[0] - want).norm(), point)),
                    Err(ModelError::Eval(e)) => {
                        err.get_or_insert(e);
                        samples.push((f64::NAN, point));
                    }
                    Err(e) => return Err(e),
                }
            }
            let mut o = Outcome::reduce(Comparison::Below, samples);
            o.detail = json!({ "point": "section parameters then λ-variables", "error": err });
            Ok(o)
        })?;
        let spts = q_points(ctx, "lambda_spread", SPREAD_POINTS, nq);
        ctx.check(format!("lambda.casimir_constancy.{name}"), SPREAD_TOL, Comparison::Below, || {
            let want = lm.casimir_values[idx].1;
            over_points(Comparison::Below, &spts, |q| {
                let r = lr::casimir_ratios(base, *k, q, &tests)?;
                Ok(r.iter().map(|z| (z - want).norm()).fold(0.0, f64::max))
            })
        })?;
    }

    match base.file.lambda_rep.as_ref().and_then(|l| l.measure.clone()) {
        Some(text) => {
            let rho = lm.scope.parse("lambda_rep.measure", &text)?;
            let mpts = q_points(ctx, "lambda_measure", REP_SAMPLES, nq);
            ctx.check("lambda.measure", MEASURE_TOL, Comparison::Below, || over_points(Comparison::Below, &mpts, |q| lr::measure_defect(base, &rho, q)))?;
        }
        None => ctx.skip("lambda.measure", "no invariant measure declared")?,
    }

    let npts = ctx.points();
    for var in variants_or_base(&ctx.ver().lambda_variants) {
        let suffix = variant_suffix(&var);
        let m = on_shell(&base.with_params(&var)?)?;
        let Some(sys) = lr::reduced_system(&m, None)? else {
            ctx.skip(format!("lambda.reduced{suffix}"), "no reduced spinor declared")?;
            continue;
        };
        let rpts = reduced_points(ctx, &format!("reduced{suffix}"), npts, nq);
        let res: Vec<_> = crate::exec::par_map(&rpts, |q| lr::reduced_residual(&m, &sys, q));
        let mut cons = Vec::new();
        let mut dir = Vec::new();
        let mut norms = Vec::new();
        let mut first_err = None;
        for (r, q) in res.into_iter().zip(&rpts) {
            match r {
                Ok(r) => {
                    cons.push((r.constraint, q.clone()));
                    dir.push((r.dirac, q.clone()));
                    norms.push((r.norm, q.clone()));
                }
                Err(ModelError::Eval(e)) => {
                    first_err.get_or_insert(e);
                    cons.push((f64::NAN, q.clone()));
                    dir.push((f64::NAN, q.clone()));
                    norms.push((f64::NAN, q.clone()));
                }
                Err(e) => return Err(e),
            }
        }
        let params = json!(m.params.to_map());
        let detail = json!({ "params": params, "error": first_err });
        ctx.check(format!("lambda.constraint{suffix}"), REDUCED_TOL, Comparison::Below, || Ok(Outcome::reduce(Comparison::Below, cons).with_detail(detail.clone())))?;
        ctx.check(format!("lambda.reduced_dirac{suffix}"), REDUCED_TOL, Comparison::Below, || Ok(Outcome::reduce(Comparison::Below, dir).with_detail(detail.clone())))?;
        ctx.check(format!("lambda.reduced_norm{suffix}"), 1e-6, Comparison::Above, || Ok(Outcome::reduce(Comparison::Above, norms)))?;
    }

    if let Some(grid) = ctx.ver().grid.clone() {
        let gpts = reduced_points(ctx, "grid", GRID_POINTS, nq);
        for var in variants_or_base(&grid.variants) {
            let suffix = variant_suffix(&var);
            let m = base.with_params(&var)?;
            ctx.check(format!("lambda.grid{suffix}"), 0.5, Comparison::Below, || {
                let g = lr::grid_search(&m, &grid, &gpts)?;
                Ok(Outcome {
                    residual: g.offset_in_steps,
                    worst_point: Some(g.argmin.clone()),
                    samples: gpts.len() * grid.axes.iter().map(|a| a.n).product::<usize>(),
                    detail: json!({ "params": g.params, "argmin": g.argmin, "expected": g.expected, "steps": g.steps, "min_value": g.min_value }),
                })
            })?;
            let on = on_shell(&m)?;
            for axis in &grid.axes {
                ctx.check(format!("lambda.grid_control.{}{suffix}", axis.param), CONTROL_FLOOR, Comparison::Above, || {
                    let mut o = BTreeMap::new();
                    o.insert(axis.param.clone(), on.param(&axis.param) + CONTROL_SHIFT);
                    let moved = on.with_params(&o)?;
                    let sys = lr::reduced_system(&moved, Some(&grid.mass))?.ok_or_else(|| ModelError::schema("verification.grid", "grid needs lambda_rep.reduced_spinor"))?;
                    let out = over_points(Comparison::Above, &gpts, |q| {
                        let r = lr::reduced_residual(&moved, &sys, q)?;
                        Ok(r.constraint + r.dirac)
                    })?;
                    Ok(out.with_detail(json!({ "shift": CONTROL_SHIFT })))
                })?;
            }
        }
    }
    Ok(())
}
