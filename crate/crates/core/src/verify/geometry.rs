use serde_json::json;

use super::{collect, Comparison, Ctx, Outcome};
use crate::chart::{field_commutator_residual, maurer_cartan_residual, mixed_commutator_residual, FrameJets};
use crate::exec::par_map;
use crate::geometry as geo;
use crate::linalg::{max_abs, CMat};
use crate::model::{FrameSource, Model, ModelError};
use crate::sampling::SampleBox;

const ROUNDTRIP_TOL: f64 = 1e-9;
const ROUNDTRIP_BOX: f64 = 0.5;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-7;
const FRAME_TOL: f64 = 1e-8;
const DUALITY_TOL: f64 = 1e-10;
const CLOSURE_TOL: f64 = 1e-8;
const TORSION_TOL: f64 = 1e-10;
const METRICITY_TOL: f64 = 1e-8;
const KILLING_TOL: f64 = 1e-7;
const CHRISTOFFEL_TOL: f64 = 1e-7;
const CHRISTOFFEL_POINTS: usize = 20;
const INVERSE_TOL: f64 = 1e-10;
const METRIC_FORM_TOL: f64 = 1e-10;
const CURVATURE_TOL: f64 = 1e-6;
const CURVATURE_SPREAD_TOL: f64 = 1e-10;

fn frame_err(fr: &FrameJets, other: &FrameJets, which: &str) -> f64 {
    let (a, b) = match which {
        "xi" => (fr.xi.value(), other.xi.value()),
        "eta" => (fr.eta.value(), other.eta.value()),
        _ => (fr.sigma.value(), other.sigma.value()),
    };
    max_abs(&(a - b))
}

/// Run `f` at every point in parallel and reduce.
pub(super) fn over_points<F>(cmp: Comparison, points: &[Vec<f64>], f: F) -> Result<Outcome, ModelError>
where
    F: Fn(&[f64]) -> Result<f64, ModelError> + Sync + Send,
{
    let res = par_map(points, |p| (f(p), p.clone()));
    let (samples, err) = collect(res)?;
    let mut out = Outcome::reduce(cmp, samples);
    if let Some(e) = err {
        out.detail = json!({ "error": e });
    }
    Ok(out)
}

fn full_point(m: &Model, x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    p.resize(m.dim(), 0.0);
    p
}

pub(super) fn run(ctx: &mut Ctx) -> Result<(), ModelError> {
    let m = ctx.model;
    let n = ctx.points();
    let src = m.preferred_source();

    if let Some(g) = m.group.clone() {
        let pts = SampleBox::cube(m.dim(), -ROUNDTRIP_BOX, ROUNDTRIP_BOX).samples(n, &mut ctx.rng("roundtrip"));
        ctx.check("geometry.chart_roundtrip", ROUNDTRIP_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &pts, |p| {
                let guess = vec![0.0; p.len()];
                let back = g.invert(&g.matrix(p), &guess).map_err(|e| ModelError::Eval(e.to_string()))?;
                Ok(back.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            })
        })?;
        let pairs: Vec<Vec<f64>> = {
            let half = SampleBox::cube(2 * m.dim(), -ROUNDTRIP_BOX / 2.0, ROUNDTRIP_BOX / 2.0);
            half.samples(n, &mut ctx.rng("product"))
        };
        ctx.check("geometry.chart_product", ROUNDTRIP_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &pairs, |p| {
                let (a, b) = p.split_at(m.dim());
                let prod = g.matrix(a) * g.matrix(b);
                let coords = g.invert(&prod, &vec![0.0; a.len()]).map_err(|e| ModelError::Eval(e.to_string()))?;
                Ok((g.matrix(&coords) - &prod).abs().max())
            })
        })?;
        let pts = ctx.x_points("field_fd", n);
        ctx.check("geometry.field_fd", FD_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &pts, |x| {
                let fr = m.frames(x, 1, FrameSource::Numeric)?;
                let p = full_point(m, x);
                let mut worst: f64 = 0.0;
                for a in 0..m.dim() {
                    let l = g.left_field_fd(a, &p, FD_STEP).map_err(|e| ModelError::Eval(e.to_string()))?;
                    let r = g.right_field_fd(a, &p, FD_STEP).map_err(|e| ModelError::Eval(e.to_string()))?;
                    for i in 0..m.dim() {
                        worst = worst.max((fr.xi.get(i, a).value().re - l[i]).abs());
                        worst = worst.max((fr.eta.get(i, a).value().re - r[i]).abs());
                    }
                }
                Ok(worst)
            })
        })?;
        if m.has_declared_fields() {
            let pts = ctx.x_points("frames", ctx.ver().frame_points);
            for which in ["xi", "eta", "sigma"] {
                ctx.check(format!("geometry.frame_crosscheck.{which}"), FRAME_TOL, Comparison::Below, || {
                    over_points(Comparison::Below, &pts, |x| {
                        let a = m.frames(x, 1, FrameSource::Numeric)?;
                        let b = m.frames(x, 1, FrameSource::Declared)?;
                        Ok(frame_err(&a, &b, which))
                    })
                })?;
            }
        }
        let pts = ctx.x_points("maurer_cartan", n);
        ctx.check("geometry.maurer_cartan", FRAME_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &pts, |x| Ok(maurer_cartan_residual(&m.frames_full(x, 1)?.sigma, &m.alg)?))
        })?;
        let pts = ctx.x_points("duality", ctx.ver().frame_points);
        ctx.check("geometry.duality", DUALITY_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &pts, |x| {
                let fr = m.frames_full(x, 0)?;
                let p = fr.sigma.value() * fr.eta.value();
                Ok(max_abs(&(p - CMat::identity(m.dim(), m.dim()))))
            })
        })?;
        let pts = ctx.x_points("field_commutators", n);
        for which in ["xi", "eta", "mixed"] {
            ctx.check(format!("geometry.field_commutators.{which}"), CLOSURE_TOL, Comparison::Below, || {
                over_points(Comparison::Below, &pts, |x| {
                    let fr = m.frames_full(x, 1)?;
                    Ok(match which {
                        "xi" => field_commutator_residual(&fr.xi, &m.alg, 1.0)?,
                        "eta" => field_commutator_residual(&fr.eta, &m.alg, 1.0)?,
                        _ => mixed_commutator_residual(&fr.xi, &fr.eta)?,
                    })
                })
            })?;
        }
    }

    let pts = ctx.x_points("metric", n);
    ctx.check("geometry.metric_inverse", INVERSE_TOL, Comparison::Below, || {
        over_points(Comparison::Below, &pts, |x| {
            let fr = m.frames(x, 0, src)?;
            Ok(geo::inverse_residual(&geo::metric_jets(&fr, &m.split, &m.form, m.nx)))
        })
    })?;
    if let Some(closed) = &m.closed.metric {
        ctx.check("geometry.metric_closed_form", METRIC_FORM_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &pts, |x| {
                let fr = m.frames(x, 0, src)?;
                let g = geo::metric_jets(&fr, &m.split, &m.form, m.nx).lower.value();
                let env = m.x_scope.env_scalar(&x.iter().map(|&v| crate::linalg::c(v)).collect::<Vec<_>>(), &m.params);
                let mut worst: f64 = 0.0;
                for i in 0..m.nx {
                    for j in 0..m.nx {
                        let want = closed[i * m.nx + j].eval_scalar(&env)?;
                        worst = worst.max((g[(i, j)] - want).norm());
                    }
                }
                Ok(worst)
            })
        })?;
    }

    let pts = ctx.x_points("christoffel", CHRISTOFFEL_POINTS.max(n.min(CHRISTOFFEL_POINTS)));
    ctx.check("geometry.christoffel_oracle", CHRISTOFFEL_TOL, Comparison::Below, || {
        over_points(Comparison::Below, &pts, |x| {
            let fr = m.frames(x, 2, src)?;
            let gam = geo::christoffel_frame(&fr, &m.alg, &m.split, &m.form, m.nx)?;
            let metric = geo::metric_jets(&fr, &m.split, &m.form, m.nx);
            let oracle = geo::levi_civita_oracle(&metric)?;
            Ok(gam.iter().zip(&oracle).map(|(a, b)| (a.value() - b.value()).norm()).fold(0.0, f64::max))
        })
    })?;
    let pts = ctx.x_points("connection", n);
    ctx.check("geometry.torsion", TORSION_TOL, Comparison::Below, || {
        over_points(Comparison::Below, &pts, |x| {
            let fr = m.frames(x, 1, src)?;
            Ok(geo::torsion_residual(&geo::christoffel_frame(&fr, &m.alg, &m.split, &m.form, m.nx)?, m.nx))
        })
    })?;
    ctx.check("geometry.metricity", METRICITY_TOL, Comparison::Below, || {
        over_points(Comparison::Below, &pts, |x| {
            let fr = m.frames(x, 1, src)?;
            let gam = geo::christoffel_frame(&fr, &m.alg, &m.split, &m.form, m.nx)?;
            Ok(geo::metricity_residual(&gam, &geo::metric_jets(&fr, &m.split, &m.form, m.nx))?)
        })
    })?;
    ctx.check("geometry.killing", KILLING_TOL, Comparison::Below, || {
        over_points(Comparison::Below, &pts, |x| {
            let fr = m.frames(x, 1, src)?;
            Ok(geo::killing_residual(&fr.xi, &geo::metric_jets(&fr, &m.split, &m.form, m.nx))?)
        })
    })?;

    curvature(ctx)
}

fn curvature(ctx: &mut Ctx) -> Result<(), ModelError> {
    let m = ctx.model;
    let ver = ctx.ver();
    let draws = ctx.param_draws("curvature_params", ver.curvature_draws);
    let npts = ctx.opts.points.unwrap_or(ver.curvature_points);
    let pts = ctx.x_points("curvature", npts);
    let expected = ver.expected_scalar_curvature.clone();
    let src = m.preferred_source();

    // per draw: (max |R − expected|, (spread of R, point of largest R))
    let per_draw: Vec<(Vec<f64>, Result<(Outcome, (f64, Vec<f64>)), ModelError>)> = draws
        .iter()
        .map(|d| {
            let r = (|| {
                let md = m.with_params(d)?;
                let want = match &expected {
                    Some(e) => Some(md.params.eval(e)?.re),
                    None => None,
                };
                let values = par_map(&pts, |x| -> Result<f64, ModelError> {
                    let fr = md.frames(x, 2, src)?;
                    let gam = geo::christoffel_frame(&fr, &md.alg, &md.split, &md.form, md.nx)?;
                    let metric = geo::metric_jets(&fr, &md.split, &md.form, md.nx);
                    Ok(geo::scalar_curvature(&gam, &metric.upper, md.nx)?)
                });
                let mut samples = Vec::new();
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let mut hi_at = Vec::new();
                for (v, x) in values.into_iter().zip(&pts) {
                    let v = v?;
                    lo = lo.min(v);
                    if v > hi {
                        hi = v;
                        hi_at = x.clone();
                    }
                    let res = match want {
                        Some(w) => (v - w).abs(),
                        None => 0.0,
                    };
                    samples.push((res, x.clone()));
                }
                Ok((Outcome::reduce(Comparison::Below, samples), (hi - lo, hi_at)))
            })();
            (d.values().copied().collect(), r)
        })
        .collect();

    let mut worst: Option<(f64, Option<Vec<f64>>, Vec<f64>)> = None;
    let mut spread: (f64, Option<Vec<f64>>) = (0.0, None);
    let mut err: Option<String> = None;
    for (params, r) in per_draw.iter() {
        match r {
            Ok((o, s)) => {
                if spread.1.is_none() || s.0 > spread.0 {
                    spread = (s.0, Some(s.1.clone()));
                }
                if worst.as_ref().is_none_or(|w| o.residual > w.0 || o.residual.is_nan()) {
                    worst = Some((o.residual, o.worst_point.clone(), params.clone()));
                }
            }
            Err(ModelError::Eval(e)) => {
                err.get_or_insert(e.clone());
                worst = Some((f64::NAN, None, params.clone()));
            }
            Err(e) => return Err(ModelError::schema("verification", e.to_string())),
        }
    }
    let samples = per_draw.len() * pts.len();
    let (res, wp, params) = worst.unwrap_or((f64::NAN, None, Vec::new()));
    let detail = match &err {
        Some(e) => json!({ "error": e, "expected": expected }),
        None => json!({ "expected": expected, "params_at_worst": params }),
    };
    if expected.is_some() {
        let o = Outcome { residual: res, worst_point: wp, samples, detail: detail.clone() };
        ctx.check("geometry.scalar_curvature", CURVATURE_TOL, Comparison::Below, || Ok(o))?;
    }
    let (spread, at) = if err.is_some() { (f64::NAN, None) } else { spread };
    ctx.check("geometry.curvature_variance", CURVATURE_SPREAD_TOL, Comparison::Below, || Ok(Outcome { residual: spread, worst_point: at, samples, detail: serde_json::Value::Null }))
}
