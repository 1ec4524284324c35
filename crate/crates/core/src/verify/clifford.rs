use rand::Rng;
use serde_json::json;

use super::geometry::over_points;
use super::{Comparison, Ctx, Outcome};
use crate::clifford as cl;
use crate::lie::BilinearForm;
use crate::linalg::{c, max_abs, CMat, RMat};
use crate::model::{ModelError, Scope};

const ANTICOMM_TOL: f64 = 1e-12;
const SPIN_REP_TOL: f64 = 1e-11;
const TRACELESS_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PROJECTIVITY_TOL: f64 = 1e-11;
const COVARIANCE_TOL: f64 = 1e-8;
const COVARIANCE_DRAWS: usize = 5;
const IDENTITY_TOL: f64 = 1e-12;
const CONNECTION_TOL: f64 = 1e-10;

/// Smallest intertwiner defect between `A·γ` and gammas built from `A G Aᵀ`.
/// In odd dimension `−γ` is the other class, so both are tried.
fn covariance_defect(g: &cl::GammaSet, form: &BilinearForm, a: &RMat) -> Result<f64, ModelError> {
    let up = a * &form.upper * a.transpose();
    let f2 = BilinearForm::from_upper(up).ok_or_else(|| ModelError::Eval("transformed form is singular".into()))?;
    let built = cl::build_gammas(&f2).map_err(|e| ModelError::Eval(e.to_string()))?;
    let n = g.len();
    let moved: Vec<CMat> = (0..n)
        .map(|i| {
            let mut s = CMat::zeros(g.spinor_dim(), g.spinor_dim());
            for j in 0..n {
                s += &g.upper[j] * c(a[(i, j)]);
            }
            s
        })
        .collect();
    if moved[0].nrows() != built.upper[0].nrows() {
        return Err(ModelError::Eval("spinor dimensions differ".into()));
    }
    let (r, _) = cl::intertwiner_residual(&moved, &built.upper);
    if n % 2 == 1 {
        let neg: Vec<CMat> = built.upper.iter().map(|m| -m).collect();
        let (r2, _) = cl::intertwiner_residual(&moved, &neg);
        return Ok(r.min(r2));
    }
    Ok(r)
}

pub(super) fn run(ctx: &mut Ctx) -> Result<(), ModelError> {
    let m = ctx.model;
    let g = &m.gammas;
    ctx.check("clifford.anticommutator", ANTICOMM_TOL, Comparison::Below, || Ok(Outcome::scalar(cl::anticommutator_residual(g, &m.form))))?;
    ctx.check("clifford.lowered_anticommutator", ANTICOMM_TOL, Comparison::Below, || Ok(Outcome::scalar(cl::lowered_anticommutator_residual(g, &m.form))))?;
    ctx.check("clifford.isotropy_rep", SPIN_REP_TOL, Comparison::Below, || Ok(Outcome::scalar(cl::isotropy_rep_residual(&m.lambda, &m.alg, &m.split))))?;
    ctx.check("clifford.comm1", SPIN_REP_TOL, Comparison::Below, || Ok(Outcome::scalar(cl::comm1_residual(&m.lambda, g, &m.alg, &m.split))))?;
    ctx.check("clifford.comm2", SPIN_REP_TOL, Comparison::Below, || Ok(Outcome::scalar(cl::comm2_residual(&m.lambda, g, &m.alg, &m.split))))?;
    ctx.check("clifford.traceless_lambda", TRACELESS_TOL, Comparison::Below, || Ok(Outcome::scalar(cl::trace_residual(&m.lambda))))?;
    ctx.check("clifford.trace_gamma_a", TRACE_TOL, Comparison::Below, || Ok(Outcome::scalar(cl::trace_residual(&m.gamma_a))))?;

    let pr = cl::verify_projectivity(g, &m.lambda, &m.gamma_a, &m.alg, &m.split, m.hbar);
    for (name, v) in [("sysBa", pr.sys_ba), ("sysB", pr.sys_b), ("condLs2", pr.cond_ls2)] {
        ctx.check(format!("clifford.projectivity.{name}"), PROJECTIVITY_TOL, Comparison::Below, || Ok(Outcome::scalar(v)))?;
    }

    let mut rng = ctx.rng("basis_covariance");
    let n = g.len();
    let mats: Vec<RMat> = (0..COVARIANCE_DRAWS).map(|_| RMat::identity(n, n) + RMat::from_fn(n, n, |_, _| rng.gen_range(-0.3..0.3))).collect();
    ctx.check("clifford.basis_covariance", COVARIANCE_TOL, Comparison::Below, || {
        let mut samples = Vec::new();
        for a in &mats {
            samples.push((covariance_defect(g, &m.form, a)?, a.iter().copied().collect()));
        }
        Ok(Outcome::reduce(Comparison::Below, samples).with_detail(json!({ "pinned_gammas": m.gammas_pinned })))
    })?;

    if let Some(name) = m.file.gammas.as_ref().and_then(|s| s.pseudospin.clone()) {
        ctx.check("clifford.pseudospin", ANTICOMM_TOL, Comparison::Below, || {
            let got = cl::pseudospin(g).ok_or_else(|| ModelError::schema("gammas.pseudospin", "pseudospin needs three 2×2 gamma matrices"))?;
            let want = m.params.eval(&name)?.re;
            Ok(Outcome::scalar((got - want).abs()).with_detail(json!({ "pseudospin": got })))
        })?;
    }

    let empty = Scope::new(&[], &m.params);
    let env = empty.env_scalar(&[], &m.params);
    let d = m.spinor_dim();
    for (id, anchor, lhs, rhs) in &m.closed.identities {
        ctx.anchored(anchor).check(format!("clifford.identity.{id}"), IDENTITY_TOL, Comparison::Below, || {
            let l = lhs.eval_scalar(&env, d)?;
            let r = rhs.eval_scalar(&env, d)?;
            Ok(Outcome::scalar(max_abs(&(l - r))))
        })?;
    }

    if let Some(closed) = &m.closed.spin_connection {
        let pts = ctx.x_points("spin_connection", ctx.ver().frame_points);
        let src = m.preferred_source();
        ctx.check("clifford.spin_connection_closed_form", CONNECTION_TOL, Comparison::Below, || {
            over_points(Comparison::Below, &pts, |x| {
                let fr = m.frames(x, 0, src)?;
                let got = m.spin_connection_at(&fr);
                let xv: Vec<_> = x.iter().map(|&v| c(v)).collect();
                let want = closed.eval_scalar(&m.x_scope.env_scalar(&xv, &m.params), d)?;
                Ok(max_abs(&(got - want)))
            })
        })?;
    }
    Ok(())
}
