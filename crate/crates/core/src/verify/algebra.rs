use serde_json::json;

use super::{Comparison, Ctx, Outcome};
use crate::model::ModelError;
use crate::schema::IdentityExpectation;

const STRUCTURE_TOL: f64 = 1e-12;
const ADH_TOL: f64 = 1e-13;
const CASIMIR_TOL: f64 = 1e-10;
const CASIMIR_SAMPLES: usize = 20;
const INDEX_SAMPLES: usize = 20;
const IDENTITY_SAMPLES: usize = 20;
const NONZERO_FLOOR: f64 = 1e-3;

pub(super) fn run(ctx: &mut Ctx) -> Result<(), ModelError> {
    let m = ctx.model;
    let seed = ctx.opts.seed;
    ctx.check("algebra.antisymmetry", STRUCTURE_TOL, Comparison::Below, || Ok(Outcome::scalar(m.alg.antisymmetry_residual())))?;
    ctx.check("algebra.jacobi", STRUCTURE_TOL, Comparison::Below, || Ok(Outcome::scalar(m.alg.jacobi_residual())))?;
    if let Some(rep) = &m.rep {
        ctx.check("algebra.rep_homomorphism", STRUCTURE_TOL, Comparison::Below, || Ok(Outcome::scalar(rep.homomorphism_residual(&m.alg))))?;
    }
    ctx.check("algebra.subalgebra_closure", STRUCTURE_TOL, Comparison::Below, || Ok(Outcome::scalar(m.split.closure_residual(&m.alg))))?;

    let draws = ctx.param_draws("adh", ctx.ver().adh_draws);
    ctx.check("algebra.adh_invariance", ADH_TOL, Comparison::Below, || {
        let mut samples = Vec::new();
        for d in &draws {
            let md = m.with_params(d)?;
            let point: Vec<f64> = d.values().copied().collect();
            samples.push((md.alg.adh_invariance_residual(&md.split, &md.form.lower), point));
        }
        let keys: Vec<&String> = draws[0].keys().collect();
        Ok(Outcome::reduce(Comparison::Below, samples).with_detail(json!({ "point_params": keys })))
    })?;

    for (k, cas) in m.casimirs.iter().enumerate() {
        ctx.anchored(&cas.anchor).check(format!("algebra.casimir.{}", cas.name), CASIMIR_TOL, Comparison::Below, || {
            Ok(Outcome::reduce(Comparison::Below, m.alg.casimir_samples(&cas.poly, CASIMIR_SAMPLES, seed.wrapping_add(k as u64))))
        })?;
    }

    let est = m.alg.algebra_index(INDEX_SAMPLES, seed);
    if let Some(want) = ctx.ver().expected_index {
        ctx.check("algebra.index", 0.5, Comparison::Below, || {
            Ok(Outcome { residual: (est.index as f64 - want as f64).abs(), worst_point: None, samples: INDEX_SAMPLES, detail: json!({ "index": est.index, "expected": want, "generic_rank": est.generic_rank, "ranks_disagree": est.ranks_disagree }) })
        })?;
    }

    if let Some((lam, spec)) = &m.polarization {
        let orbit = m.alg.orbit_dimension(lam);
        if let Some(want) = ctx.ver().expected_orbit_dim {
            ctx.check("algebra.orbit_dim", 0.5, Comparison::Below, || Ok(Outcome::scalar((orbit as f64 - want as f64).abs()).with_detail(json!({ "orbit_dim": orbit, "expected": want }))))?;
        }
        let rep = m.alg.check_polarization(lam, spec, orbit);
        ctx.check("algebra.polarization", STRUCTURE_TOL, Comparison::Below, || {
            let dim_defect = if rep.dim_ok { 0.0 } else { 1.0 };
            Ok(Outcome::scalar(rep.closure_residual.max(rep.isotropy_residual).max(dim_defect)).with_detail(json!({
                "closure": rep.closure_residual,
                "isotropy": rep.isotropy_residual,
                "dim": rep.dim,
                "expected_dim": rep.expected_dim,
            })))
        })?;
        let beta = m.alg.beta_vector(spec);
        ctx.check("algebra.beta_vector", 0.0, Comparison::Info, || {
            let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
            Ok(Outcome::scalar(norm).with_detail(json!({ "beta": beta })))
        })?;
    }

    for (k, idc) in m.identities.iter().enumerate() {
        // largest |Γ(f)| for both expectations: a nonzero identity needs one witness
        let samples = m.alg.annihilator_samples(&m.split, &idc.poly, IDENTITY_SAMPLES, seed.wrapping_add(100 + k as u64));
        let id = format!("algebra.identity.{}", idc.name);
        let detail = json!({ "expect": match idc.expect { IdentityExpectation::Vanishes => "vanishes", IdentityExpectation::Nonzero => "nonzero" } });
        let out = Outcome::reduce(Comparison::Below, samples).with_detail(detail);
        ctx.anchored(&idc.anchor);
        match idc.expect {
            IdentityExpectation::Vanishes => ctx.check(id, STRUCTURE_TOL, Comparison::Below, || Ok(out))?,
            IdentityExpectation::Nonzero => ctx.check(id, NONZERO_FLOOR, Comparison::Above, || Ok(out))?,
        }
    }
    Ok(())
}
