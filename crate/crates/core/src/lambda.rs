//! Scalar λ-representations `ℓ_A` on functions of `q`, their Casimir
//! values, and the reduced Dirac system `D_ℓ ψ = mψ`, `(ℓ_α + Λ_α)ψ = 0`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::expr::Expr;
use crate::jet::{Jet, JetSpace};
use crate::linalg::{c, C64, I, ONE};
use crate::model::{LambdaModel, Model, ModelError};
use crate::operator::{monomial_tests, value_norm, value_norm2, OpAtPoint, OperatorPolynomial};
use crate::schema::GridSection;
use crate::solutions::{compile_spinor, eval_spinor, CompiledSpinor};

pub fn lambda_model(model: &Model) -> Result<&LambdaModel, ModelError> {
    model.lambda_rep.as_ref().ok_or_else(|| ModelError::schema("lambda_rep", "model declares no λ-representation"))
}

fn q_vars(sp: &Arc<JetSpace>, order: usize, q: &[f64]) -> Vec<Jet> {
    q.iter().enumerate().map(|(i, &v)| Jet::var(sp, order, i, c(v))).collect()
}

/// `ℓ_A` at `q` for every basis element, as scalar operators.
pub fn ops_at(model: &Model, q: &[f64], sp: &Arc<JetSpace>, order: usize) -> Result<Vec<OpAtPoint>, ModelError> {
    let lr = lambda_model(model)?;
    let env = lr.scope.env(&q_vars(sp, order, q), &model.params, sp, order);
    lr.ops.iter().map(|op| Ok(op.at(&env, 0, 1, sp, order)?)).collect()
}

/// `max |([ℓ_A, ℓ_B] − C^C_{AB} ℓ_C) f|` over monomial tests of degree ≤ `degree`.
pub fn commutator_defect(model: &Model, q: &[f64], degree: usize) -> Result<f64, ModelError> {
    let nq = q.len();
    let order = degree.max(2);
    let sp = JetSpace::get(nq, order);
    let ops = ops_at(model, q, &sp, order)?;
    let tests = monomial_tests(&sp, order, 1, degree);
    let dim = model.dim();
    let mut worst: f64 = 0.0;
    for a in 0..dim {
        for b in (a + 1)..dim {
            for t in &tests {
                let ab = ops[a].apply(&ops[b].apply(t)?)?;
                let ba = ops[b].apply(&ops[a].apply(t)?)?;
                let mut r = &ab[0] - &ba[0];
                for k in 0..dim {
                    let ck = model.alg.c(a, b, k);
                    if ck != 0.0 {
                        let lk = ops[k].apply(t)?;
                        r = &r - &lk[0].truncate(r.order()).scale(c(ck));
                    }
                }
                worst = worst.max(value_norm(&[r]));
            }
        }
    }
    Ok(worst)
}

/// `K(−iħℓ)` with symmetrized words.
pub fn casimir_operator(model: &Model, k: usize) -> OperatorPolynomial {
    let mih = -I * model.hbar;
    let terms = model.casimirs[k].poly.terms.iter().map(|(coef, w)| (c(*coef) * mih.powu(w.len() as u32), w.clone())).collect();
    OperatorPolynomial { terms }
}

/// Test function `exp(Σ a_i δq_i + b δq_1 δq_2)` at `q`, value 1 at the base point.
pub fn test_function(sp: &Arc<JetSpace>, order: usize, q: &[f64], coeffs: &[C64]) -> Result<Jet, ModelError> {
    let dq: Vec<Jet> = (0..q.len()).map(|i| Jet::var(sp, order, i, c(0.0))).collect();
    let mut e = Jet::zero(sp, order);
    for (i, d) in dq.iter().enumerate() {
        e = &e + &d.scale(coeffs[i]);
    }
    if q.len() >= 2 && coeffs.len() > q.len() {
        e = &e + &(&dq[0] * &dq[1]).scale(coeffs[q.len()]);
    }
    Ok(e.exp()?)
}

/// Random complex coefficients for [`test_function`].
pub fn random_test_coeffs(rng: &mut impl Rng, nq: usize) -> Vec<C64> {
    (0..=nq).map(|_| C64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))).collect()
}

/// `(K_μ(−iħℓ) f)(q) / f(q)` for each test function.
pub fn casimir_ratios(model: &Model, k: usize, q: &[f64], tests: &[Vec<C64>]) -> Result<Vec<C64>, ModelError> {
    let op = casimir_operator(model, k);
    let order = op.degree().max(1);
    let sp = JetSpace::get(q.len(), order);
    let ops = ops_at(model, q, &sp, order)?;
    tests
        .iter()
        .map(|co| {
            let f = test_function(&sp, order, q, co)?;
            let kf = op.apply(&ops, std::slice::from_ref(&f))?;
            Ok(kf[0].value() / f.value())
        })
        .collect()
}

/// Anti-Hermiticity of `ℓ_A` for `dμ = ρ dq`: `Im a^i = 0` and
/// `2 Re b = ρ⁻¹ ∂_i(ρ a^i)`.
pub fn measure_defect(model: &Model, rho: &Expr, q: &[f64]) -> Result<f64, ModelError> {
    let lr = lambda_model(model)?;
    let order = 1;
    let sp = JetSpace::get(q.len(), order);
    let env = lr.scope.env(&q_vars(&sp, order, q), &model.params, &sp, order);
    let r = rho.eval(&env, &sp, order)?;
    let ops = ops_at(model, q, &sp, order)?;
    let mut worst: f64 = 0.0;
    for op in &ops {
        let mut div = C64::new(0.0, 0.0);
        for (i, a) in op.deriv.iter().enumerate() {
            if let Some(ai) = a.get(0, 0) {
                worst = worst.max(ai.value().im.abs());
                let mut alpha = vec![0u8; q.len()];
                alpha[i] = 1;
                div += (&r * ai).derivative(&alpha);
            }
        }
        let b = op.pot.get(0, 0).map(|j| j.value()).unwrap_or_default();
        worst = worst.max((2.0 * b.re - (div / r.value()).re).abs());
    }
    Ok(worst)
}

/// `D_ℓ = iħγ̂^a(ℓ_a + Γ_a)` at `q`.
pub fn reduced_dirac_at(model: &Model, ops: &[OpAtPoint], sp: &Arc<JetSpace>, order: usize) -> OpAtPoint {
    let d = model.spinor_dim();
    let ih = I * model.hbar;
    let mut out = OpAtPoint::zero(sp.nvars(), d);
    for (ai, &a) in model.split.m.iter().enumerate() {
        let ga = &model.gammas.upper[ai] * ih;
        for (v, m) in ops[a].deriv.iter().enumerate() {
            if let Some(f) = m.get(0, 0) {
                out.deriv[v].add_term(&ga, f);
            }
        }
        if let Some(f) = ops[a].pot.get(0, 0) {
            out.pot.add_term(&ga, f);
        }
    }
    out.pot.add_term(&(&model.gamma_total * ih), &Jet::constant(sp, order, ONE));
    out
}

/// `ℓ_α + Λ_α` for the isotropy index `k`.
pub fn constraint_at(model: &Model, ops: &[OpAtPoint], k: usize, sp: &Arc<JetSpace>, order: usize) -> OpAtPoint {
    let alpha = model.split.h[k];
    let mut op = ops[alpha].lift(model.spinor_dim());
    op.pot.add_term(&model.lambda[k], &Jet::constant(sp, order, ONE));
    op
}

/// Reduced spinor of the λ-representation.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub spinor: CompiledSpinor,
    pub mass: f64,
}

pub fn reduced_system(model: &Model, mass: Option<&str>) -> Result<Option<ReducedSystem>, ModelError> {
    let lr = lambda_model(model)?;
    let Some(spec) = model.file.lambda_rep.as_ref().and_then(|f| f.reduced_spinor.as_ref()) else {
        return Ok(None);
    };
    let spinor = compile_spinor(model, spec, &lr.scope, "lambda_rep.reduced_spinor")?;
    let mass_text = mass.map(str::to_string).or_else(|| model.file.lambda_rep.as_ref().and_then(|f| f.reduced_mass.clone())).unwrap_or_else(|| "m".to_string());
    let mass = model.params.eval(&mass_text)?.re;
    Ok(Some(ReducedSystem { spinor, mass }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedResidual {
    pub norm: f64,
    /// `max_α ‖(ℓ_α + Λ_α)ψ‖ / ‖ψ‖`
    pub constraint: f64,
    /// `‖(D_ℓ − m)ψ‖ / ‖ψ‖`
    pub dirac: f64,
}

pub fn reduced_residual(model: &Model, sys: &ReducedSystem, q: &[f64]) -> Result<ReducedResidual, ModelError> {
    let lr = lambda_model(model)?;
    let order = 1;
    let sp = JetSpace::get(q.len(), order);
    let env = lr.scope.env(&q_vars(&sp, order, q), &model.params, &sp, order);
    let psi = eval_spinor(model, &sys.spinor, &env, &sp, order)?;
    let norm = value_norm2(&psi);
    let ops = ops_at(model, q, &sp, order)?;
    let mut constraint: f64 = 0.0;
    for k in 0..model.split.h.len() {
        let r = constraint_at(model, &ops, k, &sp, order).apply(&psi)?;
        constraint = constraint.max(value_norm2(&r) / norm);
    }
    let dm = reduced_dirac_at(model, &ops, &sp, order).shift(c(-sys.mass), &sp, order);
    let dirac = value_norm2(&dm.apply(&psi)?) / norm;
    Ok(ReducedResidual { norm, constraint, dirac })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub params: Vec<String>,
    pub argmin: Vec<f64>,
    pub expected: Vec<f64>,
    pub steps: Vec<f64>,
    pub min_value: f64,
    /// Largest `|argmin − expected| / step`.
    pub offset_in_steps: f64,
}

/// Minimize the reduced residual (constraint plus Dirac, worst over `points`)
/// over the grid of section parameters.
pub fn grid_search(model: &Model, grid: &GridSection, points: &[Vec<f64>]) -> Result<GridResult, ModelError> {
    let axes = &grid.axes;
    let steps: Vec<f64> = axes.iter().map(|a| if a.n > 1 { (a.hi - a.lo) / (a.n - 1) as f64 } else { 0.0 }).collect();
    let mut cells: Vec<Vec<f64>> = vec![Vec::new()];
    for (ax, st) in axes.iter().zip(&steps) {
        cells = cells
            .into_iter()
            .flat_map(|p| (0..ax.n.max(1)).map(move |k| {
                let mut p = p.clone();
                p.push(ax.lo + *st * k as f64);
                p
            }))
            .collect();
    }
    let values = crate::exec::par_map(&cells, |cell| -> Result<f64, ModelError> {
        let o: BTreeMap<String, f64> = axes.iter().map(|a| a.param.clone()).zip(cell.iter().cloned()).collect();
        let m = model.with_params(&o)?;
        let sys = reduced_system(&m, Some(&grid.mass))?.ok_or_else(|| ModelError::schema("verification.grid", "grid search needs lambda_rep.reduced_spinor"))?;
        let mut worst: f64 = 0.0;
        for q in points {
            match reduced_residual(&m, &sys, q) {
                Ok(r) if r.constraint.is_finite() && r.dirac.is_finite() => worst = worst.max(r.constraint + r.dirac),
                Ok(_) | Err(ModelError::Eval(_)) => worst = f64::INFINITY,
                Err(e) => return Err(e),
            }
        }
        Ok(worst)
    });
    let mut best = (f64::INFINITY, 0usize);
    for (k, v) in values.into_iter().enumerate() {
        let v = v?;
        if v < best.0 {
            best = (v, k);
        }
    }
    let argmin = cells[best.1].clone();
    let expected = axes.iter().map(|a| model.params.eval(&a.expect).map(|z| z.re)).collect::<Result<Vec<_>, _>>()?;
    let offset_in_steps = argmin
        .iter()
        .zip(&expected)
        .zip(&steps)
        .map(|((a, e), s)| if *s > 0.0 { (a - e).abs() / s } else { (a - e).abs() })
        .fold(0.0, f64::max);
    Ok(GridResult { params: axes.iter().map(|a| a.param.clone()).collect(), argmin, expected, steps, min_value: best.0, offset_in_steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Heisenberg algebra [p, x] = z with ℓ_p = −∂_q, ℓ_x = q, ℓ_z = −1.
    // Frame fields are placeholders; only the λ-part is exercised.
    const HEIS: &str = r#"{
        "name": "heisenberg",
        "parameters": {"hbar": 1.0},
        "algebra": {"labels": ["p", "x", "z"], "brackets": [["p", "x", "z", 1]]},
        "subalgebra": {"h": ["z"]},
        "bilinear_form": {"upper": [[1, 0], [0, 1]]},
        "chart": {"coordinates": [["a", "p"], ["b", "x"], ["h", "z"]]},
        "fields": {"xi": {"p": {"a": "1"}}, "eta": {"p": {"a": "-1"}}},
        "casimirs": [{"name": "Z", "terms": [[1, ["z"]]]}],
        "lambda_rep": {
            "vars": ["q"],
            "section_params": [],
            "section": [0, 0, 1],
            "ops": {"p": {"derivatives": {"q": "-1"}}, "x": {"potential": "q"}, "z": {"potential": "-1"}},
            "casimir_values": {"Z": "i"},
            "measure": "1"
        }
    }"#;

    #[test]
    fn heisenberg_rep_has_no_defect() {
        let m = Model::from_json(HEIS).unwrap();
        assert!(commutator_defect(&m, &[0.3], 2).unwrap() < 1e-14);
        // K = f_z → −iħ ℓ_z = i
        let r = casimir_ratios(&m, 0, &[0.3], &[vec![c(0.2), c(0.1)]]).unwrap();
        assert!((r[0] - I).norm() < 1e-14);
    }

    #[test]
    fn measure_defect_detects_non_unitary_potential() {
        let m = Model::from_json(HEIS).unwrap();
        let lr = lambda_model(&m).unwrap();
        let rho = lr.scope.parse("rho", "1").unwrap();
        // ℓ_x = q is real, hence not anti-Hermitian
        assert!(measure_defect(&m, &rho, &[0.5]).unwrap() > 0.9);
    }
}
