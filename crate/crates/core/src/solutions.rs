//! Explicit solution families: the reduced ODE and its assembly, flow
//! compositions on the λ-variables, and their evaluation as spinor jets.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::expr::{Expr, Program};
use crate::jet::{Jet, JetSpace};
use crate::linalg::{c, CMat, JetMat, C64, I, ONE, ZERO};
use crate::model::{CTerms, CompiledOde, FrameSource, Model, ModelError, Scope};
use crate::operator::{value_norm2, OpAtPoint};
use crate::schema::{Construction, Draw, FamilySection, SpinorSpec};

// ---------------------------------------------------------------------------
// Adaptive Dormand–Prince 5(4)

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-12, atol: 1e-12, max_steps: 200_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub steps: usize,
    pub rejected: usize,
    /// Largest accepted local error estimate (absolute).
    pub max_local_error: f64,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &[C64], terms: &[(f64, &[C64])], h: f64) -> Vec<C64> {
    let mut out = y.to_vec();
    for (a, k) in terms {
        if *a != 0.0 {
            for (o, v) in out.iter_mut().zip(k.iter()) {
                *o += v * (a * h);
            }
        }
    }
    out
}

/// Integrate `y' = f(u, y)` from `u0` to `u1`.
pub fn integrate<F>(f: F, u0: f64, y0: &[C64], u1: f64, tol: Tolerances) -> Result<(Vec<C64>, OdeStats), ModelError>
where
    F: Fn(f64, &[C64]) -> Result<Vec<C64>, ModelError>,
{
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    if u1 == u0 {
        return Ok((y, stats));
    }
    let dir = (u1 - u0).signum();
    let span = (u1 - u0).abs();
    let mut u = u0;
    let mut h = (span * 1e-3).max(1e-8).min(span);
    let mut k1 = f(u, &y)?;
    let h_min = span * 1e-14;
    loop {
        if stats.steps + stats.rejected > tol.max_steps {
            return Err(ModelError::Eval(format!("ODE step limit reached at u = {u}")));
        }
        let last = (u1 - u).abs() <= h;
        if last {
            h = (u1 - u).abs();
        }
        let hs = h * dir;
        let k2 = f(u + 0.2 * hs, &axpy(&y, &[(A21, &k1)], hs))?;
        let k3 = f(u + 0.3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs))?;
        let k4 = f(u + 0.8 * hs, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs))?;
        let k5 = f(u + 8.0 / 9.0 * hs, &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs))?;
        let k6 = f(u + hs, &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs))?;
        let y5 = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
        let k7 = f(u + hs, &y5)?;
        let err_vec = axpy(&vec![ZERO; y.len()], &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)], hs);
        let mut err: f64 = 0.0;
        let mut abs_err: f64 = 0.0;
        for i in 0..y.len() {
            let sc = tol.atol + tol.rtol * y[i].norm().max(y5[i].norm());
            err = err.max(err_vec[i].norm() / sc);
            abs_err = abs_err.max(err_vec[i].norm());
        }
        if !err.is_finite() || y5.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ModelError::Eval(format!("ODE right-hand side not finite near u = {u}")));
        }
        if err <= 1.0 {
            stats.steps += 1;
            stats.max_local_error = stats.max_local_error.max(abs_err);
            u += hs;
            y = y5;
            k1 = k7;
            if last {
                return Ok((y, stats));
            }
        } else {
            stats.rejected += 1;
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h < h_min {
            return Err(ModelError::Eval(format!("ODE step size underflow at u = {u}")));
        }
    }
}

// ---------------------------------------------------------------------------
// Reduced ODE `iħ ψ' = M(u) ψ`

pub fn ode_matrix(model: &Model, ode: &CompiledOde, u: f64) -> Result<CMat, ModelError> {
    let env = ode.scope.env_scalar(&[c(u)], &model.params);
    Ok(ode.matrix.eval_scalar(&env, model.spinor_dim())?)
}

fn ode_rhs(model: &Model, ode: &CompiledOde, u: f64, y: &[C64]) -> Result<Vec<C64>, ModelError> {
    let m = ode_matrix(model, ode, u)? * (-I / model.hbar);
    let v = nalgebra::DVector::from_column_slice(y);
    Ok((m * v).iter().cloned().collect())
}

pub fn ode_get<'a>(model: &'a Model, name: &str) -> Result<&'a CompiledOde, ModelError> {
    model.odes.get(name).ok_or_else(|| ModelError::schema("solutions.odes", format!("unknown ODE `{name}`")))
}

/// `ψ(u)` from the declared start value, or from `initial` when given.
pub fn ode_solve(model: &Model, ode: &CompiledOde, u: f64, initial: Option<&[C64]>, tol: Tolerances) -> Result<(Vec<C64>, OdeStats), ModelError> {
    let y0 = initial.unwrap_or(&ode.initial);
    if ode.start != 0.0 && u.signum() != ode.start.signum() {
        return Err(ModelError::Eval(format!("ODE interval from {} to {u} crosses the pole at 0", ode.start)));
    }
    integrate(|s, y| ode_rhs(model, ode, s, y), ode.start, y0, u, tol)
}

/// Taylor coefficients `ψ_n` of the solution through `(u0, ψ(u0))`.
pub fn ode_series(model: &Model, ode: &CompiledOde, u0: f64, psi0: &[C64], order: usize) -> Result<Vec<Vec<C64>>, ModelError> {
    let d = model.spinor_dim();
    let sp = JetSpace::get(1, order.max(1));
    let uj = Jet::var(&sp, order, 0, c(u0));
    let env = ode.scope.env(&[uj], &model.params, &sp, order);
    let mj = ode.matrix.eval_jet(&env, d, &sp, order)?;
    // M_k as constant matrices
    let mk: Vec<CMat> = (0..=order)
        .map(|k| {
            CMat::from_fn(d, d, |i, j| match &mj.entries[i * d + j] {
                Some(e) => e.coeff(&[k as u8]),
                None => ZERO,
            })
        })
        .collect();
    let mut psi: Vec<nalgebra::DVector<C64>> = vec![nalgebra::DVector::from_column_slice(psi0)];
    let pre = -I / model.hbar;
    for n in 0..order {
        let mut acc = nalgebra::DVector::zeros(d);
        for k in 0..=n {
            acc += &mk[k] * &psi[n - k];
        }
        psi.push(acc * (pre / (n as f64 + 1.0)));
    }
    Ok((0..d).map(|i| psi.iter().map(|v| v[i]).collect()).collect())
}

// ---------------------------------------------------------------------------
// Spinor constructions

#[derive(Debug, Clone)]
pub struct CompiledFlow {
    pub name: String,
    pub generator: usize,
    pub scope: Scope,
    pub program: Program,
}

#[derive(Debug, Clone)]
pub enum CompiledSpinor {
    Expression(Program),
    OdeAssembly { ode: String, exponent: CTerms, phase: Expr, argument: Expr },
    /// `steps[0]` is applied first to the λ-variables (outermost factor).
    Flows { lambda_slots: Vec<usize>, steps: Vec<(CompiledFlow, usize)>, seed: Box<CompiledSpinor>, lambda_scope: Scope },
}

pub fn compile_flow(model: &Model, name: &str) -> Result<CompiledFlow, ModelError> {
    let sol = model.file.solutions.as_ref().ok_or_else(|| ModelError::schema("solutions", "missing section"))?;
    let path = format!("solutions.flows.{name}");
    let fl = sol.flows.get(name).ok_or_else(|| ModelError::schema(&path, "unknown flow"))?;
    let lr = model.lambda_rep.as_ref().ok_or_else(|| ModelError::schema("lambda_rep", "flows need a λ-representation"))?;
    let mut vars = lr.vars.clone();
    vars.push(fl.amount.clone());
    let scope = Scope::new(&vars, &model.params);
    let mut outputs = vec![fl.prefactor.clone()];
    outputs.extend(fl.args.iter().cloned());
    let program = Program::compile(&scope.symbols, &fl.bindings, &outputs).map_err(|e| ModelError::schema(&path, e.to_string()))?;
    let generator = model.alg.index_of(&fl.generator).ok_or_else(|| ModelError::schema(&path, "unknown generator"))?;
    Ok(CompiledFlow { name: name.to_string(), generator, scope, program })
}

pub fn compile_spinor(model: &Model, spec: &SpinorSpec, scope: &Scope, path: &str) -> Result<CompiledSpinor, ModelError> {
    match spec {
        SpinorSpec::Expression { bindings, components } => {
            if components.len() != model.spinor_dim() {
                return Err(ModelError::schema(path, format!("expected {} components", model.spinor_dim())));
            }
            let p = Program::compile(&scope.symbols, bindings, components).map_err(|e| ModelError::schema(path, e.to_string()))?;
            Ok(CompiledSpinor::Expression(p))
        }
        SpinorSpec::OdeAssembly { ode, exponent, phase, argument } => compile_assembly(model, ode, exponent, phase, argument, scope, path),
    }
}

fn compile_assembly(model: &Model, ode: &str, exponent: &crate::schema::TermsSpec, phase: &str, argument: &str, scope: &Scope, path: &str) -> Result<CompiledSpinor, ModelError> {
    ode_get(model, ode)?;
    Ok(CompiledSpinor::OdeAssembly {
        ode: ode.to_string(),
        exponent: model.terms(exponent, scope, &format!("{path}.exponent"))?,
        phase: scope.parse(&format!("{path}.phase"), phase)?,
        argument: scope.parse(&format!("{path}.argument"), argument)?,
    })
}

pub fn compile_construction(model: &Model, cons: &Construction, scope: &Scope, path: &str) -> Result<CompiledSpinor, ModelError> {
    match cons {
        Construction::OdeAssembly { ode, exponent, phase, argument } => compile_assembly(model, ode, exponent, phase, argument, scope, path),
        Construction::Flows { sequence, seed } => {
            let lr = model.lambda_rep.as_ref().ok_or_else(|| ModelError::schema(path, "flows need a λ-representation"))?;
            let lambda_slots = lr
                .vars
                .iter()
                .map(|v| scope.symbols.slot(v).ok_or_else(|| ModelError::schema(path, format!("λ-variable `{v}` not in scope"))))
                .collect::<Result<Vec<_>, _>>()?;
            let mut steps = Vec::new();
            for (k, (flow, coord)) in sequence.iter().enumerate() {
                let slot = scope.symbols.slot(coord).ok_or_else(|| ModelError::schema(format!("{path}.sequence[{k}]"), format!("unknown amount `{coord}`")))?;
                steps.push((compile_flow(model, flow)?, slot));
            }
            let lambda_scope = lr.scope.clone();
            let seed = compile_spinor(model, seed, &lambda_scope, &format!("{path}.seed"))?;
            Ok(CompiledSpinor::Flows { lambda_slots, steps, seed: Box::new(seed), lambda_scope })
        }
    }
}

fn matjet_to_jetmat(m: &crate::operator::MatJet, sp: &Arc<JetSpace>, order: usize) -> JetMat {
    let mut out = JetMat::zeros(sp, order, m.d, m.d);
    for i in 0..m.d {
        for j in 0..m.d {
            if let Some(e) = m.get(i, j) {
                out.set(i, j, e.truncate(order));
            }
        }
    }
    out
}

/// Evaluate a compiled spinor on an environment built from its scope.
pub fn eval_spinor(model: &Model, cs: &CompiledSpinor, env: &[Jet], sp: &Arc<JetSpace>, order: usize) -> Result<Vec<Jet>, ModelError> {
    let d = model.spinor_dim();
    match cs {
        CompiledSpinor::Expression(p) => Ok(p.eval(env, sp, order)?),
        CompiledSpinor::OdeAssembly { ode, exponent, phase, argument } => {
            let ode = ode_get(model, ode)?;
            let arg = argument.eval(env, sp, order)?;
            let a0 = arg.value();
            if a0.im.abs() > 1e-12 * (1.0 + a0.re.abs()) {
                return Err(ModelError::Eval(format!("ODE argument is not real: {a0}")));
            }
            let (psi0, _) = ode_solve(model, ode, a0.re, None, Tolerances::default())?;
            let series = ode_series(model, ode, a0.re, &psi0, order)?;
            let inner: Vec<Jet> = series.iter().map(|s| arg.compose_series(s)).collect();
            let ex = matjet_to_jetmat(&exponent.eval_jet(env, d, sp, order)?, sp, order).exp();
            let ph = phase.eval(env, sp, order)?;
            Ok(ex.apply(&inner).iter().map(|v| v * &ph).collect())
        }
        CompiledSpinor::Flows { lambda_slots, steps, seed, lambda_scope } => {
            let mut q: Vec<Jet> = lambda_slots.iter().map(|&s| env[s].clone()).collect();
            let mut pref = Jet::constant(sp, order, ONE);
            for (flow, slot) in steps {
                let mut vars = q.clone();
                vars.push(env[*slot].clone());
                let fenv = flow.scope.env(&vars, &model.params, sp, order);
                let out = flow.program.eval(&fenv, sp, order)?;
                pref = &pref * &out[0];
                q = out[1..].to_vec();
            }
            let senv = lambda_scope.env(&q, &model.params, sp, order);
            let base = eval_spinor(model, seed, &senv, sp, order)?;
            Ok(base.iter().map(|v| v * &pref).collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Flows on the λ-variables

/// Closed-form flow value `(e^{−τℓ} f)(q)` for a scalar function `f` of the
/// λ-variables.
pub fn flow_apply(model: &Model, flow: &CompiledFlow, f: &Expr, q: &[f64], amount: f64) -> Result<C64, ModelError> {
    let mut vars: Vec<C64> = q.iter().map(|&v| c(v)).collect();
    vars.push(c(amount));
    let out = flow.program.eval_scalar(&flow.scope.env_scalar(&vars, &model.params))?;
    let lr = model.lambda_rep.as_ref().expect("flows need λ-rep");
    let nq: Vec<C64> = out[1..].to_vec();
    Ok(out[0] * f.eval_scalar(&lr.scope.env_scalar(&nq, &model.params))?)
}

/// Image point and prefactor of the closed-form flow.
pub fn flow_map(model: &Model, flow: &CompiledFlow, q: &[C64], amount: f64) -> Result<(C64, Vec<C64>), ModelError> {
    let mut vars = q.to_vec();
    vars.push(c(amount));
    let out = flow.program.eval_scalar(&flow.scope.env_scalar(&vars, &model.params))?;
    Ok((out[0], out[1..].to_vec()))
}

/// `(e^{−τ₁ℓ} e^{−τ₂ℓ} f)(q)` by composing the closed forms.
pub fn flow_compose(model: &Model, flow: &CompiledFlow, f: &Expr, q: &[f64], t1: f64, t2: f64) -> Result<C64, ModelError> {
    let lr = model.lambda_rep.as_ref().expect("flows need λ-rep");
    let q0: Vec<C64> = q.iter().map(|&v| c(v)).collect();
    let (p1, q1) = flow_map(model, flow, &q0, t1)?;
    let (p2, q2) = flow_map(model, flow, &q1, t2)?;
    Ok(p1 * p2 * f.eval_scalar(&lr.scope.env_scalar(&q2, &model.params))?)
}

/// Transport oracle: `u(τ) = f(Q(τ)) exp(−∫₀^τ w(Q))` with `Q' = −v(Q)`,
/// which solves `∂_τ u = −ℓ u` for `ℓ = v·∂ + w`.
pub fn flow_oracle(model: &Model, generator: usize, f: &Expr, q: &[f64], amount: f64) -> Result<C64, ModelError> {
    let lr = model.lambda_rep.as_ref().ok_or_else(|| ModelError::Eval("no λ-representation".into()))?;
    let op = &lr.ops[generator];
    let nq = lr.vars.len();
    let rhs = |_s: f64, y: &[C64]| -> Result<Vec<C64>, ModelError> {
        let env = lr.scope.env_scalar(&y[..nq], &model.params);
        let mut out = vec![ZERO; nq + 1];
        for (v, t) in &op.derivs {
            out[*v] = -t.eval_scalar(&env, 1)?[(0, 0)];
        }
        if let Some(p) = &op.pot {
            out[nq] = p.eval_scalar(&env, 1)?[(0, 0)];
        }
        Ok(out)
    };
    let mut y0: Vec<C64> = q.iter().map(|&v| c(v)).collect();
    y0.push(ZERO);
    let tol = Tolerances { rtol: 1e-13, atol: 1e-13, ..Tolerances::default() };
    let (y, _) = integrate(rhs, 0.0, &y0, amount, tol)?;
    let fv = f.eval_scalar(&lr.scope.env_scalar(&y[..nq], &model.params))?;
    Ok(fv * (-y[nq]).exp())
}

// ---------------------------------------------------------------------------
// Families

/// Draw a value from a distribution.
pub fn draw(d: &Draw, rng: &mut impl rand::Rng) -> f64 {
    match d {
        Draw::Uniform { uniform: [lo, hi] } => rng.gen_range(*lo..*hi),
        Draw::Signed { signed: [lo, hi] } => crate::sampling::signed_magnitude(rng, *lo, *hi),
    }
}

/// A family member at fixed parameters, ready for point evaluation.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub model: Model,
    pub scope: Scope,
    pub spinor: CompiledSpinor,
    pub mass: f64,
    /// λ-variables seeded as extra jet variables.
    pub companion: Vec<String>,
    pub values: BTreeMap<String, f64>,
}

/// Evaluate pins (expressions in the current parameters) and recompile.
pub fn apply_pins(model: &Model, pins: &BTreeMap<String, String>) -> Result<Model, ModelError> {
    if pins.is_empty() {
        return Ok(model.clone());
    }
    let mut o = BTreeMap::new();
    for (k, e) in pins {
        let v = model.params.eval(e)?;
        o.insert(k.clone(), v.re);
    }
    model.with_params(&o)
}

pub fn family_scope(model: &Model, fam: &FamilySection) -> Scope {
    let mut vars: Vec<String> = model.coord_names[..model.nx].to_vec();
    vars.extend(fam.companion.iter().cloned());
    Scope::new(&vars, &model.params)
}

/// Build a member from parameter values (draws and variant already merged).
pub fn family_member(base: &Model, fam: &FamilySection, values: &BTreeMap<String, f64>, overrides: &BTreeMap<String, String>, mass: Option<&str>) -> Result<FamilyMember, ModelError> {
    let m1 = base.with_params(values)?;
    let m2 = apply_pins(&m1, &fam.pinned)?;
    let m3 = apply_pins(&m2, overrides)?;
    let scope = family_scope(&m3, fam);
    let path = format!("solutions.families.{}", fam.id);
    let spinor = compile_construction(&m3, &fam.construction, &scope, &format!("{path}.construction"))?;
    let mass = m3.params.eval(mass.unwrap_or(&fam.mass))?.re;
    if let Some(lr) = &m3.lambda_rep {
        for cvar in &fam.companion {
            if !lr.vars.contains(cvar) {
                return Err(ModelError::schema(&path, format!("companion `{cvar}` is not a λ-variable")));
            }
            if m3.params.get(cvar).is_none() {
                return Err(ModelError::schema(&path, format!("companion `{cvar}` must be a declared parameter")));
            }
        }
    } else if !fam.companion.is_empty() {
        return Err(ModelError::schema(&path, "companion system needs a λ-representation"));
    }
    Ok(FamilyMember { model: m3, scope, spinor, mass, companion: fam.companion.clone(), values: values.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResidual {
    pub norm: f64,
    /// `‖(D_M − m)ψ‖ / ‖ψ‖`
    pub dirac: f64,
    /// `max_A ‖(X̃_A + ℓ_A)ψ‖ / ‖ψ‖`, when companions are declared.
    pub companion: Option<f64>,
}

impl FamilyMember {
    fn nq(&self) -> usize {
        self.companion.len()
    }

    /// Spinor jets at `x` in variables `(x, companions)`.
    pub fn spinor_at(&self, x: &[f64], order: usize) -> Result<(Arc<JetSpace>, Vec<Jet>), ModelError> {
        let m = &self.model;
        let sp = JetSpace::get(m.nx + self.nq(), order);
        let mut vars: Vec<Jet> = x.iter().enumerate().map(|(i, &v)| Jet::var(&sp, order, i, c(v))).collect();
        for (k, name) in self.companion.iter().enumerate() {
            vars.push(Jet::var(&sp, order, m.nx + k, c(m.param(name))));
        }
        let env = self.scope.env(&vars, &m.params, &sp, order);
        let psi = eval_spinor(m, &self.spinor, &env, &sp, order)?;
        Ok((sp, psi))
    }

    pub fn residual_at(&self, x: &[f64], source: FrameSource) -> Result<PointResidual, ModelError> {
        let m = &self.model;
        let order = 1;
        let (sp, psi) = self.spinor_at(x, order)?;
        let norm = value_norm2(&psi);
        let fr = m.frames_in(x, &sp, order, source)?;
        let d_op = m.dirac_at(&fr).shift(c(-self.mass), &sp, order);
        let dirac = value_norm2(&d_op.apply(&psi)?) / norm;
        let companion = if self.nq() > 0 {
            let lr = m.lambda_rep.as_ref().expect("checked when compiling");
            let qv: Vec<Jet> = lr.vars.iter().map(|v| {
                let k = self.companion.iter().position(|cn| cn == v);
                match k {
                    Some(k) => Jet::var(&sp, order, m.nx + k, c(m.param(v))),
                    None => Jet::constant(&sp, order, c(m.params.get(v).unwrap_or(0.0))),
                }
            }).collect();
            let lenv = lr.scope.env(&qv, &m.params, &sp, order);
            let mut worst: f64 = 0.0;
            for a in 0..m.dim() {
                let ell = lr.ops[a].at(&lenv, m.nx, 1, &sp, order)?.lift(m.spinor_dim());
                // λ-operators only act on the companion variables
                let op: OpAtPoint = m.symmetry_at(&fr, a).add(&ell);
                worst = worst.max(value_norm2(&op.apply(&psi)?) / norm);
            }
            Some(worst)
        } else {
            None
        };
        Ok(PointResidual { norm, dirac, companion })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dopri_matches_exponential() {
        let f = |_u: f64, y: &[C64]| -> Result<Vec<C64>, ModelError> { Ok(vec![y[0] * C64::new(-0.3, 2.0)]) };
        let (y, st) = integrate(f, 0.0, &[ONE], 1.7, Tolerances::default()).unwrap();
        let want = (C64::new(-0.3, 2.0) * 1.7).exp();
        assert!((y[0] - want).norm() < 1e-10, "{}", (y[0] - want).norm());
        assert!(st.max_local_error <= 1e-10);
        // backwards
        let (y, _) = integrate(f, 1.0, &[ONE], -0.5, Tolerances::default()).unwrap();
        assert!((y[0] - (C64::new(-0.3, 2.0) * -1.5).exp()).norm() < 1e-10);
    }

    #[test]
    fn dopri_time_dependent() {
        // y' = 2u y → y = exp(u²)
        let f = |u: f64, y: &[C64]| -> Result<Vec<C64>, ModelError> { Ok(vec![y[0] * (2.0 * u)]) };
        let (y, _) = integrate(f, 0.0, &[ONE], 1.2, Tolerances::default()).unwrap();
        assert_abs_diff_eq!(y[0].re, (1.44f64).exp(), epsilon = 1e-9);
    }
}
