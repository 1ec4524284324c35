//! Loading, validating and compiling a model file into numeric objects.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::chart::{ChartSpec, FrameJets, GroupChart, MatrixRep};
use crate::clifford::{self, GammaSet};
use crate::expr::{parse, EvalError, Expr, ParseError, SymbolKind, Symbols};
use crate::geometry;
use crate::jet::{Jet, JetSpace};
use crate::lie::{BilinearForm, DualPolynomial, LieAlgebra, PolarizationSpec, SubalgebraSplit};
use crate::linalg::{c, CMat, JetMat, RMat, C64, I, ONE};
use crate::operator::{MatJet, OpAtPoint, OperatorPolynomial};
use crate::schema::*;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model: {0}")]
    Io(String),
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("evaluation failed: {0}")]
    Eval(String),
}

impl ModelError {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Schema { path: path.into(), message: message.into() }
    }

    /// Errors caused by the model file itself (exit code 2).
    pub fn is_model_error(&self) -> bool {
        !matches!(self, ModelError::Eval(_))
    }
}

impl From<EvalError> for ModelError {
    fn from(e: EvalError) -> Self {
        ModelError::Eval(e.to_string())
    }
}

impl From<crate::jet::JetError> for ModelError {
    fn from(e: crate::jet::JetError) -> Self {
        ModelError::Eval(e.to_string())
    }
}

impl From<crate::chart::ChartError> for ModelError {
    fn from(e: crate::chart::ChartError) -> Self {
        ModelError::Eval(e.to_string())
    }
}

fn parse_at(path: &str, text: &str, sym: &Symbols) -> Result<Expr, ModelError> {
    parse(text, sym).map_err(|e: ParseError| ModelError::schema(path, e.to_string()))
}

/// Named parameter values in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    names: Vec<String>,
    values: Vec<f64>,
}

impl Params {
    pub fn from_map(m: &BTreeMap<String, f64>) -> Self {
        Params { names: m.keys().cloned().collect(), values: m.values().cloned().collect() }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.names.iter().cloned().zip(self.values.iter().cloned()).collect()
    }

    /// Evaluate an expression over the parameters alone.
    pub fn eval(&self, text: &str) -> Result<C64, ModelError> {
        let scope = Scope::new(&[], self);
        let e = parse_at(text, text, &scope.symbols)?;
        Ok(e.eval_scalar(&scope.env_scalar(&[], self))?)
    }

    pub fn scalar(&self, s: &Scalar) -> Result<C64, ModelError> {
        match s {
            Scalar::Num(v) => Ok(c(*v)),
            Scalar::Pair([re, im]) => Ok(C64::new(*re, *im)),
            Scalar::Text(t) => self.eval(t),
        }
    }

    pub fn real(&self, s: &Scalar, path: &str) -> Result<f64, ModelError> {
        let z = self.scalar(s)?;
        if z.im.abs() > 1e-14 * (1.0 + z.re.abs()) {
            return Err(ModelError::schema(path, format!("expected a real value, got {z}")));
        }
        Ok(z.re)
    }
}

/// Variables followed by all parameters not shadowed by a variable.
#[derive(Debug, Clone)]
pub struct Scope {
    pub symbols: Symbols,
    nvars: usize,
    params: Vec<usize>,
}

impl Scope {
    pub fn new(vars: &[String], params: &Params) -> Scope {
        let mut symbols = Symbols::new();
        for v in vars {
            symbols.push(v, SymbolKind::Variable);
        }
        let mut idx = Vec::new();
        for (i, p) in params.names.iter().enumerate() {
            if symbols.slot(p).is_none() {
                symbols.push(p, SymbolKind::Parameter);
                idx.push(i);
            }
        }
        Scope { symbols, nvars: vars.len(), params: idx }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn parse(&self, path: &str, text: &str) -> Result<Expr, ModelError> {
        parse_at(path, text, &self.symbols)
    }

    pub fn env(&self, vars: &[Jet], params: &Params, space: &Arc<JetSpace>, order: usize) -> Vec<Jet> {
        assert_eq!(vars.len(), self.nvars, "scope variable count");
        let mut env = vars.to_vec();
        env.extend(self.params.iter().map(|&i| Jet::constant(space, order, c(params.values[i]))));
        env
    }

    pub fn env_scalar(&self, vars: &[C64], params: &Params) -> Vec<C64> {
        let mut env = vars.to_vec();
        env.extend(self.params.iter().map(|&i| c(params.values[i])));
        env
    }
}

/// `Σ coef(vars) · M` with constant matrices.
#[derive(Debug, Clone)]
pub struct CTerms(pub Vec<(Expr, CMat)>);

impl CTerms {
    pub fn add_into(&self, env: &[Jet], space: &Arc<JetSpace>, order: usize, out: &mut MatJet) -> Result<(), EvalError> {
        for (e, m) in &self.0 {
            out.add_term(m, &e.eval(env, space, order)?);
        }
        Ok(())
    }

    pub fn eval_jet(&self, env: &[Jet], d: usize, space: &Arc<JetSpace>, order: usize) -> Result<MatJet, EvalError> {
        let mut out = MatJet::zero(d);
        self.add_into(env, space, order, &mut out)?;
        Ok(out)
    }

    pub fn eval_scalar(&self, env: &[C64], d: usize) -> Result<CMat, EvalError> {
        let mut out = CMat::zeros(d, d);
        for (e, m) in &self.0 {
            out += m * e.eval_scalar(env)?;
        }
        Ok(out)
    }
}

/// A first-order operator with expression coefficients over a scope whose
/// first `nvars` symbols are the differentiation variables.
#[derive(Debug, Clone)]
pub struct COp {
    pub derivs: Vec<(usize, CTerms)>,
    pub pot: Option<CTerms>,
}

impl COp {
    /// Operator at a point; scope variable `k` is jet variable `offset + k`.
    pub fn at(&self, env: &[Jet], offset: usize, d: usize, space: &Arc<JetSpace>, order: usize) -> Result<OpAtPoint, EvalError> {
        let mut op = OpAtPoint::zero(space.nvars(), d);
        for (v, t) in &self.derivs {
            t.add_into(env, space, order, &mut op.deriv[offset + *v])?;
        }
        if let Some(p) = &self.pot {
            p.add_into(env, space, order, &mut op.pot)?;
        }
        Ok(op)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameSource {
    Declared,
    Numeric,
}

#[derive(Debug, Clone)]
pub struct DeclaredFields {
    /// `[A][coord]`
    pub xi: Vec<Vec<Option<Expr>>>,
    pub eta: Vec<Vec<Option<Expr>>>,
}

#[derive(Debug, Clone)]
pub struct ClosedForms {
    pub metric: Option<Vec<Expr>>,
    pub spin_connection: Option<CTerms>,
    pub dirac: Option<COp>,
    pub symmetry: Vec<(usize, COp)>,
    pub identities: Vec<(String, String, CTerms, CTerms)>,
}

#[derive(Debug, Clone)]
pub struct Casimir {
    pub name: String,
    pub anchor: String,
    pub poly: DualPolynomial,
}

#[derive(Debug, Clone)]
pub struct LambdaModel {
    pub vars: Vec<String>,
    pub scope: Scope,
    /// One scalar operator per basis element.
    pub ops: Vec<COp>,
    pub section: Vec<C64>,
    pub section_params: Vec<String>,
    /// `(casimir index, expected value)`
    pub casimir_values: Vec<(usize, C64)>,
    pub anchor: String,
}

#[derive(Debug, Clone)]
pub struct CompiledOde {
    pub var: String,
    pub scope: Scope,
    pub matrix: CTerms,
    pub start: f64,
    pub initial: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct SymmetryPolynomial {
    pub id: String,
    pub anchor: String,
    pub poly: OperatorPolynomial,
    pub relation: Relation,
    pub variants: Vec<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone)]
pub struct IdentityCheck {
    pub name: String,
    pub anchor: String,
    pub poly: DualPolynomial,
    pub expect: IdentityExpectation,
}

/// A compiled model at fixed parameter values.
#[derive(Debug, Clone)]
pub struct Model {
    pub file: ModelFile,
    pub params: Params,
    pub alg: LieAlgebra,
    pub split: SubalgebraSplit,
    pub form: BilinearForm,
    pub coord_names: Vec<String>,
    pub coord_labels: Vec<usize>,
    /// Number of coordinates on `M` (they come first in the chart).
    pub nx: usize,
    pub rep: Option<MatrixRep>,
    pub group: Option<Arc<GroupChart>>,
    pub x_scope: Scope,
    pub declared: Option<DeclaredFields>,
    pub gammas: GammaSet,
    pub gammas_pinned: bool,
    pub lambda: Vec<CMat>,
    pub gamma_a: Vec<CMat>,
    pub gamma_total: CMat,
    pub christoffel_alg: Vec<f64>,
    pub named: BTreeMap<String, CMat>,
    pub closed: ClosedForms,
    pub casimirs: Vec<Casimir>,
    pub polarization: Option<(Vec<f64>, PolarizationSpec)>,
    pub lambda_rep: Option<LambdaModel>,
    pub identities: Vec<IdentityCheck>,
    pub sym_polys: Vec<SymmetryPolynomial>,
    pub odes: BTreeMap<String, CompiledOde>,
    pub hbar: f64,
}

fn label_index(labels: &[String], l: &str, path: &str) -> Result<usize, ModelError> {
    labels.iter().position(|x| x == l).ok_or_else(|| ModelError::schema(path, format!("unknown basis label `{l}`")))
}

impl Model {
    pub fn load(path: &Path) -> Result<Model, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Model::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Model, ModelError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        Model::compile(file, &BTreeMap::new())
    }

    /// Recompile with some parameters replaced.
    pub fn with_params(&self, overrides: &BTreeMap<String, f64>) -> Result<Model, ModelError> {
        let mut merged = self.params.to_map();
        for (k, v) in overrides {
            merged.insert(k.clone(), *v);
        }
        let mut file = self.file.clone();
        file.parameters = merged;
        Model::compile(file, &BTreeMap::new())
    }

    pub fn compile(file: ModelFile, overrides: &BTreeMap<String, f64>) -> Result<Model, ModelError> {
        let mut pmap = file.parameters.clone();
        for (k, v) in overrides {
            if !pmap.contains_key(k) {
                return Err(ModelError::schema("parameters", format!("override of undeclared parameter `{k}`")));
            }
            pmap.insert(k.clone(), *v);
        }
        let params = Params::from_map(&pmap);
        let hbar = params.get("hbar").unwrap_or(1.0);

        // algebra
        let labels = file.algebra.labels.clone();
        let uniq: BTreeSet<_> = labels.iter().collect();
        if uniq.len() != labels.len() || labels.is_empty() {
            return Err(ModelError::schema("algebra.labels", "labels must be unique and non-empty"));
        }
        let dim = labels.len();
        let mut cflat = vec![0.0; dim * dim * dim];
        let mut given = vec![false; dim * dim * dim];
        for (n, (a, b, k, v)) in file.algebra.brackets.iter().enumerate() {
            let path = format!("algebra.brackets[{n}]");
            let (ia, ib, ik) = (label_index(&labels, a, &path)?, label_index(&labels, b, &path)?, label_index(&labels, k, &path)?);
            let v = params.real(v, &path)?;
            if ia == ib && v != 0.0 {
                return Err(ModelError::schema(path, "structure constants are not antisymmetric: [e_A, e_A] ≠ 0"));
            }
            let idx = (ia * dim + ib) * dim + ik;
            let rev = (ib * dim + ia) * dim + ik;
            if given[rev] && (cflat[rev] + v).abs() > 1e-12 {
                return Err(ModelError::schema(path, format!("structure constants are not antisymmetric for [{a}, {b}]")));
            }
            if given[idx] && (cflat[idx] - v).abs() > 1e-12 {
                return Err(ModelError::schema(path, "conflicting duplicate bracket"));
            }
            given[idx] = true;
            given[rev] = true;
            cflat[idx] = v;
            cflat[rev] = -v;
        }
        let alg = LieAlgebra::new(labels.clone(), cflat);

        // split
        let mut h = Vec::new();
        for (n, l) in file.subalgebra.h.iter().enumerate() {
            h.push(label_index(&labels, l, &format!("subalgebra.h[{n}]"))?);
        }
        h.sort_unstable();
        h.dedup();
        let split = SubalgebraSplit::new(dim, h);
        let n = split.m.len();
        if n == 0 {
            return Err(ModelError::schema("subalgebra.h", "the complement 𝔪 is empty"));
        }

        // bilinear form
        let read_sq = |rows: &Vec<Vec<Scalar>>, path: &str| -> Result<RMat, ModelError> {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(ModelError::schema(path, format!("expected a {n}×{n} matrix over 𝔪")));
            }
            let mut m = RMat::zeros(n, n);
            for (i, r) in rows.iter().enumerate() {
                for (j, v) in r.iter().enumerate() {
                    m[(i, j)] = params.real(v, &format!("{path}[{i}][{j}]"))?;
                }
            }
            Ok(m)
        };
        let form = match (&file.bilinear_form.upper, &file.bilinear_form.lower) {
            (Some(u), None) => BilinearForm::from_upper(read_sq(u, "bilinear_form.upper")?),
            (None, Some(l)) => BilinearForm::from_lower(read_sq(l, "bilinear_form.lower")?),
            _ => return Err(ModelError::schema("bilinear_form", "give exactly one of `upper` or `lower`")),
        }
        .ok_or_else(|| ModelError::schema("bilinear_form", "form is degenerate"))?;
        if form.symmetry_residual() > 1e-12 {
            return Err(ModelError::schema("bilinear_form", "form is not symmetric"));
        }

        // chart
        let coords = &file.chart.coordinates;
        if coords.len() != dim {
            return Err(ModelError::schema("chart.coordinates", format!("expected {dim} coordinates")));
        }
        let mut coord_names = Vec::new();
        let mut coord_labels = Vec::new();
        for (k, (name, l)) in coords.iter().enumerate() {
            let path = format!("chart.coordinates[{k}]");
            if coord_names.contains(name) {
                return Err(ModelError::schema(path, format!("duplicate coordinate `{name}`")));
            }
            if name == "i" || name == "pi" {
                return Err(ModelError::schema(path, "reserved name"));
            }
            coord_names.push(name.clone());
            coord_labels.push(label_index(&labels, l, &path)?);
        }
        let mut seen = coord_labels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != dim {
            return Err(ModelError::schema("chart.coordinates", "each basis element must appear exactly once"));
        }
        let nx = n;
        if coord_labels[..nx].iter().any(|l| split.h.contains(l)) {
            return Err(ModelError::schema("chart.coordinates", "coordinates of M must precede the isotropy coordinates"));
        }
        let x_names: Vec<String> = coord_names[..nx].to_vec();
        let x_scope = Scope::new(&x_names, &params);

        // matrix representation
        let rep = match &file.matrix_rep {
            Some(mr) => {
                let mut mats = Vec::with_capacity(dim);
                let mut size = None;
                for l in &labels {
                    let path = format!("matrix_rep.matrices.{l}");
                    let rows = mr.matrices.get(l).ok_or_else(|| ModelError::schema(&path, "missing matrix"))?;
                    let sz = rows.len();
                    if *size.get_or_insert(sz) != sz || rows.iter().any(|r| r.len() != sz) || sz == 0 {
                        return Err(ModelError::schema(&path, "matrices must be square and of equal size"));
                    }
                    let mut m = RMat::zeros(sz, sz);
                    for (i, r) in rows.iter().enumerate() {
                        for (j, v) in r.iter().enumerate() {
                            m[(i, j)] = params.real(v, &format!("{path}[{i}][{j}]"))?;
                        }
                    }
                    mats.push(m);
                }
                if mr.matrices.len() != dim {
                    return Err(ModelError::schema("matrix_rep.matrices", "unexpected extra labels"));
                }
                let rep = MatrixRep::new(mats);
                if rep.homomorphism_residual(&alg) > 1e-10 {
                    return Err(ModelError::schema("matrix_rep", "matrices do not satisfy the declared brackets"));
                }
                if !rep.is_faithful() {
                    return Err(ModelError::schema("matrix_rep", "representation is not faithful"));
                }
                Some(rep)
            }
            None => Some(MatrixRep::adjoint(&alg)).filter(|r| r.is_faithful()),
        };
        let group = rep.as_ref().map(|r| Arc::new(GroupChart::new(r.clone(), ChartSpec { names: coord_names.clone(), basis: coord_labels.clone() })));

        // declared fields
        let declared = match &file.fields {
            Some(f) => {
                let read = |src: &BTreeMap<String, BTreeMap<String, String>>, which: &str| -> Result<Vec<Vec<Option<Expr>>>, ModelError> {
                    let mut out = vec![vec![None; dim]; dim];
                    for (l, comps) in src {
                        let a = label_index(&labels, l, &format!("fields.{which}"))?;
                        for (coord, text) in comps {
                            let path = format!("fields.{which}.{l}.{coord}");
                            let i = coord_names.iter().position(|c| c == coord).ok_or_else(|| ModelError::schema(&path, "unknown coordinate"))?;
                            out[a][i] = Some(x_scope.parse(&path, text)?);
                        }
                    }
                    Ok(out)
                };
                let xi = read(&f.xi, "xi")?;
                let eta = read(&f.eta, "eta")?;
                if f.eta.is_empty() || f.xi.is_empty() {
                    return Err(ModelError::schema("fields", "both `xi` and `eta` are required when fields are declared"));
                }
                Some(DeclaredFields { xi, eta })
            }
            None => None,
        };
        if declared.is_none() && group.is_none() {
            return Err(ModelError::schema("fields", "neither declared fields nor a faithful matrix representation available"));
        }

        // gammas
        let (gammas, gammas_pinned) = match file.gammas.as_ref().and_then(|g| g.matrices.as_ref()) {
            Some(ms) => {
                let mut ups = Vec::new();
                for (a, rows) in ms.iter().enumerate() {
                    let path = format!("gammas.matrices[{a}]");
                    let d = rows.len();
                    if d == 0 || rows.iter().any(|r| r.len() != d) {
                        return Err(ModelError::schema(path, "gamma matrices must be square"));
                    }
                    let mut m = CMat::zeros(d, d);
                    for (i, r) in rows.iter().enumerate() {
                        for (j, v) in r.iter().enumerate() {
                            m[(i, j)] = params.scalar(v)?;
                        }
                    }
                    ups.push(m);
                }
                (GammaSet::from_upper(ups, &form).map_err(|e| ModelError::schema("gammas.matrices", e.to_string()))?, true)
            }
            None => (clifford::build_gammas(&form).map_err(|e| ModelError::schema("bilinear_form", e.to_string()))?, false),
        };
        let d = gammas.spinor_dim();
        let lambda = clifford::spin_generators(&alg, &split, &form, &gammas);
        let christoffel_alg = geometry::christoffel_algebraic(&alg, &split, &form);
        let gamma_a = clifford::spin_connection_constants(&christoffel_alg, &gammas);
        let gamma_total = clifford::contract_upper(&gammas, &gamma_a);

        let mut named = BTreeMap::new();
        named.insert("E".to_string(), CMat::identity(d, d));
        named.insert("i".to_string(), CMat::identity(d, d) * I);
        for a in 0..n {
            named.insert(format!("g{}", a + 1), gammas.upper[a].clone());
            named.insert(format!("glow{}", a + 1), gammas.lower[a].clone());
        }
        for (k, &alpha) in split.h.iter().enumerate() {
            named.insert(format!("Lambda_{}", labels[alpha]), lambda[k].clone());
        }
        named.insert("Gamma".to_string(), gamma_total.clone());

        let mut model = Model {
            file: file.clone(),
            params,
            alg,
            split,
            form,
            coord_names,
            coord_labels,
            nx,
            rep,
            group,
            x_scope,
            declared,
            gammas,
            gammas_pinned,
            lambda,
            gamma_a,
            gamma_total,
            christoffel_alg,
            named,
            closed: ClosedForms { metric: None, spin_connection: None, dirac: None, symmetry: Vec::new(), identities: Vec::new() },
            casimirs: Vec::new(),
            polarization: None,
            lambda_rep: None,
            identities: Vec::new(),
            sym_polys: Vec::new(),
            odes: BTreeMap::new(),
            hbar,
        };
        model.compile_rest(&file)?;
        Ok(model)
    }

    fn compile_rest(&mut self, file: &ModelFile) -> Result<(), ModelError> {
        let labels = self.alg.labels().to_vec();
        let nx = self.nx;

        // closed forms over x
        let cf = &file.closed_forms;
        if let Some(rows) = &cf.metric {
            if rows.len() != nx || rows.iter().any(|r| r.len() != nx) {
                return Err(ModelError::schema("closed_forms.metric", format!("expected a {nx}×{nx} matrix")));
            }
            let mut out = Vec::new();
            for (i, r) in rows.iter().enumerate() {
                for (j, t) in r.iter().enumerate() {
                    out.push(self.x_scope.parse(&format!("closed_forms.metric[{i}][{j}]"), t)?);
                }
            }
            self.closed.metric = Some(out);
        }
        let xs = self.x_scope.clone();
        if let Some(t) = &cf.spin_connection {
            self.closed.spin_connection = Some(self.terms(t, &xs, "closed_forms.spin_connection")?);
        }
        if let Some(op) = &cf.dirac {
            self.closed.dirac = Some(self.op(op, &xs, "closed_forms.dirac")?);
        }
        for (l, op) in &cf.symmetry {
            let a = label_index(&labels, l, "closed_forms.symmetry")?;
            let cop = self.op(op, &xs, &format!("closed_forms.symmetry.{l}"))?;
            self.closed.symmetry.push((a, cop));
        }
        let empty = Scope::new(&[], &self.params);
        for (k, mi) in cf.matrix_identities.iter().enumerate() {
            let lhs = self.terms(&mi.lhs, &empty, &format!("closed_forms.matrix_identities[{k}].lhs"))?;
            let rhs = self.terms(&mi.rhs, &empty, &format!("closed_forms.matrix_identities[{k}].rhs"))?;
            self.closed.identities.push((mi.id.clone(), mi.anchor.clone(), lhs, rhs));
        }

        // polynomials on the dual
        for (k, cs) in file.casimirs.iter().enumerate() {
            let poly = self.dual_poly(&cs.terms, &format!("casimirs[{k}]"))?;
            self.casimirs.push(Casimir { name: cs.name.clone(), anchor: cs.anchor.clone(), poly });
        }
        for (k, idn) in file.identities.iter().enumerate() {
            let poly = self.dual_poly(&idn.terms, &format!("identities[{k}]"))?;
            self.identities.push(IdentityCheck { name: idn.name.clone(), anchor: idn.anchor.clone(), poly, expect: idn.expect });
        }
        if let Some(p) = &file.polarization {
            let dim = self.alg.dim();
            if p.lambda.len() != dim {
                return Err(ModelError::schema("polarization.lambda", format!("expected {dim} components")));
            }
            let lam = p.lambda.iter().enumerate().map(|(i, s)| self.params.real(s, &format!("polarization.lambda[{i}]"))).collect::<Result<Vec<_>, _>>()?;
            let mut basis = Vec::new();
            for (i, row) in p.basis.iter().enumerate() {
                if row.len() != dim {
                    return Err(ModelError::schema(format!("polarization.basis[{i}]"), format!("expected {dim} components")));
                }
                basis.push(row.iter().enumerate().map(|(j, s)| self.params.real(s, &format!("polarization.basis[{i}][{j}]"))).collect::<Result<Vec<_>, _>>()?);
            }
            self.polarization = Some((lam, PolarizationSpec { basis }));
        }
        for (k, sp) in file.symmetry_polynomials.iter().enumerate() {
            let path = format!("symmetry_polynomials[{k}]");
            let mut terms = Vec::new();
            for (coef, word) in &sp.terms {
                let w = word.iter().map(|l| label_index(&labels, l, &path)).collect::<Result<Vec<_>, _>>()?;
                terms.push((self.params.scalar(coef)?, w));
            }
            if let Relation::EqualsDirac { factor } = &sp.relation {
                self.params.scalar(factor)?;
            }
            for v in &sp.variants {
                for key in v.keys() {
                    if self.params.get(key).is_none() {
                        return Err(ModelError::schema(&path, format!("variant sets undeclared parameter `{key}`")));
                    }
                }
            }
            self.sym_polys.push(SymmetryPolynomial {
                id: sp.id.clone(),
                anchor: sp.anchor.clone(),
                poly: OperatorPolynomial { terms },
                relation: sp.relation.clone(),
                variants: sp.variants.clone(),
            });
        }

        // ODEs
        if let Some(sol) = &file.solutions {
            for (name, ode) in &sol.odes {
                let path = format!("solutions.odes.{name}");
                let scope = Scope::new(std::slice::from_ref(&ode.var), &self.params);
                let matrix = self.terms(&ode.matrix, &scope, &format!("{path}.matrix"))?;
                let initial = ode.initial.iter().map(|s| self.params.scalar(s)).collect::<Result<Vec<_>, _>>()?;
                if initial.len() != self.gammas.spinor_dim() {
                    return Err(ModelError::schema(format!("{path}.initial"), "length must equal the spinor dimension"));
                }
                self.odes.insert(name.clone(), CompiledOde { var: ode.var.clone(), scope, matrix, start: ode.start, initial });
            }
            for (name, fl) in &sol.flows {
                label_index(&labels, &fl.generator, &format!("solutions.flows.{name}.generator"))?;
                if fl.args.len() != file.lambda_rep.as_ref().map_or(0, |l| l.vars.len()) {
                    return Err(ModelError::schema(format!("solutions.flows.{name}.args"), "one argument per λ-variable"));
                }
            }
        }

        // λ-representation
        if let Some(lr) = &file.lambda_rep {
            let scope = Scope::new(&lr.vars, &self.params);
            let mut ops = Vec::new();
            for l in &labels {
                let path = format!("lambda_rep.ops.{l}");
                let spec = lr.ops.get(l).ok_or_else(|| ModelError::schema(&path, "missing operator"))?;
                ops.push(self.scalar_op(spec, &scope, &path)?);
            }
            if lr.section.len() != self.alg.dim() {
                return Err(ModelError::schema("lambda_rep.section", "one component per basis element"));
            }
            let section = lr.section.iter().map(|s| self.params.scalar(s)).collect::<Result<Vec<_>, _>>()?;
            for p in &lr.section_params {
                if self.params.get(p).is_none() {
                    return Err(ModelError::schema("lambda_rep.section_params", format!("undeclared parameter `{p}`")));
                }
            }
            let mut casimir_values = Vec::new();
            for (name, text) in &lr.casimir_values {
                let k = self.casimirs.iter().position(|c| &c.name == name).ok_or_else(|| ModelError::schema("lambda_rep.casimir_values", format!("unknown Casimir `{name}`")))?;
                casimir_values.push((k, self.params.eval(text)?));
            }
            self.lambda_rep = Some(LambdaModel {
                vars: lr.vars.clone(),
                scope,
                ops,
                section,
                section_params: lr.section_params.clone(),
                casimir_values,
                anchor: lr.anchor.clone(),
            });
        }
        Ok(())
    }

    fn dual_poly(&self, terms: &[(Scalar, Vec<String>)], path: &str) -> Result<DualPolynomial, ModelError> {
        let labels = self.alg.labels();
        let mut out = Vec::new();
        for (coef, word) in terms {
            let w = word.iter().map(|l| label_index(labels, l, path)).collect::<Result<Vec<_>, _>>()?;
            out.push((self.params.real(coef, path)?, w));
        }
        Ok(DualPolynomial::new(out))
    }

    /// Product of named matrices.
    pub fn named_product(&self, names: &[String], path: &str) -> Result<CMat, ModelError> {
        let d = self.gammas.spinor_dim();
        let mut m = CMat::identity(d, d);
        for nm in names {
            let f = self.named.get(nm).ok_or_else(|| ModelError::schema(path, format!("unknown matrix `{nm}`")))?;
            m *= f;
        }
        Ok(m)
    }

    pub fn terms(&self, t: &TermsSpec, scope: &Scope, path: &str) -> Result<CTerms, ModelError> {
        let d = self.gammas.spinor_dim();
        let expr = |s: &Scalar| -> Result<Expr, ModelError> {
            match s {
                Scalar::Num(v) => Ok(Expr::constant(c(*v))),
                Scalar::Pair([re, im]) => Ok(Expr::constant(C64::new(*re, *im))),
                Scalar::Text(t) => scope.parse(path, t),
            }
        };
        match t {
            TermsSpec::Scalar(s) => Ok(CTerms(vec![(expr(s)?, CMat::identity(d, d))])),
            TermsSpec::Terms(list) => {
                let mut out = Vec::new();
                for (coef, names) in list {
                    out.push((expr(coef)?, self.named_product(names, path)?));
                }
                Ok(CTerms(out))
            }
        }
    }

    pub fn op(&self, spec: &OpSpec, scope: &Scope, path: &str) -> Result<COp, ModelError> {
        let mut derivs = Vec::new();
        for (v, t) in &spec.derivatives {
            let i = (0..scope.nvars()).find(|&k| scope.symbols.name(k) == v).ok_or_else(|| ModelError::schema(format!("{path}.derivatives"), format!("unknown variable `{v}`")))?;
            derivs.push((i, self.terms(t, scope, &format!("{path}.derivatives.{v}"))?));
        }
        let pot = spec.potential.as_ref().map(|t| self.terms(t, scope, &format!("{path}.potential"))).transpose()?;
        Ok(COp { derivs, pot })
    }

    /// A scalar operator (`d = 1`): matrix names are not allowed.
    fn scalar_op(&self, spec: &OpSpec, scope: &Scope, path: &str) -> Result<COp, ModelError> {
        let one = CMat::identity(1, 1);
        let conv = |t: &TermsSpec, p: &str| -> Result<CTerms, ModelError> {
            match t {
                TermsSpec::Scalar(Scalar::Text(s)) => Ok(CTerms(vec![(scope.parse(p, s)?, one.clone())])),
                TermsSpec::Scalar(Scalar::Num(v)) => Ok(CTerms(vec![(Expr::constant(c(*v)), one.clone())])),
                TermsSpec::Scalar(Scalar::Pair([re, im])) => Ok(CTerms(vec![(Expr::constant(C64::new(*re, *im)), one.clone())])),
                TermsSpec::Terms(_) => Err(ModelError::schema(p, "λ-operators are scalar")),
            }
        };
        let mut derivs = Vec::new();
        for (v, t) in &spec.derivatives {
            let i = (0..scope.nvars()).find(|&k| scope.symbols.name(k) == v).ok_or_else(|| ModelError::schema(format!("{path}.derivatives"), format!("unknown variable `{v}`")))?;
            derivs.push((i, conv(t, &format!("{path}.derivatives.{v}"))?));
        }
        let pot = spec.potential.as_ref().map(|t| conv(t, &format!("{path}.potential"))).transpose()?;
        Ok(COp { derivs, pot })
    }

    pub fn dim(&self) -> usize {
        self.alg.dim()
    }

    pub fn spinor_dim(&self) -> usize {
        self.gammas.spinor_dim()
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params.get(name).unwrap_or_else(|| panic!("parameter `{name}` not declared"))
    }

    pub fn has_declared_fields(&self) -> bool {
        self.declared.is_some()
    }

    pub fn preferred_source(&self) -> FrameSource {
        if self.declared.is_some() {
            FrameSource::Declared
        } else {
            FrameSource::Numeric
        }
    }

    /// Jet space over the coordinates of `M`.
    pub fn x_space(&self, order: usize) -> Arc<JetSpace> {
        JetSpace::get(self.nx, order)
    }

    /// Frame jets at `(x, e_H)` in the coordinates of `M`.
    pub fn frames(&self, x: &[f64], order: usize, source: FrameSource) -> Result<FrameJets, ModelError> {
        self.frames_in(x, &self.x_space(order), order, source)
    }

    /// As [`Model::frames`] in a jet space whose first `nx` variables are
    /// the coordinates of `M`.
    pub fn frames_in(&self, x: &[f64], sp: &Arc<JetSpace>, order: usize, source: FrameSource) -> Result<FrameJets, ModelError> {
        let sp = sp.clone();
        let dim = self.dim();
        match source {
            FrameSource::Declared => {
                let dec = self.declared.as_ref().ok_or_else(|| ModelError::Eval("model declares no frame fields".into()))?;
                let vars: Vec<Jet> = x.iter().enumerate().map(|(i, &v)| Jet::var(&sp, order, i, c(v))).collect();
                let env = self.x_scope.env(&vars, &self.params, &sp, order);
                let build = |src: &Vec<Vec<Option<Expr>>>| -> Result<JetMat, ModelError> {
                    let mut m = JetMat::zeros(&sp, order, dim, dim);
                    for (a, row) in src.iter().enumerate() {
                        for (i, e) in row.iter().enumerate() {
                            if let Some(e) = e {
                                m.set(i, a, e.eval(&env, &sp, order)?);
                            }
                        }
                    }
                    Ok(m)
                };
                let xi = build(&dec.xi)?;
                let eta = build(&dec.eta)?;
                let sigma = eta.inverse()?;
                Ok(FrameJets { xi, eta, sigma })
            }
            FrameSource::Numeric => {
                let g = self.group.as_ref().ok_or_else(|| ModelError::Eval("model has no matrix representation".into()))?;
                let mut base = x.to_vec();
                base.resize(dim, 0.0);
                let seed: Vec<Option<usize>> = (0..dim).map(|k| if k < self.nx { Some(k) } else { None }).collect();
                Ok(g.frame_jets(&base, &seed, &sp, order)?)
            }
        }
    }

    /// Numeric frames with every chart coordinate (including `h`) seeded.
    pub fn frames_full(&self, x: &[f64], order: usize) -> Result<FrameJets, ModelError> {
        let g = self.group.as_ref().ok_or_else(|| ModelError::Eval("model has no matrix representation".into()))?;
        let dim = self.dim();
        let sp = JetSpace::get(dim, order);
        let mut base = x.to_vec();
        base.resize(dim, 0.0);
        let seed: Vec<Option<usize>> = (0..dim).map(Some).collect();
        Ok(g.frame_jets(&base, &seed, &sp, order)?)
    }

    /// `D_M = iħγ̂^a[η_a^i ∂_i + Γ_a + η_a^α Λ_α]`.
    pub fn dirac_at(&self, fr: &FrameJets) -> OpAtPoint {
        let d = self.spinor_dim();
        let sp = fr.eta.space().clone();
        let order = fr.eta.order();
        let ih = I * self.hbar;
        let mut op = OpAtPoint::zero(sp.nvars(), d);
        for (ai, &a) in self.split.m.iter().enumerate() {
            let ga = &self.gammas.upper[ai] * ih;
            for i in 0..self.nx {
                op.deriv[i].add_term(&ga, fr.eta.get(i, a));
            }
            for (k, _) in self.split.h.iter().enumerate() {
                let row = self.h_row(k);
                op.pot.add_term(&(&ga * &self.lambda[k]), fr.eta.get(row, a));
            }
        }
        op.pot.add_term(&(&self.gamma_total * ih), &Jet::constant(&sp, order, ONE));
        op
    }

    /// `X̃_A = ξ_A^i ∂_i + ξ_A^α Λ_α`.
    pub fn symmetry_at(&self, fr: &FrameJets, a: usize) -> OpAtPoint {
        let d = self.spinor_dim();
        let mut op = OpAtPoint::zero(fr.xi.space().nvars(), d);
        for i in 0..self.nx {
            let f = fr.xi.get(i, a);
            if f.max_abs() != 0.0 {
                op.deriv[i] = MatJet::scalar(d, f);
            }
        }
        for k in 0..self.split.h.len() {
            op.pot.add_term(&self.lambda[k], fr.xi.get(self.h_row(k), a));
        }
        op
    }

    /// Row index in the frame matrices of the isotropy coordinate `k`.
    pub fn h_row(&self, k: usize) -> usize {
        let alpha = self.split.h[k];
        self.coord_labels.iter().position(|&l| l == alpha).expect("isotropy coordinate")
    }

    /// `Γ(x)` from the frame values.
    pub fn spin_connection_at(&self, fr: &FrameJets) -> CMat {
        let eta_h: Vec<Vec<f64>> = self
            .split
            .m
            .iter()
            .map(|&a| (0..self.split.h.len()).map(|k| fr.eta.get(self.h_row(k), a).value().re).collect())
            .collect();
        clifford::spin_connection_at(&self.gammas, &self.gamma_a, &self.lambda, &eta_h)
    }

    /// Environment for expressions over the coordinates of `M`.
    pub fn x_env(&self, x: &[f64], sp: &Arc<JetSpace>, order: usize) -> Vec<Jet> {
        let vars: Vec<Jet> = x.iter().enumerate().map(|(i, &v)| Jet::var(sp, order, i, c(v))).collect();
        self.x_scope.env(&vars, &self.params, sp, order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
        "name": "plane",
        "parameters": {"hbar": 1.0, "k": 2.0},
        "algebra": {"labels": ["p1", "p2"], "brackets": []},
        "subalgebra": {"h": []},
        "bilinear_form": {"upper": [[1, 0], [0, 1]]},
        "chart": {"coordinates": [["x", "p1"], ["y", "p2"]]},
        "fields": {"xi": {"p1": {"x": "1"}, "p2": {"y": "1"}}, "eta": {"p1": {"x": "-1"}, "p2": {"y": "-1"}}}
    }"#;

    #[test]
    fn tiny_model_compiles_and_is_flat() {
        let m = Model::from_json(TINY).unwrap();
        assert_eq!(m.nx, 2);
        assert_eq!(m.spinor_dim(), 2);
        let fr = m.frames(&[0.1, 0.2], 2, FrameSource::Declared).unwrap();
        let metric = geometry::metric_jets(&fr, &m.split, &m.form, 2);
        assert!((metric.lower.get(0, 0).value() - ONE).norm() < 1e-15);
        // no representation given and the algebra has a centre
        assert!(m.group.is_none());
        let d = m.dirac_at(&fr);
        assert!(d.pot.max_abs() == 0.0);
    }

    #[test]
    fn non_antisymmetric_constants_rejected() {
        let bad = TINY.replace(r#""brackets": []"#, r#""brackets": [["p1","p2","p1",1], ["p2","p1","p1",1]]"#);
        match Model::from_json(&bad) {
            Err(ModelError::Schema { path, .. }) => assert_eq!(path, "algebra.brackets[1]"),
            other => panic!("unexpected {other:?}"),
        }
        let diag = TINY.replace(r#""brackets": []"#, r#""brackets": [["p1","p1","p2",1]]"#);
        assert!(matches!(Model::from_json(&diag), Err(ModelError::Schema { .. })));
    }

    #[test]
    fn unknown_identifier_reports_path() {
        let bad = TINY.replace(r#""x": "-1""#, r#""x": "-zz""#);
        match Model::from_json(&bad) {
            Err(ModelError::Schema { path, message }) => {
                assert_eq!(path, "fields.eta.p1.x");
                assert!(message.contains("zz"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parameter_overrides_recompile() {
        let m = Model::from_json(TINY).unwrap();
        let mut o = BTreeMap::new();
        o.insert("k".to_string(), 5.0);
        let m2 = m.with_params(&o).unwrap();
        assert_eq!(m2.param("k"), 5.0);
        assert_eq!(m2.params.eval("k^2").unwrap(), c(25.0));
    }
}
