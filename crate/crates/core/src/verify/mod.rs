//! Verification suites: every check yields a residual, a tolerance and the
//! worst sample, collected into a deterministic report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::model::{Model, ModelError};
use crate::sampling::{stream_rng, SampleBox};

mod algebra;
mod clifford;
mod dirac;
mod geometry;
mod lambda;
mod solutions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Algebra,
    Geometry,
    Clifford,
    Dirac,
    Lambda,
    Solutions,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Algebra, Suite::Geometry, Suite::Clifford, Suite::Dirac, Suite::Lambda, Suite::Solutions];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Algebra => "algebra",
            Suite::Geometry => "geometry",
            Suite::Clifford => "clifford",
            Suite::Dirac => "dirac",
            Suite::Lambda => "lambda",
            Suite::Solutions => "solutions",
        }
    }

    pub fn parse(s: &str) -> Option<Vec<Suite>> {
        if s == "all" {
            return Some(Suite::ALL.to_vec());
        }
        Suite::ALL.iter().copied().find(|x| x.name() == s).map(|x| vec![x])
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub seed: u64,
    /// Overrides the model's sample count per check.
    pub points: Option<usize>,
    pub tolerance_scale: f64,
    /// Overrides the model's jet order for the polynomial checks.
    pub jet_order: Option<usize>,
    pub suites: Vec<Suite>,
    /// Record wall times; off gives byte-identical reports.
    pub timings: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { seed: 7, points: None, tolerance_scale: 1.0, jet_order: None, suites: Suite::ALL.to_vec(), timings: true }
    }
}

/// How the residual is compared with the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// pass iff residual < tolerance
    Below,
    /// pass iff residual > tolerance (non-degeneracy and negative controls)
    Above,
    /// reported only
    Info,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub id: String,
    pub anchor: String,
    pub residual: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
    pub worst_point: Option<Vec<f64>>,
    pub samples: usize,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub detail: Value,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub model: String,
    pub seed: u64,
    pub suites: Vec<Suite>,
    pub tolerance_scale: f64,
    pub checks: Vec<Check>,
    pub passed: usize,
    pub failed: usize,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }

    pub fn find(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }

    /// Checks whose id starts with `prefix`.
    pub fn matching<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Check> + 'a {
        self.checks.iter().filter(move |c| c.id.starts_with(prefix))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Result of one check before tolerances are applied.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub residual: f64,
    pub worst_point: Option<Vec<f64>>,
    pub samples: usize,
    pub detail: Value,
}

impl Outcome {
    pub fn scalar(residual: f64) -> Self {
        Outcome { residual, worst_point: None, samples: 1, detail: Value::Null }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    /// Worst sample: largest residual for `Below`/`Info`, smallest for `Above`.
    /// NaN always wins.
    pub fn reduce(cmp: Comparison, samples: Vec<(f64, Vec<f64>)>) -> Self {
        let n = samples.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for (r, p) in samples {
            let replace = match &best {
                None => true,
                Some((b, _)) if b.is_nan() => false,
                Some(_) if r.is_nan() => true,
                Some((b, _)) => match cmp {
                    Comparison::Above => r < *b,
                    _ => r > *b,
                },
            };
            if replace {
                best = Some((r, p));
            }
        }
        match best {
            Some((r, p)) => Outcome { residual: r, worst_point: Some(p), samples: n, detail: Value::Null },
            None => Outcome { residual: f64::NAN, worst_point: None, samples: 0, detail: Value::Null },
        }
    }
}

/// Map sample results to `(residual, point)`; evaluation failures become NaN
/// and the first message is kept; model errors propagate.
pub(crate) fn collect(results: Vec<(Result<f64, ModelError>, Vec<f64>)>) -> Result<(Vec<(f64, Vec<f64>)>, Option<String>), ModelError> {
    let mut out = Vec::with_capacity(results.len());
    let mut err = None;
    for (r, p) in results {
        match r {
            Ok(v) => out.push((v, p)),
            Err(ModelError::Eval(m)) => {
                err.get_or_insert(m);
                out.push((f64::NAN, p));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((out, err))
}

const ANCHORS: &[(&str, &str)] = &[
    ("algebra.antisymmetry", "pl1"),
    ("algebra.jacobi", "pl1"),
    ("algebra.rep_homomorphism", "actR"),
    ("algebra.subalgebra_closure", "conds_AdH"),
    ("algebra.adh_invariance", "conds_AdH"),
    ("algebra.casimir", "pl1"),
    ("algebra.orbit_dim", "rg"),
    ("algebra.index", "rg"),
    ("algebra.polarization", "defp"),
    ("algebra.beta_vector", "gl1"),
    ("algebra.identity", "defG"),
    ("geometry.chart_roundtrip", "can3"),
    ("geometry.chart_product", "Mproduct"),
    ("geometry.field_fd", "defX"),
    ("geometry.frame_crosscheck", "xiX"),
    ("geometry.maurer_cartan", "CC_CC"),
    ("geometry.duality", "gij_loc"),
    ("geometry.field_commutators", "commXi"),
    ("geometry.metric_inverse", "invariant-mertic"),
    ("geometry.metric_closed_form", "ds2primer"),
    ("geometry.christoffel_oracle", "gamma_P_IJK"),
    ("geometry.torsion", "gamma_P_IJK"),
    ("geometry.metricity", "gamma_P"),
    ("geometry.killing", "killX0"),
    ("geometry.scalar_curvature", "invariant-mertic"),
    ("geometry.curvature_variance", "invariant-mertic"),
    ("clifford.anticommutator", "sys_gamma2"),
    ("clifford.lowered_anticommutator", "gamma_down"),
    ("clifford.isotropy_rep", "genH4"),
    ("clifford.comm1", "comm1"),
    ("clifford.comm2", "comm2"),
    ("clifford.traceless_lambda", "genH4"),
    ("clifford.trace_gamma_a", "sp_gamma_x"),
    ("clifford.projectivity.sysBa", "sysBa"),
    ("clifford.projectivity.sysB", "sysB"),
    ("clifford.projectivity.condLs2", "condLs2"),
    ("clifford.basis_covariance", "my_sol_gamma"),
    ("clifford.pseudospin", "sys_gamma"),
    ("clifford.identity", "genH4"),
    ("clifford.spin_connection_closed_form", "sp_gamma_x"),
    ("dirac.closed_form", "diracM"),
    ("dirac.symmetry_closed_form", "killX0"),
    ("dirac.reconstruction", "coefBB"),
    ("dirac.fd_application", "diracM"),
    ("dirac.linearity", "dirac02"),
    ("dirac.symmetry_commutes", "killX0"),
    ("dirac.symmetry_closure", "xiX"),
    ("dirac.polynomial", "kas11"),
    ("lambda.commutators", "defL0"),
    ("lambda.casimir", "tl2"),
    ("lambda.measure", "scQ"),
    ("lambda.constraint", "Dl"),
    ("lambda.reduced_dirac", "Dll3"),
    ("lambda.grid", "tl2"),
    ("solutions.ode", "sol1"),
    ("solutions.lambda_squared", "sol1"),
    ("solutions.family", "sol2"),
    ("solutions.flow", "expl"),
];

/// Anchor of a check id: model overrides first, then the built-in table,
/// longest prefix wins in each.
pub fn anchor_for(id: &str, overrides: &BTreeMap<String, String>) -> String {
    let best = |it: &mut dyn Iterator<Item = (&str, &str)>| -> Option<String> {
        it.filter(|(p, _)| id.starts_with(p)).max_by_key(|(p, _)| p.len()).map(|(_, a)| a.to_string())
    };
    best(&mut overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())))
        .or_else(|| best(&mut ANCHORS.iter().copied()))
        .unwrap_or_default()
}

/// Per-model verification context.
pub(crate) struct Ctx<'a> {
    pub model: &'a Model,
    pub opts: &'a Options,
    pub checks: Vec<Check>,
    anchor_next: Option<String>,
}

impl<'a> Ctx<'a> {
    fn new(model: &'a Model, opts: &'a Options) -> Self {
        Ctx { model, opts, checks: Vec::new(), anchor_next: None }
    }

    pub fn ver(&self) -> &crate::schema::VerificationSection {
        &self.model.file.verification
    }

    pub fn points(&self) -> usize {
        self.opts.points.unwrap_or(self.ver().points)
    }

    pub fn jet_order(&self) -> usize {
        self.opts.jet_order.unwrap_or(self.ver().jet_order)
    }

    pub fn rng(&self, label: &str) -> rand_chacha::ChaCha8Rng {
        stream_rng(self.opts.seed, &format!("{}/{label}", self.model.file.name))
    }

    /// `n` points of `M` in the sample box.
    pub fn x_points(&self, label: &str, n: usize) -> Vec<Vec<f64>> {
        let [lo, hi] = self.ver().sample_box;
        SampleBox::cube(self.model.nx, lo, hi).samples(n, &mut self.rng(label))
    }

    /// Parameter draws from `verification.draws`; the base values when none
    /// are declared.
    pub fn param_draws(&self, label: &str, n: usize) -> Vec<BTreeMap<String, f64>> {
        let draws = &self.ver().draws;
        if draws.is_empty() {
            return vec![BTreeMap::new()];
        }
        let mut rng = self.rng(label);
        (0..n).map(|_| draws.iter().map(|(k, d)| (k.clone(), crate::solutions::draw(d, &mut rng))).collect()).collect()
    }

    /// Use `anchor` (when non-empty) for the next check instead of the table.
    pub fn anchored(&mut self, anchor: &str) -> &mut Self {
        if !anchor.is_empty() {
            self.anchor_next = Some(anchor.to_string());
        }
        self
    }

    /// Run one check, timing it and applying the tolerance scale.
    pub fn check<F>(&mut self, id: impl Into<String>, tolerance: f64, cmp: Comparison, f: F) -> Result<(), ModelError>
    where
        F: FnOnce() -> Result<Outcome, ModelError>,
    {
        let id = id.into();
        let t0 = Instant::now();
        let out = match f() {
            Ok(o) => o,
            Err(ModelError::Eval(m)) => Outcome { residual: f64::NAN, worst_point: None, samples: 0, detail: serde_json::json!({ "error": m }) },
            Err(e) => return Err(e),
        };
        let wall = if self.opts.timings { (t0.elapsed().as_secs_f64() * 1e6).round() / 1e3 } else { 0.0 };
        let s = self.opts.tolerance_scale;
        let tolerance = match cmp {
            Comparison::Below => tolerance * s,
            Comparison::Above => tolerance / s,
            Comparison::Info => tolerance,
        };
        let pass = match cmp {
            Comparison::Below => out.residual < tolerance,
            Comparison::Above => out.residual > tolerance,
            Comparison::Info => !out.residual.is_nan() || out.detail.get("skipped").is_some(),
        };
        let anchor = match self.anchor_next.take() {
            Some(a) if !self.ver().anchors.keys().any(|k| id.starts_with(k.as_str())) => a,
            _ => anchor_for(&id, &self.ver().anchors),
        };
        self.checks.push(Check {
            id,
            anchor,
            residual: out.residual,
            tolerance,
            comparison: cmp,
            pass,
            worst_point: out.worst_point,
            samples: out.samples,
            detail: out.detail,
            wall_time_ms: wall,
        });
        Ok(())
    }

    /// Record an informational entry for something that does not apply.
    pub fn skip(&mut self, id: impl Into<String>, reason: &str) -> Result<(), ModelError> {
        let reason = reason.to_string();
        self.check(id, 0.0, Comparison::Info, move || Ok(Outcome { residual: 0.0, worst_point: None, samples: 0, detail: serde_json::json!({ "skipped": reason }) }))
    }
}

/// `[k=v,...]` suffix for parameter variants.
pub(crate) fn variant_suffix(v: &BTreeMap<String, f64>) -> String {
    if v.is_empty() {
        return String::new();
    }
    let parts: Vec<String> = v.iter().map(|(k, x)| format!("{k}={x}")).collect();
    format!("[{}]", parts.join(","))
}

/// Variants, or a single empty variant.
pub(crate) fn variants_or_base(v: &[BTreeMap<String, f64>]) -> Vec<BTreeMap<String, f64>> {
    if v.is_empty() {
        vec![BTreeMap::new()]
    } else {
        v.to_vec()
    }
}

/// Run the selected suites on one model.
pub fn verify_model(model: &Model, opts: &Options) -> Result<Report, ModelError> {
    let mut ctx = Ctx::new(model, opts);
    let mut suites = opts.suites.clone();
    suites.sort();
    suites.dedup();
    for s in &suites {
        match s {
            Suite::Algebra => algebra::run(&mut ctx)?,
            Suite::Geometry => geometry::run(&mut ctx)?,
            Suite::Clifford => clifford::run(&mut ctx)?,
            Suite::Dirac => dirac::run(&mut ctx)?,
            Suite::Lambda => lambda::run(&mut ctx)?,
            Suite::Solutions => solutions::run(&mut ctx)?,
        }
    }
    let checks = ctx.checks;
    let passed = checks.iter().filter(|c| c.pass).count();
    let failed = checks.len() - passed;
    Ok(Report { model: model.file.name.clone(), seed: opts.seed, suites, tolerance_scale: opts.tolerance_scale, checks, passed, failed })
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.3e}")
    }
}

pub fn render_text(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model {}  seed {}  tolerance scale {}", r.model, r.seed, r.tolerance_scale);
    for c in &r.checks {
        let tag = match (c.pass, c.comparison) {
            (true, Comparison::Info) => "INFO",
            (true, _) => "PASS",
            (false, _) => "FAIL",
        };
        let rel = match c.comparison {
            Comparison::Below => "<",
            Comparison::Above => ">",
            Comparison::Info => "~",
        };
        let _ = write!(s, "[{tag}] {:<48} {:<18} {} {rel} {}  n={}", c.id, c.anchor, fmt_num(c.residual), fmt_num(c.tolerance), c.samples);
        if let Some(p) = &c.worst_point {
            let pts: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
            let _ = write!(s, "  at ({})", pts.join(", "));
        }
        if c.wall_time_ms > 0.0 {
            let _ = write!(s, "  {:.1}ms", c.wall_time_ms);
        }
        if let Some(m) = c.detail.get("error").and_then(Value::as_str) {
            let _ = write!(s, "  error: {m}");
        }
        if let Some(m) = c.detail.get("skipped").and_then(Value::as_str) {
            let _ = write!(s, "  skipped: {m}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "{} passed, {} failed", r.passed, r.failed);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_prefer_longest_prefix_and_overrides() {
        let none = BTreeMap::new();
        assert_eq!(anchor_for("clifford.projectivity.sysBa", &none), "sysBa");
        assert_eq!(anchor_for("geometry.chart_roundtrip", &none), "can3");
        let mut o = BTreeMap::new();
        o.insert("geometry.chart".to_string(), "can_so13".to_string());
        assert_eq!(anchor_for("geometry.chart_roundtrip", &o), "can_so13");
        assert_eq!(anchor_for("unknown.thing", &none), "");
    }

    #[test]
    fn reduce_keeps_worst_and_nan() {
        let s = vec![(1.0, vec![0.0]), (3.0, vec![1.0]), (2.0, vec![2.0])];
        let o = Outcome::reduce(Comparison::Below, s.clone());
        assert_eq!(o.residual, 3.0);
        assert_eq!(o.worst_point, Some(vec![1.0]));
        assert_eq!(Outcome::reduce(Comparison::Above, s).residual, 1.0);
        let o = Outcome::reduce(Comparison::Below, vec![(1.0, vec![]), (f64::NAN, vec![]), (5.0, vec![])]);
        assert!(o.residual.is_nan());
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()), Some(vec![s]));
        }
        assert_eq!(Suite::parse("all").unwrap().len(), 6);
        assert!(Suite::parse("bogus").is_none());
    }
}
