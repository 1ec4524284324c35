//! Acceptance gate: one PASS/FAIL line per criterion, run against the bundled
//! models with seed 7. Tolerances are pinned here, independently of the
//! values the verifier itself uses.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ncidirac::exec::{set_mode, ExecMode};
use ncidirac::model::Model;
use ncidirac::verify::{verify_model, Check, Comparison, Options, Report, Suite};

struct Run {
    five: Report,
    ads: Report,
    five_time: Duration,
}

fn model(name: &str) -> Model {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name);
    Model::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn opts() -> Options {
    Options { seed: 7, suites: Suite::ALL.to_vec(), timings: false, ..Options::default() }
}

/// Outcome of one criterion: failures collected as messages.
#[derive(Default)]
struct Verdict {
    notes: Vec<String>,
    worst: f64,
}

impl Verdict {
    fn fail(&mut self, msg: String) {
        self.notes.push(msg);
    }

    /// Check `id` exists, passed, and its residual meets the pinned bound.
    fn below(&mut self, r: &Report, id: &str, tol: f64, min_samples: usize) {
        match r.find(id) {
            None => self.fail(format!("{}: missing {id}", r.model)),
            Some(c) => self.below_check(&r.model, c, tol, min_samples),
        }
    }

    fn below_check(&mut self, model: &str, c: &Check, tol: f64, min_samples: usize) {
        self.worst = self.worst.max(c.residual);
        if !(c.residual < tol) || !c.pass || c.comparison != Comparison::Below {
            self.fail(format!("{model}: {} residual {:.3e} not below {tol:.0e}", c.id, c.residual));
        }
        if c.samples < min_samples {
            self.fail(format!("{model}: {} has {} samples, need {min_samples}", c.id, c.samples));
        }
    }

    fn above(&mut self, r: &Report, id: &str, floor: f64) {
        match r.find(id) {
            None => self.fail(format!("{}: missing {id}", r.model)),
            Some(c) if !(c.residual > floor) || !c.pass => self.fail(format!("{}: {id} residual {:.3e} not above {floor:.0e}", r.model, c.residual)),
            Some(_) => {}
        }
    }

    /// Every check matching `prefix` and ending in `suffix`, at least `count` of them.
    fn all_below(&mut self, r: &Report, prefix: &str, suffix: &str, count: usize, tol: f64, min_samples: usize) {
        let hits: Vec<&Check> = r.matching(prefix).filter(|c| c.id.ends_with(suffix)).collect();
        if hits.len() < count {
            self.fail(format!("{}: {} checks match {prefix}*{suffix}, need {count}", r.model, hits.len()));
        }
        for c in hits {
            self.below_check(&r.model, c, tol, min_samples);
        }
    }
}

fn criteria(run: &Run) -> Vec<(&'static str, Verdict)> {
    let (f, a) = (&run.five, &run.ads);
    let mut out = Vec::new();

    let mut v = Verdict::default();
    for r in [f, a] {
        v.below(r, "algebra.antisymmetry", 1e-12, 1);
        v.below(r, "algebra.jacobi", 1e-12, 1);
    }
    out.push(("structure constants: Jacobi and antisymmetry < 1e-12", v));

    let mut v = Verdict::default();
    v.below(f, "algebra.adh_invariance", 1e-13, 10);
    v.below(a, "algebra.adh_invariance", 1e-13, 1);
    out.push(("Ad(H)-invariance of the bilinear forms < 1e-13", v));

    let mut v = Verdict::default();
    v.below(f, "geometry.scalar_curvature", 1e-6, 500);
    v.below(a, "geometry.scalar_curvature", 1e-6, 100);
    out.push(("scalar curvature R = 6c1 and R = 6eps^2 within 1e-6", v));

    let mut v = Verdict::default();
    for r in [f, a] {
        for fr in ["xi", "eta", "sigma"] {
            v.below(r, &format!("geometry.frame_crosscheck.{fr}"), 1e-8, 50);
        }
        v.below(r, "geometry.maurer_cartan", 1e-8, 1);
    }
    out.push(("frame fields vs closed forms and Maurer-Cartan < 1e-8", v));

    let mut v = Verdict::default();
    for r in [f, a] {
        v.below(r, "clifford.anticommutator", 1e-12, 1);
        v.below(r, "clifford.isotropy_rep", 1e-11, 1);
        v.below(r, "clifford.comm1", 1e-11, 1);
        v.below(r, "clifford.comm2", 1e-11, 1);
        for p in ["sysBa", "sysB", "condLs2"] {
            v.below(r, &format!("clifford.projectivity.{p}"), 1e-11, 1);
        }
    }
    out.push(("Clifford relations, spin generators and projectivity", v));

    let mut v = Verdict::default();
    for r in [f, a] {
        v.below(r, "dirac.symmetry_commutes", 1e-8, 25);
        v.below(r, "dirac.symmetry_closure", 1e-8, 25);
    }
    out.push(("symmetry algebra: [X_A, D_M] and field closure < 1e-8", v));

    let mut v = Verdict::default();
    v.below(f, "dirac.polynomial.casimir_K", 1e-6, 25);
    if let Some(c) = f.find("dirac.polynomial.casimir_K") {
        if c.detail.get("jet_order").and_then(|j| j.as_u64()) != Some(4) {
            v.fail(format!("jet order {:?}, expected 4", c.detail.get("jet_order")));
        }
    }
    if run.five_time > Duration::from_secs(120) {
        v.fail(format!("five_dim run took {:?}", run.five_time));
    }
    out.push(("cubic Casimir K(X) commutes with D_M < 1e-6 at jet order 4", v));

    let mut v = Verdict::default();
    v.below(a, "dirac.polynomial.casimir_K2[s=1]", 1e-8, 25);
    v.below(a, "dirac.polynomial.casimir_K2[s=-1]", 1e-8, 25);
    out.push(("K2(X) = (s/2) D_M for s = +1, -1 < 1e-8", v));

    let mut v = Verdict::default();
    for r in [f, a] {
        v.below(r, "lambda.commutators", 1e-9, 1);
    }
    v.below(f, "lambda.casimir.K", 1e-9, 10);
    v.below(a, "lambda.casimir.K1", 1e-9, 10);
    v.below(a, "lambda.casimir.K2", 1e-9, 10);
    out.push(("lambda-representation commutators and Casimir values < 1e-9", v));

    let mut v = Verdict::default();
    v.below(f, "lambda.constraint", 1e-8, 1);
    for s in ["[s=1]", "[s=-1]"] {
        v.below(a, &format!("lambda.grid{s}"), 0.5, 1);
        v.above(a, &format!("lambda.grid_control.j1{s}"), 1e-2);
        v.above(a, &format!("lambda.grid_control.j2{s}"), 1e-2);
    }
    out.push(("reduction constraints and (j1, j2) recovered by grid search", v));

    let mut v = Verdict::default();
    v.all_below(f, "solutions.family.", ".dirac", 1, 1e-6, 150);
    v.all_below(a, "solutions.family.", ".dirac", 2, 1e-6, 150);
    let mut found = Vec::new();
    for r in [f, a] {
        for c in r.checks.iter().filter(|c| c.id.starts_with("solutions.family.") && c.id.contains(".control.")) {
            found.push(c.id.clone());
            v.above(r, &c.id, 1e-2);
        }
    }
    for need in ["wrong_mass", "wrong_j2"] {
        if !found.iter().any(|id| id.ends_with(need)) {
            v.fail(format!("no {need} negative control"));
        }
    }
    out.push(("solution families solve D_M psi = m psi; controls > 1e-2", v));

    let mut v = Verdict::default();
    if a.matching("solutions.flow.").filter(|c| c.id.ends_with(".oracle")).count() < 6 {
        v.fail("expected three flows for each pseudospin".into());
    }
    for c in a.matching("solutions.flow.") {
        let tol = if c.id.ends_with(".oracle") { 1e-6 } else if c.id.ends_with(".group_law") { 1e-7 } else { 1e-12 };
        v.below_check(&a.model, c, tol, 20);
    }
    out.push(("explicit flows equal the transport oracle; group law < 1e-7", v));

    let mut v = Verdict::default();
    let first = [f.to_json(), a.to_json()];
    let again = [verify_model(&model("five_dim.json"), &opts()), verify_model(&model("ads3.json"), &opts())];
    set_mode(ExecMode::Sequential);
    let seq = [verify_model(&model("five_dim.json"), &opts()), verify_model(&model("ads3.json"), &opts())];
    set_mode(ExecMode::Parallel);
    for (i, (x, y)) in again.into_iter().zip(seq).enumerate() {
        match (x, y) {
            (Ok(x), Ok(y)) => {
                if x.to_json() != first[i] {
                    v.fail(format!("{}: repeated run differs", x.model));
                }
                if y.to_json() != first[i] {
                    v.fail(format!("{}: sequential run differs", y.model));
                }
            }
            _ => v.fail("repeated run errored".into()),
        }
    }
    out.push(("seeded reports are byte-identical across runs", v));
    out
}

fn main() -> ExitCode {
    let t = Instant::now();
    let five = verify_model(&model("five_dim.json"), &opts()).expect("five_dim verifies");
    let five_time = t.elapsed();
    let ads = verify_model(&model("ads3.json"), &opts()).expect("ads3 verifies");
    let run = Run { five, ads, five_time };

    let results = criteria(&run);
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        let ok = v.notes.is_empty();
        failed += usize::from(!ok);
        println!("[{}] {:>2}. {name}  (worst residual {:.2e})", if ok { "PASS" } else { "FAIL" }, i + 1, v.worst);
        for n in &v.notes {
            println!("        {n}");
        }
    }
    for r in [&run.five, &run.ads] {
        for c in r.checks.iter().filter(|c| !c.pass) {
            println!("        note: {}: {} failed ({:.3e})", r.model, c.id, c.residual);
        }
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
