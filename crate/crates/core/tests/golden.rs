//! Integration tests against the bundled model files.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;

use ncidirac::model::{Model, ModelError};
use ncidirac::solutions as so;
use ncidirac::verify::{verify_model, Options, Suite};
use proptest::prelude::*;

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models").join(name)
}

fn five() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| Model::load(&path("five_dim.json")).unwrap())
}

fn ads() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| Model::load(&path("ads3.json")).unwrap())
}

fn only(suites: &[Suite]) -> Options {
    Options { suites: suites.to_vec(), timings: false, ..Options::default() }
}

fn raw(name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path(name)).unwrap()).unwrap()
}

#[test]
fn bundled_models_have_expected_shape() {
    assert_eq!((five().dim(), five().nx, five().spinor_dim()), (5, 4, 4));
    assert_eq!((ads().dim(), ads().nx, ads().spinor_dim()), (6, 3, 2));
    assert!(five().lambda_rep.is_some() && ads().lambda_rep.is_some());
}

#[test]
fn pinned_gammas_are_read_row_major() {
    // third gamma is [[0, 1], [-1, 0]] in the file
    let m = ads();
    assert!(m.gammas_pinned);
    let g = &m.gammas.upper[2];
    assert_eq!((g[(0, 1)].re, g[(1, 0)].re), (1.0, -1.0));
    let pseudo = ncidirac::clifford::pseudospin(&m.gammas).unwrap();
    assert!((pseudo - m.param("s")).abs() < 1e-12);
}

#[test]
fn suite_selection_restricts_checks() {
    let r = verify_model(ads(), &only(&[Suite::Algebra, Suite::Clifford])).unwrap();
    assert!(!r.checks.is_empty());
    assert!(r.checks.iter().all(|c| c.id.starts_with("algebra.") || c.id.starts_with("clifford.")));
    assert!(r.ok());
}

#[test]
fn tolerance_scale_moves_verdicts() {
    let strict = Options { tolerance_scale: 1e-30, ..only(&[Suite::Geometry]) };
    let r = verify_model(five(), &strict).unwrap();
    assert!(!r.ok(), "checks with nonzero residuals must fail at a 1e-30 scale");
    let failing = r.checks.iter().filter(|c| !c.pass).count();
    assert_eq!(failing, r.failed);
    for c in r.checks.iter().filter(|c| !c.pass) {
        assert!(c.worst_point.is_some() || c.samples <= 1, "{} lacks a worst point", c.id);
    }
}

#[test]
fn seed_changes_samples_not_verdicts() {
    let a = verify_model(ads(), &only(&[Suite::Geometry])).unwrap();
    let b = verify_model(ads(), &Options { seed: 8, ..only(&[Suite::Geometry]) }).unwrap();
    assert!(a.ok() && b.ok());
    assert_ne!(a.to_json(), b.to_json());
}

#[test]
fn every_check_appears_once() {
    let r = verify_model(ads(), &only(&Suite::ALL)).unwrap();
    let mut ids: Vec<&str> = r.checks.iter().map(|c| c.id.as_str()).collect();
    let n = ids.len();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), n);
    assert_eq!(r.passed + r.failed, n);
}

#[test]
fn non_antisymmetric_bracket_is_a_schema_error() {
    let mut v = raw("ads3.json");
    // [e2, e1] declared with the same sign as [e1, e2]
    let mut bad = v["algebra"]["brackets"][0].clone();
    bad.as_array_mut().unwrap().swap(0, 1);
    v["algebra"]["brackets"].as_array_mut().unwrap().push(bad);
    let err = Model::from_json(&v.to_string()).unwrap_err();
    assert!(matches!(err, ModelError::Schema { .. }), "{err}");
}

#[test]
fn malformed_json_and_unknown_symbol_are_model_errors() {
    assert!(matches!(Model::from_json("{"), Err(ModelError::Json(_))));
    let mut v = raw("five_dim.json");
    v["verification"]["expected_scalar_curvature"] = serde_json::json!("6*undefined_symbol");
    let m = Model::from_json(&v.to_string());
    let err = match m {
        Err(e) => e,
        Ok(m) => verify_model(&m, &only(&[Suite::Geometry])).unwrap_err(),
    };
    assert!(err.is_model_error(), "{err}");
}

fn flow_fixture(s: f64) -> (Model, ncidirac::expr::Expr) {
    let m = ads();
    let sol = m.file.solutions.as_ref().unwrap();
    let mv = so::apply_pins(&m.with_params(&BTreeMap::from([("s".to_string(), s)])).unwrap(), &sol.flow_pinned).unwrap();
    let lm = m.lambda_rep.as_ref().unwrap();
    let f = lm.scope.parse("test", sol.flow_test_function.as_ref().unwrap()).unwrap();
    (mv, f)
}

fn signed(mag: f64, neg: bool) -> f64 {
    if neg {
        -mag
    } else {
        mag
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chart_roundtrip_five_dim(c in prop::collection::vec(-0.5f64..0.5, 5)) {
        let g = five().group.as_ref().unwrap();
        let back = g.invert(&g.matrix(&c), &[0.0; 5]).unwrap();
        let err = back.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn chart_roundtrip_ads3(c in prop::collection::vec(-0.5f64..0.5, 6)) {
        let g = ads().group.as_ref().unwrap();
        let back = g.invert(&g.matrix(&c), &[0.0; 6]).unwrap();
        let err = back.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn flow_group_law(
        m1 in 0.15f64..0.5, n1 in any::<bool>(), m2 in 0.15f64..0.5, n2 in any::<bool>(),
        t1 in -0.15f64..0.15, t2 in -0.15f64..0.15, s_neg in any::<bool>(), which in 0usize..3,
    ) {
        let (mv, f) = flow_fixture(signed(1.0, s_neg));
        let name = ["t", "x", "y"][which];
        let flow = so::compile_flow(&mv, name).unwrap();
        let q = [signed(m1, n1), signed(m2, n2)];
        let two = so::flow_compose(&mv, &flow, &f, &q, t1, t2).unwrap();
        let one = so::flow_apply(&mv, &flow, &f, &q, t1 + t2).unwrap();
        prop_assert!((two - one).norm() / one.norm().max(1.0) < 1e-7);
    }

    #[test]
    fn flows_match_transport_oracle(
        m1 in 0.15f64..0.5, n1 in any::<bool>(), m2 in 0.15f64..0.5, n2 in any::<bool>(),
        t in -0.3f64..0.3, which in 0usize..3,
    ) {
        let (mv, f) = flow_fixture(1.0);
        let name = ["t", "x", "y"][which];
        let flow = so::compile_flow(&mv, name).unwrap();
        let q = [signed(m1, n1), signed(m2, n2)];
        let got = so::flow_apply(&mv, &flow, &f, &q, t).unwrap();
        let want = so::flow_oracle(&mv, flow.generator, &f, &q, t).unwrap();
        prop_assert!((got - want).norm() / want.norm().max(1.0) < 1e-6);
    }
}
