use std::path::PathBuf;
use std::process::{Command, Output};

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn ads3() -> String {
    models().join("ads3.json").display().to_string()
}

fn five() -> String {
    models().join("five_dim.json").display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncidirac")).args(args).output().expect("binary runs")
}

fn run_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncidirac")).args(args).env(key, val).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn strip_times(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.remove("wall_time_ms");
            m.values_mut().for_each(strip_times);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_times),
        _ => {}
    }
}

#[test]
fn validate_bundled_models() {
    let o = run(&["validate", &five(), &ads3()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("five_dim") && out.contains("ads3"));
}

#[test]
fn broken_models_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": 3}").unwrap();
    let bad = bad.display().to_string();
    assert_eq!(code(&run(&["validate", &bad])), 2);
    assert_eq!(code(&run(&["verify", &bad, "--suite", "algebra"])), 2);
    assert_eq!(code(&run(&["report", &bad])), 2);
    let missing = dir.path().join("missing.json").display().to_string();
    assert_eq!(code(&run(&["verify", &missing])), 2);

    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ads3()).unwrap()).unwrap();
    v["bilinear_form"] = serde_json::json!("not a matrix");
    let p = dir.path().join("schema.json");
    std::fs::write(&p, v.to_string()).unwrap();
    let o = run(&["verify", &p.display().to_string(), "--suite", "algebra"]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["verify", &ads3(), "--suite", ""])), 2);
    assert_eq!(code(&run(&["verify", &ads3(), "--suite", ","])), 2);
    assert_eq!(code(&run(&["verify", &ads3(), "--suite", "optics"])), 2);
    assert_eq!(code(&run(&["verify", &ads3(), "--tolerance-scale", "0"])), 2);
    assert_eq!(code(&run(&["verify", &ads3(), "--format", "yaml"])), 2);
}

#[test]
fn passing_suite_exits_0_with_text() {
    let o = run(&["verify", &ads3(), "--suite", "algebra,clifford"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("[PASS] algebra.jacobi"));
    assert!(out.contains("[PASS] clifford.projectivity.sysB"));
    assert!(!out.contains("geometry."));
}

#[test]
fn tight_tolerances_fail_verify_but_not_report() {
    let args = ["--suite", "geometry", "--tolerance-scale", "1e-30", "--points", "5"];
    let o = run(&[&["verify", &ads3()][..], &args].concat());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));

    let o = run(&[&["report", &ads3()][..], &args].concat());
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!(v["failed"].as_u64().unwrap() > 0);
    let failing = v["reports"][0]["checks"].as_array().unwrap().iter().find(|c| c["pass"] == false).unwrap().clone();
    assert!(failing["worst_point"].is_array());
}

#[test]
fn json_report_fields() {
    let o = run(&["verify", &ads3(), "--suite", "geometry", "--format", "json", "--points", "5", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let r = &v["reports"][0];
    assert_eq!(r["model"], "ads3");
    assert_eq!(r["seed"], 3);
    for c in r["checks"].as_array().unwrap() {
        for key in ["id", "anchor", "residual", "tolerance", "pass", "wall_time_ms", "samples"] {
            assert!(c.get(key).is_some(), "{key} missing in {c}");
        }
    }
    let fc = r["checks"].as_array().unwrap().iter().find(|c| c["id"] == "geometry.metric_inverse").unwrap();
    assert_eq!(fc["samples"], 5);
    assert_eq!(fc["worst_point"].as_array().unwrap().len(), 3);
}

#[test]
fn output_file_and_default_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = run(&["report", &ads3(), "--suite", "algebra", "-o", &out.display().to_string()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["failed"], 0);
}

#[test]
fn reports_are_deterministic() {
    let args = ["verify", &ads3(), "--suite", "all", "--seed", "7", "--format", "json"];
    let a = run(&args);
    let b = run_env(&args, "NCIDIRAC_THREADS", "1");
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(code(&b), 0);
    let (mut va, mut vb) = (json(&a), json(&b));
    strip_times(&mut va);
    strip_times(&mut vb);
    assert_eq!(serde_json::to_string(&va).unwrap(), serde_json::to_string(&vb).unwrap());

    let fixed = ["verify", &ads3(), "--suite", "all", "--seed", "7", "--format", "json", "--no-timings"];
    let c = run(&fixed);
    let d = run(&[&fixed[..], &["--sequential"]].concat());
    assert_eq!(code(&c), 0);
    assert_eq!(c.stdout, d.stdout);
}
