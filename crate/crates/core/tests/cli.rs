use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const HYPERBOLIC_FILE: &str = r#"{
    "schema": 1, "n": 2,
    "frame": [["x1","0","0","0","0"],["0","x1","0","0","0"],["0","0","x1","0","0"],["0","0","0","x1","0"],["0","0","0","0","x1"]],
    "phi": [[0,0,0,0,0],[0,0,-1,0,0],[0,1,0,0,0],[0,0,0,0,-1],[0,0,0,1,0]],
    "zeta": [1,0,0,0,0],
    "domain": "x1"
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acms-torsion"))
        .args(args)
        .output()
        .expect("run binary")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| {
        panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn temp_file(name: &str, text: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn classify_builtin() {
    let out = run(&["classify", "--model", "builtin:hyperbolic", "--param", "n=3"]);
    assert_eq!(out.status.code(), Some(0));
    let j = stdout_json(&out);
    assert_eq!(j["command"], "classify");
    assert_eq!(j["model"]["dim"], 7);
    assert_eq!(j["points"][0]["type"]["activeSet"], serde_json::json!(["C4", "C5", "C12"]));
    assert_eq!(j["summary"]["crossRouteAgreement"], true);
    let codes: Vec<&str> = j["warnings"].as_array().unwrap().iter().map(|w| w["code"].as_str().unwrap()).collect();
    assert!(codes.contains(&"hyperbolic-dstar-eta"), "{codes:?}");
}

#[test]
fn output_is_byte_stable() {
    let args = ["classify", "--model", "builtin:h-alt-2", "--point", "1.1,0.7,0.2,-0.3,0.4"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn classify_model_file_with_conformal_factor() {
    let path = temp_file("hyperbolic_k0.json", HYPERBOLIC_FILE);
    let path = path.to_str().unwrap();
    let out = run(&["classify", "--model", path, "--point", "1.3,0.2,-0.1,0.4,0.0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["points"][0]["type"]["activeSet"], serde_json::json!(["C5"]));

    // the x2-direction Reeb field gives C4 ⊕ C12, which the factor x1 removes
    let tilted = HYPERBOLIC_FILE
        .replace(r#""zeta": [1,0,0,0,0]"#, r#""zeta": [0,1,0,0,0]"#)
        .replace(
            r#""phi": [[0,0,0,0,0],[0,0,-1,0,0],[0,1,0,0,0],[0,0,0,0,-1],[0,0,0,1,0]]"#,
            r#""phi": [[0,0,-1,0,0],[0,0,0,0,0],[1,0,0,0,0],[0,0,0,0,-1],[0,0,0,1,0]]"#,
        );
    let path = temp_file("hyperbolic_tilted.json", &tilted);
    let path = path.to_str().unwrap();
    let out = run(&["classify", "--model", path, "--point", "1.3,0.2,-0.1,0.4,0.0", "--conformal-factor", "x1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let j = stdout_json(&out);
    assert_eq!(j["points"][0]["type"]["activeSet"], serde_json::json!(["C4", "C12"]));
    assert_eq!(j["points"][0]["conformal"]["type"]["activeSet"], serde_json::json!([]));
}

#[test]
fn verify_builtin_passes() {
    let out = run(&["verify", "--model", "builtin:h-alt-1", "--points", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let j = stdout_json(&out);
    assert_eq!(j["summary"]["identitiesFailed"], 0);
    assert!(j["summary"]["identitiesPassed"].as_u64().unwrap() > 0);
    let ids: Vec<&str> = j["points"][0]["identities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["id"].as_str().unwrap())
        .collect();
    assert!(ids.contains(&"I1") && ids.contains(&"I8"), "{ids:?}");
}

#[test]
fn verify_reports_identity_failure_with_exit_code_2() {
    let out = run(&["verify", "--model", "builtin:synthetic-random", "--points", "2", "--identity-tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout_json(&out)["summary"]["identitiesFailed"].as_u64().unwrap() > 0);
}

#[test]
fn enumerate_types_counts() {
    let out = run(&["enumerate-types", "--n", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let j = stdout_json(&out);
    assert_eq!(j["derived_count"], 128);
    assert_eq!(j["paper_expression_value"], 3964);
    let out = run(&["enumerate-types", "--n", "2"]);
    assert_eq!(stdout_json(&out)["derived_count"], 32);
    let out = run(&["enumerate-types", "--n", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "validation");
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest", "--samples", "20"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["passed"], true);
}

#[test]
fn io_and_parse_errors_exit_3() {
    let out = run(&["classify", "--model", "/nonexistent/model.json", "--point", "1,0,0"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["kind"], "io");

    let path = temp_file("broken.json", "{\"schema\": 1,");
    let out = run(&["classify", "--model", path.to_str().unwrap(), "--point", "1,0,0"]);
    assert_eq!(out.status.code(), Some(3));

    let out = run(&["classify", "--model", "builtin:hyperbolic", "--point", "1,2"]);
    assert_eq!(out.status.code(), Some(3));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["exitCode"], 3);

    let out = run(&["classify", "--model", "builtin:hyperbolic", "--conformal", "x1 +"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn validation_errors_exit_1() {
    let bad_phi = HYPERBOLIC_FILE.replace(r#"[0,0,0,1,0]]"#, r#"[0,0,0,2,0]]"#);
    let path = temp_file("bad_phi.json", &bad_phi);
    let out = run(&["classify", "--model", path.to_str().unwrap(), "--point", "1,0,0,0,0"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"]["kind"], "validation");

    let out = run(&["classify", "--model", "builtin:h-alt-1", "--point", "-1,1,0,0,0"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["classify", "--model", "builtin:hyperbolic", "--param", "c=-1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("enumerate-types"));
}
