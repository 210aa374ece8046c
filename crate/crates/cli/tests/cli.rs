use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agentpomdp::gradient::sweep_1param;
use agentpomdp::io::{serialize_native, ModelDocument};
use agentpomdp::{fixtures, AgentStateMachine};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("agentpomdp-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agentpomdp"))
        .args(args)
        .env_remove("AGENTPOMDP_CAP")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn number_after(text: &str, key: &str) -> f64 {
    let rest = &text[text.find(key).unwrap_or_else(|| panic!("{key} missing in {text}")) + key.len()..];
    rest.split(|c: char| c.is_whitespace() || c == ',').find(|t| !t.is_empty()).unwrap().parse().unwrap()
}

#[test]
fn shipped_fixtures_match_the_library() {
    let fig2 = fs::read_to_string(fixture("fig2.pomdpz")).unwrap();
    let doc = agentpomdp::io::parse_native(&fig2).unwrap();
    assert_eq!(doc.model, fixtures::fig2());
    let mdp = agentpomdp::io::parse_native(&fs::read_to_string(fixture("small_mdp.pomdpz")).unwrap()).unwrap();
    assert_eq!(mdp.model, fixtures::small_mdp());
    let fig1 = agentpomdp::io::parse_native(&fs::read_to_string(fixture("fig1.pomdpz")).unwrap()).unwrap();
    assert_eq!(fig1.model, fixtures::fig1_truncated(0.9));
}

#[test]
fn evaluate_constant_reward_policy() {
    let out = scratch("eval1");
    let o = run(&[
        "evaluate",
        "--model",
        fixture("fig2.pomdpz").to_str().unwrap(),
        "--policy",
        fixture("fig2_always_1.policy").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!((number_after(&stdout(&o), "J = ") + 5.0).abs() < 1e-10);
    assert!(fs::read_to_string(out.join("evaluate.csv")).unwrap().starts_with("s,z,a,V,Q,d\n"));
}

#[test]
fn evaluate_matches_sweep() {
    let out = scratch("eval2");
    let o = run(&[
        "evaluate",
        "--model",
        fixture("fig2.pomdpz").to_str().unwrap(),
        "--policy",
        fixture("fig2_p039.policy").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let expected = sweep_1param(&fixtures::fig2(), &[0.39]).unwrap()[0].1;
    assert!((number_after(&stdout(&o), "J = ") - expected).abs() < 1e-9);
}

#[test]
fn missing_model_exits_with_validation_code() {
    let o = run(&["evaluate", "--model", "/nonexistent/model.pomdpz"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/model.pomdpz"));
    let o = run(&["evaluate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn capacity_overrun_exits_with_code_3() {
    let out = scratch("cap");
    let o = Command::new(env!("CARGO_BIN_EXE_agentpomdp"))
        .args(["evaluate", "--model", fixture("small_mdp.pomdpz").to_str().unwrap(), "--machine", "window:2"])
        .args(["--out", out.to_str().unwrap()])
        .env("AGENTPOMDP_CAP", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn reproduce_fig2_is_deterministic_and_finds_the_optimum() {
    let (a, b) = (scratch("fig2a"), scratch("fig2b"));
    for dir in [&a, &b] {
        let o = run(&["reproduce", "fig2", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{o:?}");
        let p = number_after(&stdout(&o), "grid argmax p = ");
        assert!((0.385..=0.395).contains(&p), "argmax {p}");
    }
    let csv = fs::read(a.join("fig2_curve.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("fig2_curve.csv")).unwrap());
}

#[test]
fn reproduce_fig1_reports_stationary_value() {
    let out = scratch("fig1");
    let o = run(&["reproduce", "fig1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(out.join("fig1.csv")).unwrap();
    let zsd = number_after(&csv, "J_ZSD,");
    assert!((zsd - 4.0221).abs() < 1e-4, "{zsd}");
    assert!(number_after(&csv, "J_ZND,") > zsd + 5.0);
}

#[test]
fn reproduce_ordering_has_no_violations() {
    let out = scratch("ordering");
    let o = run(&["reproduce", "ordering", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("\n0 ordering violations"));
    assert_eq!(fs::read_to_string(out.join("ordering.csv")).unwrap().lines().count(), 16);
}

#[test]
fn asql_demo_is_reproducible_for_a_seed() {
    let (a, b) = (scratch("asqla"), scratch("asqlb"));
    for dir in [&a, &b] {
        let o = run(&["reproduce", "asql-demo", "--seed", "3", "--steps", "200000", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{o:?}");
    }
    for f in ["asql_snapshots.csv", "asql_distance.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let trace = fs::read_to_string(a.join("asql_distance.csv")).unwrap();
    assert_eq!(trace.lines().count(), 101);
}

#[test]
fn ais_audit_on_information_state_is_exact() {
    let out = scratch("ais-mdp");
    let o = run(&["ais-audit", "--model", fixture("small_mdp.pomdpz").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert_eq!(number_after(&text, "bound = "), 0.0);
    assert_eq!(number_after(&text, "measured suboptimality in ["), 0.0);
}

#[test]
fn ais_audit_bound_covers_measured_gap() {
    let out = scratch("ais-rand");
    let model_path = out.join("random.pomdpz");
    let model = fixtures::random_model(0, 3, 2, 2, 0.8);
    let mut doc = ModelDocument::new(model);
    doc.machines.push(("memoryless".into(), AgentStateMachine::singleton(2, 2).with_label("memoryless")));
    fs::write(&model_path, serialize_native(&doc)).unwrap();
    let mut cases = vec![(fixture("fig2.pomdpz"), "memoryless".to_string())];
    for k in [1, 2, 4] {
        cases.push((model_path.clone(), format!("belief:{k}")));
    }
    for (path, machine) in cases {
        let o = run(&[
            "ais-audit",
            "--model",
            path.to_str().unwrap(),
            "--machine",
            &machine,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{machine}: {o:?}");
        let text = stdout(&o);
        let bound = number_after(&text, "bound = ");
        let measured = number_after(&text, "measured suboptimality in [");
        assert!(measured <= bound + 1e-9, "{machine}: {measured} > {bound}");
    }
}
