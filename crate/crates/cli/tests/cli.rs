use std::path::Path;
use std::process::Command;

use chimera_core::layout::AssemblyPlan;

fn chimera(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_chimera")).current_dir(dir).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn plan_then_compose_matches_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let assets = ["fixture:quadruped", "fixture:winged"];
    let (code, _, err) = chimera(d, &["plan", assets[0], assets[1], "-p", "a quadruped with wings", "-o", "plan.json"]);
    assert_eq!(code, 0, "{err}");
    AssemblyPlan::from_json(&std::fs::read_to_string(d.join("plan.json")).unwrap()).unwrap();
    let (code, _, err) = chimera(d, &["compose", assets[0], assets[1], "--plan", "plan.json", "--out", "c"]);
    assert_eq!(code, 0, "{err}");
    let (code, _, err) = chimera(d, &["pipeline", assets[0], assets[1], "-p", "a quadruped with wings", "--out", "p"]);
    assert_eq!(code, 0, "{err}");
    for f in ["stage2/composed.slat", "stage2/plan.json", "stage2/assembled.skeleton.json"] {
        assert_eq!(std::fs::read(d.join("c").join(f)).unwrap(), std::fs::read(d.join("p").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.toml"),
        "prompt = \"a big cat with the head of a ram\"\noutput = \"ram-cat\"\n\n[[assets]]\nfixture = \"quadruped\"\n\n[[assets]]\nfixture = \"ram\"\n",
    )
    .unwrap();
    let (code, out, err) = chimera(d, &["pipeline", "--config", "run.toml"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("restyling skipped"));
    assert!(d.join("ram-cat/stage2/ram.head.0.0.slat").exists());

    let (code, _, err) = chimera(d, &["pipeline", "--config", "run.toml", "missing.bundle.json"]);
    assert_eq!(code, 10, "{err}");
    assert!(err.contains("stage I"));
    let (code, _, err) = chimera(d, &["pipeline", "--config", "run.toml", "--planner", "fixture:unrecorded"]);
    assert_eq!(code, 20, "{err}");
    let (code, _, _) = chimera(d, &["pipeline", "--config", "absent.toml"]);
    assert_eq!(code, 2);
    let (code, _, _) = chimera(d, &["pipeline", "fixture:fish", "--prune-fraction", "0.9"]);
    assert_eq!(code, 2);
}

#[test]
fn classify_prints_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = chimera(dir.path(), &["classify", "fixture:quadruped", "fixture:fish"]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v[0]["partition"]["regions"].as_array().unwrap().len(), 7);
    assert_eq!(v[1]["partition"]["regions"].as_array().unwrap().len(), 1);
}
