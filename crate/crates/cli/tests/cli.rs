use std::path::Path;
use std::process::{Command, Output};

fn seal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seal"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let o = seal(dir, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

const SMALL: &str = r#"
seed = 3
clusters = 4

[suite]
train_count = 20

[scorer]
epochs = 2

[cem]
population = 4
elite = 2
generations = 2
batch = 2
final_batch = 2
"#;

#[test]
fn gen_scenarios_writes_files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-scenarios", "--seed", "0", "--count", "50", "--out", "gs"]);
    let files = std::fs::read_dir(dir.path().join("gs/scenarios")).unwrap().count();
    assert_eq!(files, 50);
    let list = std::fs::read_to_string(dir.path().join("gs/scenarios.txt")).unwrap();
    assert_eq!(list.lines().count(), 50);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("gs/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "gen-scenarios");
    assert_eq!(m["seed"], 0);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 51);
}

#[test]
fn seal_generator_without_models_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = seal(dir.path(), &["evaluate", "--generator", "seal", "--ego", "replay", "--out", "ev"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(seal(dir.path(), &["evaluate", "--bogus", "--out", "x"]).status.code(), Some(2));
    assert_eq!(seal(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(seal(dir.path(), &["evaluate", "--generator", "nope", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "k = 0\n").unwrap();
    let o = seal(dir.path(), &["gen-scenarios", "--config", "bad.toml", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn no_adv_replay_on_clean_suite_succeeds_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["evaluate", "--generator", "no-adv", "--ego", "replay", "--out", "ev"]);
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ev/report.json")).unwrap()).unwrap();
    assert_eq!(r["rates"]["success"], 1.0);
    assert_eq!(r["n_episodes"], 50);
}

fn outputs(dir: &Path) -> serde_json::Value {
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["outputs"].clone()
}

/// Full pipeline on a reduced configuration, then a rerun of the evaluation from its manifest.
#[test]
fn end_to_end_pipeline_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.toml"), SMALL).unwrap();
    let c = ["--config", "small.toml"];
    let with = |args: &[&str]| -> Vec<String> { args.iter().chain(c.iter()).map(|s| s.to_string()).collect() };
    let run = |args: &[&str]| {
        let v = with(args);
        let refs: Vec<&str> = v.iter().map(String::as_str).collect();
        ok(d, &refs);
    };
    run(&["gen-scenarios", "--count", "20", "--out", "scen"]);
    run(&["collect-demos", "--scenarios", "scen/scenarios.txt", "--out", "demos"]);
    run(&["build-skills", "--corpus", "demos", "--out", "skills"]);
    run(&["gen-corpus", "--scenarios", "scen/scenarios.txt", "--out", "corpus"]);
    run(&["train-scorer", "--corpus", "corpus", "--out", "scorer"]);
    run(&[
        "train-ego", "--scenarios", "scen/scenarios.txt", "--generator", "seal", "--scorer", "scorer", "--skills",
        "skills", "--out", "ego",
    ]);
    run(&[
        "evaluate", "--scenarios", "scen/scenarios.txt", "--split", "held-out", "--generator", "seal", "--scorer",
        "scorer", "--skills", "skills", "--ego", "trainable", "--ego-params", "ego", "--out", "ev-seal",
    ]);
    run(&[
        "evaluate", "--scenarios", "scen/scenarios.txt", "--split", "held-out", "--generator", "cat-heuristic",
        "--ego", "idm", "--out", "ev-cat",
    ]);
    run(&["report", "--run", "ev-seal", "--run", "ev-cat", "--out", "report"]);

    for f in [
        "skills/skills.json",
        "scorer/scorer.json",
        "ego/ego.json",
        "ego/training_log.csv",
        "ev-seal/report.json",
        "ev-seal/episodes.csv",
        "report/ablation.csv",
        "report/realism.csv",
    ] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    let ablation = std::fs::read_to_string(d.join("report/ablation.csv")).unwrap();
    assert_eq!(ablation.lines().count(), 3);
    assert!(ablation.starts_with("run,run_id,generator,ego,episodes,success,crash,offroad,timeout"));

    let o = seal(d, &["rerun", "--manifest", "ev-seal/manifest.json", "--out", "ev-seal-again"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(outputs(&d.join("ev-seal")), outputs(&d.join("ev-seal-again")));
    for f in ["report.json", "episodes.csv", "rollouts.jsonl"] {
        assert_eq!(
            std::fs::read(d.join("ev-seal").join(f)).unwrap(),
            std::fs::read(d.join("ev-seal-again").join(f)).unwrap()
        );
    }
    let o = seal(d, &["rerun", "--manifest", "ego/manifest.json", "--out", "ego-again"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    // A changed input is detected before re-running.
    std::fs::write(d.join("small.toml"), format!("{SMALL}\n# edited\n")).unwrap();
    let o = seal(d, &["rerun", "--manifest", "ev-seal/manifest.json", "--out", "ev-x"]);
    assert_eq!(o.status.code(), Some(1));
}
