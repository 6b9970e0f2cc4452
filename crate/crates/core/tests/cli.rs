//! End-to-end runs of the `specqa` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn specqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specqa"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = specqa(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn read_jsonl(p: &Path) -> Vec<Value> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Small synthetic corpus split into target train/dev/test files.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        ok(&["synth", "--out-dir", s(d), "--products", "15", "--source-records", "100", "--embedding-dim", "8"]);
        let pairs = d.join("pairs.jsonl");
        ok(&[
            "pairs",
            "--catalog",
            s(&d.join("catalog.jsonl")),
            "--questions",
            s(&d.join("spec_questions.jsonl")),
            "--out",
            s(&pairs),
        ]);
        ok(&["split", "--in", s(&pairs), "--ratios", "0.6,0.2,0.2", "--out-prefix", s(&d.join("t"))]);
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        s(&self.path(name)).to_string()
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "train".to_string(),
            "--train".into(),
            self.p("t.train.jsonl"),
            "--dev".into(),
            self.p("t.dev.jsonl"),
            "--embeddings".into(),
            self.p("embeddings.txt"),
            "--out".into(),
            self.p(out),
            "--hidden".into(),
            "4".into(),
            "--epochs".into(),
            "2".into(),
        ];
        args.extend(extra.iter().map(|a| a.to_string()));
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&args)
    }
}

fn cqa(q: &str, a: &str) -> String {
    serde_json::json!({"question": q, "answer": a}).to_string()
}

#[test]
fn preprocess_charges_each_rule_once() {
    let dir = tempfile::tempdir().unwrap();
    let long_answer = vec!["word"; 60].join(" ");
    let ten = "this answer has exactly ten tokens in it for sure";
    let records = [
        cqa("see the site at www.example.com please", ten),
        cqa("too short ?", ten),
        cqa("is this a good question to ask ?", "yes it is"),
        cqa("is this a good question to ask ?", &long_answer),
        cqa("is this a good question to ask ?", "honestly i have no idea what you mean by that sorry"),
        cqa("does this blender crush ice well ?", "yes it crushes ice in a few seconds without any trouble"),
    ];
    let input = dir.path().join("cqa.jsonl");
    std::fs::write(&input, records.join("\n")).unwrap();
    let out = dir.path().join("pairs.jsonl");
    let report = dir.path().join("report.json");
    ok(&["preprocess", "--in", s(&input), "--out", s(&out), "--report", s(&report), "--negatives", "0"]);

    let r = read_json(&report);
    assert_eq!(r["removed_by_rule"], serde_json::json!([1, 1, 1, 1, 1]));
    assert_eq!(r["output_positive"], 1);
    let pairs = read_jsonl(&out);
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0]["label"], 1);
    assert!(pairs[0]["question"].as_str().unwrap().contains("blender"));
}

#[test]
fn zero_negatives_keeps_only_positives() {
    let f = Fixture::new();
    let out = f.path("pos.jsonl");
    ok(&["preprocess", "--in", &f.p("cqa.jsonl"), "--out", s(&out), "--negatives", "0"]);
    let pairs = read_jsonl(&out);
    assert_eq!(pairs.len(), 100);
    assert!(pairs.iter().all(|p| p["label"] == 1));
}

#[test]
fn missing_input_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.jsonl");
    let out = specqa(&["preprocess", "--in", s(&missing), "--out", s(&dir.path().join("o.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.jsonl"));
}

#[test]
fn usage_errors_exit_with_config_code() {
    let out = specqa(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn zero_learning_rate_training_evaluates_reproducibly() {
    let f = Fixture::new();
    f.train("m.ckpt", &["--lr", "0", "--optimizer", "sgd"]);
    let (r1, r2) = (f.path("r1.json"), f.path("r2.json"));
    for r in [&r1, &r2] {
        ok(&["eval", "--ckpt", &f.p("m.ckpt"), "--test", &f.p("t.test.jsonl"), "--out", s(r)]);
    }
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
    let report = read_json(&r1);
    assert_eq!(report["group_count"], 9);
}

#[test]
fn single_spec_product_ranks_first() {
    let f = Fixture::new();
    f.train("m.ckpt", &[]);
    let catalog = f.path("one.jsonl");
    std::fs::write(
        &catalog,
        r#"{"product_id":"solo","category":"tools","specs":[{"name":"kw1 cf1","value":"12"}]}"#,
    )
    .unwrap();
    let out = ok(&[
        "rank",
        "--ckpt",
        &f.p("m.ckpt"),
        "--question",
        "what is the kw1 of this cf2 ?",
        "--product-file",
        s(&catalog),
        "--product-id",
        "solo",
        "--json",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ranked"].as_array().unwrap().len(), 1);
    assert_eq!(v["ranked"][0]["spec_name"], "kw1 cf1");
    assert_eq!(v["answer_sentence"], "The kw1 cf1 is 12.");

    let unknown = specqa(&[
        "rank",
        "--ckpt",
        &f.p("m.ckpt"),
        "--question",
        "q ?",
        "--product-file",
        s(&catalog),
        "--product-id",
        "nope",
    ]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn scratch_grid_cell_equals_train_then_eval() {
    let f = Fixture::new();
    let common = ["--hidden", "4", "--epochs", "2", "--seed", "3"];
    f.train("m.ckpt", &["--seed", "3"]);
    let report = f.path("r.json");
    ok(&["eval", "--ckpt", &f.p("m.ckpt"), "--test", &f.p("t.test.jsonl"), "--out", s(&report)]);

    let table = f.path("grid.json");
    let mut args = vec![
        "grid".to_string(),
        "--target-train".into(),
        f.p("t.train.jsonl"),
        "--target-dev".into(),
        f.p("t.dev.jsonl"),
        "--target-test".into(),
        f.p("t.test.jsonl"),
        "--embeddings".into(),
        f.p("embeddings.txt"),
        "--fractions".into(),
        "1.0".into(),
        "--seeds".into(),
        "1".into(),
        "--no-pretrain".into(),
        "--out-json".into(),
        s(&table).into(),
    ];
    args.extend(common.iter().map(|a| a.to_string()));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&args);

    let eval = read_json(&report);
    let grid = read_json(&table);
    let cells = grid["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0]["mrr_mean"], eval["mrr"]);
    assert_eq!(cells[0]["accuracy_mean"], eval["accuracy"]);
}

#[test]
fn finetune_with_different_hidden_size_is_a_config_error() {
    let f = Fixture::new();
    f.train("m.ckpt", &[]);
    let out = specqa(&[
        "finetune",
        "--from",
        &f.p("m.ckpt"),
        "--train",
        &f.p("t.train.jsonl"),
        "--dev",
        &f.p("t.dev.jsonl"),
        "--out",
        &f.p("f.ckpt"),
        "--hidden",
        "6",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!f.path("f.ckpt").exists());
}

#[test]
fn flags_override_config_file() {
    let f = Fixture::new();
    let cfg = f.path("train.cfg");
    std::fs::write(&cfg, "# small run\nhidden=5\nepochs_max=1\nbatch_size=4\n").unwrap();
    let manifest = f.path("manifest.json");
    let out = ok(&[
        "--manifest",
        s(&manifest),
        "train",
        "--train",
        &f.p("t.train.jsonl"),
        "--dev",
        &f.p("t.dev.jsonl"),
        "--embeddings",
        &f.p("embeddings.txt"),
        "--out",
        &f.p("m.ckpt"),
        "--config",
        s(&cfg),
        "--hidden",
        "3",
    ]);
    let m = read_json(&manifest);
    assert_eq!(m["config"]["hidden"], 3);
    assert_eq!(m["config"]["epochs_max"], 1);
    assert_eq!(m["config"]["batch_size"], 4);
    let inputs: Vec<&str> = m["inputs"].as_array().unwrap().iter().map(|i| i["path"].as_str().unwrap()).collect();
    assert!(inputs.iter().any(|p| p.ends_with("train.cfg")));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest: "));
}
