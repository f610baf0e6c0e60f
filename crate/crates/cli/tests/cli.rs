use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bleubound"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, contents: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn bleu_identical_files_score_one() {
    let dir = TempDir::new().unwrap();
    let text = "the cat sat on the mat\na b c d e\n";
    let cand = write(&dir, "cand.txt", text);
    let reference = write(&dir, "ref.txt", text);
    let out = run(&["bleu", "--cand", s(&cand), "--ref", s(&reference)]);
    assert_eq!(out.status.code(), Some(0));
    let lines = json_lines(&out);
    assert_eq!(lines.len(), 3);
    for line in &lines[..2] {
        assert_eq!(line["score"], 1.0);
        for key in ["score", "bp", "precisions", "overlaps", "cand_len", "ref_len"] {
            assert!(line.get(key).is_some(), "missing {key}");
        }
    }
    assert_eq!(lines[2]["corpus"]["score"], 1.0);
}

#[test]
fn bleu_hand_example() {
    let dir = TempDir::new().unwrap();
    let cand = write(&dir, "cand.txt", "the cat the cat\n");
    let reference = write(&dir, "ref.txt", "the cat sat\n");
    let out = run(&["bleu", "--cand", s(&cand), "--ref", s(&reference), "--max-order", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let line = &json_lines(&out)[0];
    let score = line["score"].as_f64().unwrap();
    assert!((score - (0.5f64 * (1.0 / 3.0)).sqrt()).abs() < 1e-12);
    assert_eq!(line["overlaps"], serde_json::json!([2, 1]));
    assert_eq!(line["bp"], 1.0);
}

#[test]
fn bleu_csv_output() {
    let dir = TempDir::new().unwrap();
    let cand = write(&dir, "cand.txt", "a b\nc\n");
    let reference = write(&dir, "ref.txt", "a b\nd\n");
    let out = run(&[
        "bleu", "--cand", s(&cand), "--ref", s(&reference), "--max-order", "1", "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "line,score,bp,cand_len,ref_len,p1");
    assert!(lines[3].starts_with("corpus,0.666666"));
}

#[test]
fn bleu_line_count_mismatch_exits_2() {
    let dir = TempDir::new().unwrap();
    let cand = write(&dir, "cand.txt", "a\nb\nc\n");
    let reference = write(&dir, "ref.txt", "a\nb\n");
    let out = run(&["bleu", "--cand", s(&cand), "--ref", s(&reference)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('3') && err.contains('2'), "{err}");
}

#[test]
fn unreadable_file_exits_3() {
    let dir = TempDir::new().unwrap();
    let reference = write(&dir, "ref.txt", "a\n");
    let missing = dir.path().join("missing.txt");
    let out = run(&["bleu", "--cand", s(&missing), "--ref", s(&reference)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_flag_exits_2() {
    assert_eq!(run(&["bleu", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn lb_uniform_two_position_instance() {
    let dir = TempDir::new().unwrap();
    let logits = write(&dir, "logits.csv", "0,0\n0,0\n");
    let reference = write(&dir, "ref.txt", "0 1\n");
    let out = run(&["lb", "--logits", s(&logits), "--ref", s(&reference), "--max-order", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!((v["aggregate"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!((v["bound_value"].as_f64().unwrap() + 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(v["proven_regime"], true);
}

#[test]
fn lb_near_one_hot_with_vocab_and_header() {
    let dir = TempDir::new().unwrap();
    let vocab = write(&dir, "vocab.txt", "the\ncat\nsat\n");
    let logits = write(&dir, "logits.csv", "the,cat,sat\n20,-20,-20\n-20,20,-20\n-20,-20,20\n");
    let reference = write(&dir, "ref.txt", "the cat sat\n");
    let out = run(&[
        "lb", "--logits", s(&logits), "--ref", s(&reference), "--vocab", s(&vocab), "--header", "--max-order", "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert!((v["aggregate"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn lb_shape_mismatch_exits_2() {
    let dir = TempDir::new().unwrap();
    let vocab = write(&dir, "vocab.txt", "a\nb\nc\n");
    let logits = write(&dir, "logits.csv", "0,0\n");
    let reference = write(&dir, "ref.txt", "a\n");
    let out = run(&["lb", "--logits", s(&logits), "--ref", s(&reference), "--vocab", s(&vocab)]);
    assert_eq!(out.status.code(), Some(2));
    let reference = write(&dir, "ids.txt", "5\n");
    let out = run(&["lb", "--logits", s(&logits), "--ref", s(&reference)]);
    assert_eq!(out.status.code(), Some(2));
    let ragged = write(&dir, "ragged.csv", "0,0\n0\n");
    let out = run(&["lb", "--logits", s(&ragged), "--ref", s(&reference)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lb_csv_lists_orders() {
    let dir = TempDir::new().unwrap();
    let logits = write(&dir, "logits.csv", "0,0\n0,0\n");
    let reference = write(&dir, "ref.txt", "0 1\n");
    let out = run(&[
        "lb", "--logits", s(&logits), "--ref", s(&reference), "--max-order", "3", "--format", "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "order,lb_overlap,lb_precision,smoothed");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3], "3,,,");
}

#[test]
fn expected_exhaustive_and_mc() {
    let dir = TempDir::new().unwrap();
    let logits = write(&dir, "logits.csv", "0,0\n0,0\n");
    let reference = write(&dir, "ref.txt", "0 1\n");
    let base = ["expected", "--logits", s(&logits), "--ref", s(&reference), "--max-order", "1"];

    let out = run(&[&base[..], &["--mode", "exhaustive"]].concat());
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!((v["value"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(v["outcomes"], 4);

    let out = run(&[&base[..], &["--samples", "20000", "--seed", "3"]].concat());
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let (mean, se) = (v["mean"].as_f64().unwrap(), v["std_error"].as_f64().unwrap());
    assert!((mean - 0.75).abs() < 4.0 * se, "{mean} {se}");
}

#[test]
fn expected_degenerate_has_zero_std_error() {
    let dir = TempDir::new().unwrap();
    let logits = write(&dir, "logits.csv", "0,-1000\n-1000,0\n");
    let reference = write(&dir, "ref.txt", "0 1\n");
    let out = run(&["expected", "--logits", s(&logits), "--ref", s(&reference), "--samples", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["std_error"], 0.0);
    assert_eq!(v["mean"], 1.0);
}

#[test]
fn expected_over_cap_exits_4() {
    let dir = TempDir::new().unwrap();
    let logits = write(&dir, "logits.csv", &"0,0,0,0,0,0,0,0,0,0\n".repeat(8));
    let reference = write(&dir, "ref.txt", "0 1\n");
    let out = run(&["expected", "--logits", s(&logits), "--ref", s(&reference), "--mode", "exhaustive"]);
    assert_eq!(out.status.code(), Some(4));

    let small = write(&dir, "small.csv", "0,0\n0,0\n0,0\n");
    let out = bin()
        .args(["expected", "--logits", s(&small), "--ref", s(&reference), "--mode", "exhaustive"])
        .env("BLEUBOUND_ENUM_CAP", "7")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn gradcheck_passes_and_is_deterministic() {
    let args = ["gradcheck", "--instances", "30", "--seed", "5"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(v["instances"], 30);
}

#[test]
fn gradcheck_catches_corrupted_gradient() {
    let out = run(&["gradcheck", "--instances", "5", "--corrupt", "1e-2"]);
    assert_eq!(out.status.code(), Some(1));
    let v = stdout_json(&out);
    assert!(v["max_rel_error"].as_f64().unwrap() >= 1e-4);
}

#[test]
fn toy_writes_curve_and_summary() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("curve.csv");
    let summary = dir.path().join("summary.json");
    let out = run(&[
        "toy", "--len", "4", "--vocab-size", "50", "--steps", "60", "--eval-every", "20", "--learning-rate", "0.05",
        "--samples", "256", "--output", s(&csv), "--summary", s(&summary),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,lb,exact_argmax_bleu,mc_mean,mc_stderr");
    assert_eq!(lines.len(), 1 + 60 / 20 + 1);
    let s: Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    for key in ["initial_exact_bleu", "final_exact_bleu", "correlation"] {
        assert!(s.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn toy_config_file_and_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "toy.json",
        r#"{"len": 3, "vocab_size": 20, "steps": 10, "eval_every": 5, "learning_rate": 0.1, "mc_samples": 128, "seed": 4}"#,
    );
    let a = run(&["toy", "--config", s(&cfg), "--format", "json"]);
    let b = run(&["toy", "--config", s(&cfg), "--format", "json", "--threads", "1"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["config"]["seed"], 4);
    assert_eq!(v["curve"].as_array().unwrap().len(), 3);
}

#[test]
fn toy_invalid_config_exits_2() {
    let out = run(&["toy", "--len", "2", "--max-order", "3", "--steps", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("len"));
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.json", r#"{"stepz": 3}"#);
    assert_eq!(run(&["toy", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn compare_grad_report() {
    let a = run(&["compare-grad", "--seed", "1", "--max-order", "2", "--samples", "500"]);
    let b = run(&["compare-grad", "--seed", "2", "--max-order", "2", "--samples", "500"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let (a, b) = (stdout_json(&a), stdout_json(&b));
    assert_eq!(a["lb_deterministic"], true);
    assert!(a["lb_variance"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).all(|x| x == 0.0));
    let rows = a["reinforce"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let plain: Vec<f64> = rows
        .iter()
        .filter(|r| r["baseline"] == "none")
        .map(|r| r["mean_variance"].as_f64().unwrap())
        .collect();
    assert!(plain[0] > plain[1] && plain[1] > plain[2], "{plain:?}");
    assert_ne!(a["reference"], Value::Null);
    assert!(b["exact_grad"].is_array());
}

#[test]
fn compare_grad_from_files_and_over_cap() {
    let dir = TempDir::new().unwrap();
    let logits = write(&dir, "logits.csv", "0.3,-0.2\n0.1,0.4\n");
    let reference = write(&dir, "ref.txt", "0 1\n");
    let out = run(&["compare-grad", "--logits", s(&logits), "--ref", s(&reference), "--max-order", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert!(v["cosine_lb_exact"].as_f64().unwrap() > 0.0);

    let out = run(&["compare-grad", "--len", "7", "--vocab-size", "10", "--max-order", "1"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn json_only_commands_reject_csv() {
    assert_eq!(run(&["gradcheck", "--format", "csv"]).status.code(), Some(2));
}
