use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_avrgen");
const SUBCOMMANDS: [&str; 8] = ["generate", "render", "qa", "cot", "emit", "solve", "eval", "stats"];

fn avrgen(root: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("AVRGEN_OUTPUT_ROOT", root).env_remove("COLUMNS").output().unwrap()
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = avrgen(root, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(actual, expected, "help text for {name} changed; rerun with UPDATE_GOLDEN=1");
}

#[test]
fn help_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    golden("help.txt", &ok(dir.path(), &["--help"]));
    for sub in SUBCOMMANDS {
        golden(&format!("{sub}.txt"), &ok(dir.path(), &[sub, "--help"]));
    }
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(dir.path(), &["--help"]);
    for sub in SUBCOMMANDS {
        assert!(help.contains(sub), "{sub}");
    }
}

#[test]
fn bad_flag_prints_usage_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = avrgen(dir.path(), &["generate", "--bogus"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn solve_prints_the_single_answer() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--per-pattern", "2", "--seed", "5"]);
    let text = std::fs::read_to_string(dir.path().join("puzzles.jsonl")).unwrap();
    let first = text.lines().next().unwrap();
    let one = dir.path().join("one.json");
    std::fs::write(&one, first).unwrap();
    let answer: u8 = ok(dir.path(), &["solve", one.to_str().unwrap()]).trim().parse().unwrap();
    let record: serde_json::Value = serde_json::from_str(first).unwrap();
    assert_eq!(answer as u64, record["answer_position"].as_u64().unwrap());
    let all = ok(dir.path(), &["solve", dir.path().join("puzzles.jsonl").to_str().unwrap()]);
    assert_eq!(all.lines().count(), 14);
}

#[test]
fn empty_transcripts_fail_with_an_error_line() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["emit", "--stage", "test", "--preset", "desk"]);
    let key = dir.path().join("test/key.jsonl");
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = avrgen(dir.path(), &["eval", "--key", key.to_str().unwrap(), "--transcripts", empty.to_str().unwrap()]);
    assert!(!out.status.success());
    let line: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(line["error"], "empty_transcripts");
}

#[test]
fn eval_scores_oracle_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["emit", "--stage", "test", "--preset", "desk"]);
    let key = std::fs::read_to_string(dir.path().join("test/key.jsonl")).unwrap();
    let transcripts: String = key
        .lines()
        .map(|l| {
            let k: serde_json::Value = serde_json::from_str(l).unwrap();
            let t = serde_json::json!({"puzzle_id": k["puzzle_id"], "raw_output": format!("so the answer is {}", k["answer"])});
            format!("{t}\n")
        })
        .collect();
    let tp = dir.path().join("t.jsonl");
    std::fs::write(&tp, transcripts).unwrap();
    let key_path = dir.path().join("test/key.jsonl");
    let table = ok(dir.path(), &["eval", "--key", key_path.to_str().unwrap(), "--transcripts", tp.to_str().unwrap(), "--json-out", "report.json"]);
    assert!(table.contains("100.0"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["overall_accuracy"], 100.0);
    assert_eq!(report["total"], 140);
}

#[test]
fn emit_uses_the_output_root_and_finds_the_test_digest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["emit", "--stage", "test", "--preset", "desk"]);
    let out = ok(dir.path(), &["emit", "--stage", "stage1", "--preset", "desk"]);
    assert!(out.contains("RAVEN-VQA\t490"));
    let train = std::fs::read_to_string(dir.path().join("stage1/puzzle_ids.txt")).unwrap();
    let test = std::fs::read_to_string(dir.path().join("test/puzzle_ids.txt")).unwrap();
    let test: std::collections::BTreeSet<&str> = test.lines().collect();
    assert!(train.lines().all(|id| !test.contains(id)));
}

#[test]
fn worker_count_does_not_change_generate_output() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--per-pattern", "5", "--out", "a.jsonl", "--workers", "1"]);
    ok(dir.path(), &["generate", "--per-pattern", "5", "--out", "b.jsonl", "--workers", "4"]);
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stats_reports_uniqueness() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--per-pattern", "10"]);
    let out = ok(dir.path(), &["stats", dir.path().join("puzzles.jsonl").to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["total"], 70);
    assert_eq!(v["uniqueness"]["unique"], 70);
}

#[test]
fn config_file_sets_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "master_seed = 42\n").unwrap();
    ok(dir.path(), &["--config", cfg.to_str().unwrap(), "generate", "--per-pattern", "1", "--out", "c.jsonl"]);
    ok(dir.path(), &["--seed", "42", "generate", "--per-pattern", "1", "--out", "s.jsonl"]);
    assert_eq!(std::fs::read(dir.path().join("c.jsonl")).unwrap(), std::fs::read(dir.path().join("s.jsonl")).unwrap());
}
