use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn report(&self) -> HashMap<String, String> {
        self.stdout
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn get(&self, key: &str) -> String {
        self.report()
            .remove(key)
            .unwrap_or_else(|| panic!("missing {key} in:\n{}", self.stdout))
    }

    fn float(&self, key: &str) -> f64 {
        self.get(key).parse().unwrap()
    }
}

fn xspn_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_xspn"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    Run {
        code: status.code().unwrap_or(-1),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

fn xspn(args: &[&str]) -> Run {
    xspn_env(args, &[])
}

fn ok(args: &[&str]) -> Run {
    let run = xspn(args);
    assert_eq!(run.code, 0, "xspn {args:?} failed:\n{}", run.stderr);
    run
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(p: &Path) -> Vec<Vec<u8>> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with(['0', '1']))
        .map(|l| l.split(',').map(|t| t.parse().unwrap()).collect())
        .collect()
}

fn generate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let out = path(dir, name);
    let mut args = vec!["generate", "--out", s(&out)];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn parity_rows_have_even_weight() {
    let dir = TempDir::new().unwrap();
    let out = generate(&dir, "p.txt", &["--kind", "parity", "--n", "12", "--samples", "300", "--seed", "4"]);
    let data = rows(&out);
    assert_eq!(data.len(), 300);
    assert!(data.iter().all(|r| r.len() == 12 && r.iter().map(|&v| v as usize).sum::<usize>() % 2 == 0));
}

#[test]
fn generation_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let a = generate(&dir, "a.txt", &["--kind", "exact", "--n", "15", "--samples", "50", "--seed", "9"]);
    let b = generate(&dir, "b.txt", &["--kind", "exact", "--n", "15", "--samples", "50", "--seed", "9"]);
    let c = generate(&dir, "c.txt", &["--kind", "exact", "--n", "15", "--samples", "50", "--seed", "10"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "x.txt");
    let run = xspn(&["generate", "--kind", "parity", "--n", "0", "--samples", "5", "--out", s(&out)]);
    assert_eq!(run.code, 2, "{}", run.stderr);
    let run = xspn(&["generate", "--kind", "threshold", "--n", "5", "--samples", "5", "--out", s(&out)]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("--bound"));
    let run = xspn(&["train", "--train", s(&out)]);
    assert_eq!(run.code, 2);
}

#[test]
fn train_eval_and_marginals() {
    let dir = TempDir::new().unwrap();
    let train = generate(&dir, "train.txt", &["--kind", "parity", "--n", "8", "--samples", "1000", "--seed", "1"]);
    let test = generate(&dir, "test.txt", &["--kind", "parity", "--n", "8", "--samples", "200", "--seed", "2"]);
    let model = path(&dir, "m.json");
    let run = ok(&["train", "--train", s(&train), "--test", s(&test), "--out", s(&model)]);
    assert_eq!(run.get("leaves.exchangeable_counting"), "1");
    assert_eq!(run.get("nodes"), "1");
    assert_eq!(run.get("parameters"), "9");
    let train_ll = run.float("test_mean_log_likelihood");
    assert!((train_ll + 7.0 * 2f64.ln()).abs() < 0.01, "{train_ll}");

    let eval = ok(&["eval", "--model", s(&model), "--data", s(&test)]);
    assert_eq!(eval.float("mean_log_likelihood"), train_ll);

    let none = path(&dir, "none.txt");
    fs::write(&none, "0,0,0,0,0,0,0,0\n").unwrap();
    let m = ok(&["eval", "--model", s(&model), "--data", s(&test), "--marginal", s(&none)]);
    assert!(m.float("mean_log_likelihood").abs() < 1e-12);

    let all = path(&dir, "all.txt");
    fs::write(&all, "1,1,1,1,1,1,1,1\n").unwrap();
    let m = ok(&["eval", "--model", s(&model), "--data", s(&test), "--marginal", s(&all)]);
    assert!((m.float("mean_log_likelihood") - train_ll).abs() < 1e-12);

    let one_missing = path(&dir, "seven.txt");
    fs::write(&one_missing, "1,1,1,1,1,1,1,0\n").unwrap();
    let m = ok(&["eval", "--model", s(&model), "--data", s(&test), "--marginal", s(&one_missing)]);
    assert!((m.float("mean_log_likelihood") + 7.0 * 2f64.ln()).abs() < 0.02);

    let bad_mask = path(&dir, "bad.txt");
    fs::write(&bad_mask, "1,1\n").unwrap();
    let run = xspn(&["eval", "--model", s(&model), "--data", s(&test), "--marginal", s(&bad_mask)]);
    assert_eq!(run.code, 2);

    let v = ok(&["validate", "--model", s(&model)]);
    assert_eq!(v.get("valid"), "true");
    let i = ok(&["inspect", "--model", s(&model), "--tests", s(&train)]);
    assert_eq!(i.get("root"), "leaf:exchangeable_counting");
    assert_eq!(i.get("node.0.exchangeable"), "true");
}

#[test]
fn spn_variant_uses_univariate_leaves() {
    let dir = TempDir::new().unwrap();
    let train = generate(&dir, "t.txt", &["--kind", "exact", "--n", "6", "--samples", "600", "--seed", "3"]);
    let model = path(&dir, "m.json");
    let run = ok(&["train", "--train", s(&train), "--out", s(&model), "--variant", "SPN", "--min-instances", "50"]);
    assert_eq!(run.get("variant"), "SPN");
    assert_eq!(run.get("leaves.exchangeable_counting"), "0");
    assert_eq!(run.get("leaves.chow_liu"), "0");
    assert_eq!(run.get("exchangeability_tests"), "0");
}

#[test]
fn corrupted_model_reports_field_path() {
    let dir = TempDir::new().unwrap();
    let train = generate(&dir, "t.txt", &["--kind", "parity", "--n", "4", "--samples", "300", "--seed", "5"]);
    let model = path(&dir, "m.json");
    ok(&["train", "--train", s(&train), "--out", s(&model)]);
    let text = fs::read_to_string(&model).unwrap().replacen("\"weights\"", "\"wieghts\"", 1);
    fs::write(&model, text).unwrap();
    let run = xspn(&["eval", "--model", s(&model), "--data", s(&train)]);
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("schema error at $.nodes[0]"), "{}", run.stderr);
    assert!(run.stderr.contains("weights"), "{}", run.stderr);
}

#[test]
fn invalid_structure_fails_validation() {
    let dir = TempDir::new().unwrap();
    let train = generate(&dir, "t.txt", &["--kind", "parity", "--n", "4", "--samples", "300", "--seed", "5"]);
    let model = path(&dir, "m.json");
    ok(&["train", "--train", s(&train), "--out", s(&model)]);
    let text = fs::read_to_string(&model).unwrap().replacen("\"variable_count\": 4", "\"variable_count\": 5", 1);
    fs::write(&model, text).unwrap();
    let run = xspn(&["validate", "--model", s(&model)]);
    assert_eq!(run.code, 3);
    assert_eq!(run.get("valid"), "false");
    assert!(run.stderr.contains("root scope"), "{}", run.stderr);
}

#[test]
fn missing_and_malformed_files_exit_3() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "nope.txt");
    let run = xspn(&["train", "--train", s(&missing), "--out", s(&path(&dir, "m.json"))]);
    assert_eq!(run.code, 3);
    let bad = path(&dir, "bad.txt");
    fs::write(&bad, "0,1,1\n1,0,1\n1,2,0\n").unwrap();
    let run = xspn(&["train", "--train", s(&bad), "--out", s(&path(&dir, "m.json"))]);
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("line 3"), "{}", run.stderr);
}

#[test]
fn full_test_over_capacity_exits_4() {
    let dir = TempDir::new().unwrap();
    let train = generate(&dir, "t.txt", &["--kind", "parity", "--n", "10", "--samples", "50", "--seed", "5"]);
    let run = xspn(&["train", "--train", s(&train), "--out", s(&path(&dir, "m.json")), "--test-mode", "full"]);
    assert_eq!(run.code, 4, "{}", run.stderr);
    let run = xspn(&[
        "train",
        "--train",
        s(&train),
        "--out",
        s(&path(&dir, "m.json")),
        "--test-mode",
        "full",
        "--full-test-max-vars",
        "10",
    ]);
    assert_eq!(run.code, 0, "{}", run.stderr);
}

#[test]
fn parity_classification_separates_variants() {
    let dir = TempDir::new().unwrap();
    let common = ["--kind", "parity", "--n", "12", "--labeled"];
    let train = generate(&dir, "train.txt", &[&common[..], &["--samples", "2000", "--seed", "11"]].concat());
    let test = generate(&dir, "test.txt", &[&common[..], &["--samples", "500", "--seed", "12"]].concat());
    assert!(rows(&train).iter().all(|r| r.len() == 13));
    let clf = path(&dir, "clf.json");
    let x = ok(&["classify", "--train", s(&train), "--test", s(&test), "--out", s(&clf)]);
    assert_eq!(x.get("classes"), "2");
    assert!(x.float("accuracy") >= 0.98, "{}", x.stdout);
    assert!(fs::read_to_string(&clf).unwrap().contains("xspn-classifier/1"));
    let spn = ok(&["classify", "--train", s(&train), "--test", s(&test), "--variant", "SPN"]);
    assert!(spn.float("accuracy") <= 0.6, "{}", spn.stdout);
}

#[test]
fn single_class_test_set_is_reported() {
    let dir = TempDir::new().unwrap();
    let train = generate(
        &dir,
        "train.txt",
        &["--kind", "parity", "--n", "6", "--labeled", "--samples", "400", "--seed", "1"],
    );
    let test = path(&dir, "test.txt");
    fs::write(&test, "0,0,0,0,0,0,1\n1,1,0,0,0,0,1\n").unwrap();
    let run = ok(&["classify", "--train", s(&train), "--test", s(&test)]);
    assert_eq!(run.get("class.0.test_rows"), "0");
    assert_eq!(run.get("class.0.accuracy"), "n/a");
    assert_eq!(run.get("class.1.test_rows"), "2");
    assert_eq!(run.float("accuracy"), 1.0);
}

#[test]
fn grid_keeps_best_validation_model() {
    let dir = TempDir::new().unwrap();
    let train = generate(&dir, "t.txt", &["--kind", "exact", "--n", "6", "--samples", "400", "--seed", "1"]);
    let valid = generate(&dir, "v.txt", &["--kind", "exact", "--n", "6", "--samples", "200", "--seed", "2"]);
    let out = path(&dir, "best.json");
    let run = ok(&["grid", "--train", s(&train), "--valid", s(&valid), "--out", s(&out)]);
    let configs: Vec<f64> = run
        .stdout
        .lines()
        .filter(|l| l.starts_with("config."))
        .map(|l| l.rsplit(':').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(configs.len(), 16);
    let best = configs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(run.float("valid_mean_log_likelihood"), best);
    let eval = ok(&["eval", "--model", s(&out), "--data", s(&valid)]);
    assert_eq!(eval.float("mean_log_likelihood"), best);
}

#[test]
fn mevm_generation_reports_true_likelihood() {
    let dir = TempDir::new().unwrap();
    let run = ok(&[
        "generate",
        "--kind",
        "mevm",
        "--n",
        "20",
        "--samples",
        "100",
        "--seed",
        "3",
        "--out",
        s(&path(&dir, "m.txt")),
    ]);
    assert!(run.float("true_mean_log_likelihood") < 0.0);
    assert_eq!(run.get("columns"), "20");
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let train = generate(&dir, "t.txt", &["--kind", "exact", "--n", "8", "--samples", "500", "--seed", "1"]);
    let a = path(&dir, "a.json");
    let b = path(&dir, "b.json");
    let one = xspn_env(&["train", "--train", s(&train), "--out", s(&a), "--min-instances", "20"], &[("XSPN_THREADS", "1")]);
    assert_eq!(one.code, 0, "{}", one.stderr);
    let four = xspn_env(&["train", "--train", s(&train), "--out", s(&b), "--min-instances", "20"], &[("XSPN_THREADS", "4")]);
    assert_eq!(four.code, 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let bad = xspn_env(&["train", "--train", s(&train), "--out", s(&a)], &[("XSPN_THREADS", "many")]);
    assert_eq!(bad.code, 2);
}
