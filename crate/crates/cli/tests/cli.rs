use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use selftrain::metrics::{parse_report_tsv, TSV_HEADER};

fn selftrain(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_selftrain"));
    cmd.args(args).env_remove("SELFTRAIN_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

const SYNTH: &str = r#"
[data.synthetic]
num_classes = 4
feature_dim = 6
n_labeled = 40
n_unlabeled = 400
n_test = 80
class_separation = 3.0
ood_fraction = 0.25
seed = 5
"#;

fn experiment(mode: &str, iterations: usize) -> String {
    format!(
        r#"
[experiment]
mode = "{mode}"
m_fraction = 1.0
p = 50
iterations = {iterations}
seed = 3

[[experiment.models]]
kind = "softmax-linear"
[[experiment.models]]
kind = "mlp"
hidden = [8]
activation = "relu"
[[experiment.models]]
kind = "mlp"
hidden = [8, 4]
activation = "tanh"

[experiment.train]
epochs = 3
learning_rate = 0.01
"#
    )
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, format!("schema = 1\n{body}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(config: &str, out: &Path) -> String {
    ok(&selftrain(&["run", "--config", config, "--out", out.to_str().unwrap()], &[]))
}

#[test]
fn gen_data_writes_deterministic_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gen.toml", &format!("{SYNTH}{}", experiment("all", 1)));
    let stdout = ok(&selftrain(&["gen-data", "--config", &cfg], &[]));
    assert!(stdout.contains("unlabeled 400 (100 out-of-distribution)"), "{stdout}");
    let data = dir.path().join("data");
    let names = ["labeled.csv", "unlabeled.csv", "test.csv", "hidden_labels.csv"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| fs::read(data.join(n)).unwrap()).collect();
    ok(&selftrain(&["gen-data", "--config", &cfg], &[]));
    let second: Vec<Vec<u8>> = names.iter().map(|n| fs::read(data.join(n)).unwrap()).collect();
    assert_eq!(first, second);
    let hidden = String::from_utf8(first[3].clone()).unwrap();
    assert_eq!(hidden.lines().next(), Some("origin_id,class,ood"));
    assert_eq!(hidden.lines().filter(|l| l.ends_with(",true")).count(), 100);
}

#[test]
fn gen_data_marks_ood_rows_at_scale() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[data.synthetic]\nnum_classes = 10\nfeature_dim = 2\nn_labeled = 500\nn_unlabeled = 50000\nn_test = 8000\nclass_separation = 2.0\nood_fraction = 0.2\n[experiment]\np = 1\niterations = 0\n";
    let cfg = write_config(dir.path(), "gen.toml", body);
    ok(&selftrain(&["gen-data", "--config", &cfg], &[]));
    let hidden = fs::read_to_string(dir.path().join("data/hidden_labels.csv")).unwrap();
    assert_eq!(hidden.lines().filter(|l| l.ends_with(",true")).count(), 10_000);
    assert_eq!(fs::read_to_string(dir.path().join("data/test.csv")).unwrap().lines().count(), 8001);
}

#[test]
fn full_comparison_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &format!("{SYNTH}{}", experiment("all", 3)));
    let out = dir.path().join("out");
    let stdout = run(&cfg, &out);
    assert!(stdout.contains("journal"));

    let tsv = fs::read_to_string(out.join("report.tsv")).unwrap();
    assert_eq!(tsv.lines().next(), Some(TSV_HEADER));
    let rows = parse_report_tsv(&tsv).unwrap();
    assert_eq!(rows.len(), 11 * 4);
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("Iter 3"));
    assert_eq!(text.matches("ensemble-with-subsample").count(), 8);

    // report regenerated from the journal alone matches
    let journal = out.join("journal.jsonl");
    let regenerated = ok(&selftrain(&["report", "--journal", journal.to_str().unwrap()], &[]));
    assert_eq!(regenerated, text);
    assert_eq!(fs::read_to_string(&journal).unwrap().lines().count(), 5 * 4);

    // audits: one per chain and round, sorted by entropy
    let audits: Vec<_> = fs::read_dir(out.join("audit")).unwrap().collect();
    assert_eq!(audits.len(), 5 * 4);
    let audit = fs::read_to_string(out.join("audit/ensemble-with-subsample-chain0-iter1.csv")).unwrap();
    let mut lines = audit.lines();
    assert_eq!(
        lines.next().unwrap(),
        "origin_id,member1_max_prob,member2_max_prob,member3_max_prob,mean_prob_0,mean_prob_1,mean_prob_2,mean_prob_3,entropy,pseudo_label"
    );
    let entropies: Vec<f64> = lines.map(|l| l.split(',').nth(8).unwrap().parse().unwrap()).collect();
    assert_eq!(entropies.len(), 50);
    assert!(entropies.windows(2).all(|w| w[0] <= w[1]));
    assert!(out.join("models/ensemble-no-subsample-chain0-member3.json").exists());
    assert!(out.join("models/non-ensemble-chain2-member1.json").exists());
}

#[test]
fn rerun_gives_identical_journal_and_thread_count_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &format!("{SYNTH}{}", experiment("ensemble-with-subsample", 2)));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let sha = |s: &str| s.lines().last().unwrap().split_whitespace().last().unwrap().to_string();
    let first = run(&cfg, &a);
    let second = ok(&selftrain(&["run", "--config", &cfg, "--out", b.to_str().unwrap()], &[("SELFTRAIN_THREADS", "1")]));
    assert_eq!(sha(&first), sha(&second));
    assert_eq!(fs::read(a.join("journal.jsonl")).unwrap(), fs::read(b.join("journal.jsonl")).unwrap());
}

#[test]
fn base_only_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &format!("{SYNTH}{}", experiment("non-ensemble", 0)));
    let out = dir.path().join("out");
    run(&cfg, &out);
    let rows = parse_report_tsv(&fs::read_to_string(out.join("report.tsv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].model, "1:softmax-linear");
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("Base (n=40)") && !text.contains("Iter 1"));
}

#[test]
fn csv_source_reproduces_synthetic_run() {
    let dir = tempfile::tempdir().unwrap();
    let exp = experiment("ensemble-with-subsample", 1);
    let gen = write_config(dir.path(), "gen.toml", &format!("{SYNTH}{exp}"));
    ok(&selftrain(&["gen-data", "--config", &gen], &[]));
    let csv = "[data.csv]\nlabeled = \"data/labeled.csv\"\nunlabeled = \"data/unlabeled.csv\"\ntest = \"data/test.csv\"\nhidden_labels = \"data/hidden_labels.csv\"\nnum_classes = 4\n";
    let from_csv = write_config(dir.path(), "csv.toml", &format!("{csv}{exp}"));
    run(&gen, &dir.path().join("synth"));
    run(&from_csv, &dir.path().join("csv"));
    let a = fs::read_to_string(dir.path().join("synth/report.tsv")).unwrap();
    let b = fs::read_to_string(dir.path().join("csv/report.tsv")).unwrap();
    assert_eq!(a, b);
    assert!(parse_report_tsv(&a).unwrap().iter().any(|r| r.pseudo_label_precision.is_some()));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // config error
    let bad = write_config(dir.path(), "bad.toml", &format!("{SYNTH}{}", experiment("bagging", 1)));
    let out = selftrain(&["run", "--config", &bad, "--out", dir.path().join("x").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error[config]: ") && err.trim_end().lines().count() == 1, "{err}");

    let usage = selftrain(&["run"], &[]);
    assert_eq!(usage.status.code(), Some(1));

    let cfg = write_config(dir.path(), "ok.toml", &format!("{SYNTH}{}", experiment("non-ensemble", 0)));
    let threads = selftrain(&["run", "--config", &cfg, "--out", dir.path().join("t").to_str().unwrap()], &[("SELFTRAIN_THREADS", "zero")]);
    assert_eq!(threads.status.code(), Some(1));

    // data errors
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = selftrain(&["report", "--journal", empty.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[data]: "));

    let corrupt = dir.path().join("corrupt.jsonl");
    fs::write(&corrupt, "{\"schema\": 1}\n").unwrap();
    let out = selftrain(&["report", "--journal", corrupt.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 1"));

    let missing = "[data.csv]\nlabeled = \"nope.csv\"\nunlabeled = \"nope.csv\"\ntest = \"nope.csv\"\n";
    let cfg = write_config(dir.path(), "missing.toml", &format!("{missing}{}", experiment("non-ensemble", 0)));
    let out = selftrain(&["run", "--config", &cfg, "--out", dir.path().join("m").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));

    // divergence
    fs::write(dir.path().join("l.csv"), "f1,f2,label\n1e300,-1e300,0\n0,1,1\n").unwrap();
    fs::write(dir.path().join("u.csv"), "f1,f2\n0.5,0.5\n").unwrap();
    let diverge = "[data.csv]\nlabeled = \"l.csv\"\nunlabeled = \"u.csv\"\ntest = \"l.csv\"\n[experiment]\nmode = \"non-ensemble\"\np = 1\niterations = 1\n[[experiment.models]]\nkind = \"softmax-linear\"\n[experiment.train]\nepochs = 5\nlearning_rate = 1e10\n";
    let cfg = write_config(dir.path(), "diverge.toml", diverge);
    let out = selftrain(&["run", "--config", &cfg, "--out", dir.path().join("d").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).starts_with("error[divergence]: "));
}
