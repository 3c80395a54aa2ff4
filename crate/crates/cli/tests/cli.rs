//! End-to-end runs of the `sds` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sds"))
        .args(args)
        .output()
        .expect("spawn sds")
}

fn ok(args: &[&str]) -> String {
    let out = sds(args);
    assert!(
        out.status.success(),
        "sds {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small 4-class mixture split into parts under `dir`.
fn prepared(dir: &Path) -> PathBuf {
    ok(&[
        "generate",
        "--classes",
        "4",
        "--dimension",
        "2",
        "--per-class",
        "30",
        "--within-sigma",
        "0.5",
        "--out",
        p(dir),
    ]);
    ok(&["split", p(&dir.join("mixture.csv")), "--out", p(dir)]);
    dir.join("mixture.s.csv")
}

const SMALL_NET: [&str; 6] = ["--hidden", "16,16", "--embed-dim", "4", "--epochs", "3"];

#[test]
fn split_preserves_rows_and_classes() {
    let dir = tempfile::tempdir().unwrap();
    prepared(dir.path());
    let rows = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap().lines().count();
    assert_eq!(
        rows("mixture.g.csv") + rows("mixture.s.csv") + rows("mixture.e.csv"),
        120
    );
    let e = std::fs::read_to_string(dir.path().join("mixture.e.csv")).unwrap();
    for c in 0..4 {
        let n = e.lines().filter(|l| l.ends_with(&format!(",{c}"))).count();
        assert_eq!(n, 6);
    }
}

#[test]
fn train_then_score_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = prepared(dir.path());
    let mut args = vec!["train", p(&s), "--out", p(dir.path())];
    args.extend(SMALL_NET);
    let log = ok(&args);
    assert!(log.contains("epoch    3"));
    let model = dir.path().join("model.json");
    let stdout = ok(&[
        "score",
        "--model",
        p(&model),
        "--real",
        p(&s),
        "--fake",
        p(&s),
        "--out",
        p(dir.path()),
        "--mmd",
    ]);
    assert!(stdout.contains("aggregate_sds 0\n"), "{stdout}");
    assert!(stdout.contains("mmd2 0\n"));
    let report = std::fs::read_to_string(dir.path().join("sds-report.csv")).unwrap();
    assert!(report.starts_with("index,assigned_class,sds\n"));
    assert!(report.ends_with("aggregate,,0.0\n"));
}

#[test]
fn unlabeled_fakes_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let s = prepared(dir.path());
    let mut args = vec!["train", p(&s), "--out", p(dir.path())];
    args.extend(SMALL_NET);
    ok(&args);
    let fake = dir.path().join("fake.csv");
    std::fs::write(&fake, "x,y\n0.5,9.0\n-10.0,0.2\n").unwrap();
    let stdout = ok(&[
        "score",
        "--model",
        p(&dir.path().join("model.json")),
        "--real",
        p(&s),
        "--fake",
        p(&fake),
        "--out",
        p(dir.path()),
    ]);
    assert!(stdout.starts_with("aggregate_sds "));
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let s = prepared(dir.path());

    let missing = sds(&["split", p(&dir.path().join("nope.csv"))]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));

    let zero = sds(&["train", p(&s), "--margin", "0", "--out", p(dir.path())]);
    assert!(!zero.status.success());
    assert!(String::from_utf8_lossy(&zero.stderr).contains("margin"));

    let one_class = dir.path().join("one.csv");
    std::fs::write(&one_class, "1,2,0\n2,3,0\n3,4,0\n").unwrap();
    assert!(!sds(&["train", p(&one_class), "--out", p(dir.path())]).status.success());

    let mut args = vec!["train", p(&s), "--out", p(dir.path())];
    args.extend(SMALL_NET);
    ok(&args);
    let wide = dir.path().join("wide.csv");
    std::fs::write(&wide, "1,2,3,4,5,0\n1,2,3,4,5,1\n").unwrap();
    let mismatch = sds(&[
        "score",
        "--model",
        p(&dir.path().join("model.json")),
        "--real",
        p(&s),
        "--fake",
        p(&wide),
    ]);
    assert!(!mismatch.status.success());
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("dimension"));

    let unknown = sds(&["experiment", "bogus"]);
    assert!(!unknown.status.success());
    let err = String::from_utf8_lossy(&unknown.stderr);
    assert!(err.contains("mode") && err.contains("ranking"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = prepared(dir.path());
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        "# small run\ntrain.epochs = 2\ntrain.margin = 3.5\nnet.hidden = 8\nnet.embed_dim = 3\n",
    )
    .unwrap();
    ok(&[
        "train",
        p(&s),
        "--config",
        p(&cfg),
        "--margin",
        "2",
        "--out",
        p(dir.path()),
    ]);
    let report = std::fs::read_to_string(dir.path().join("train-report.csv")).unwrap();
    assert!(report.contains("margin,2.0\n"));
    assert!(report.contains("epochs,2\n"));
    let model = std::fs::read_to_string(dir.path().join("model.json")).unwrap();
    assert!(model.contains("\"embed_dim\": 3"));

    std::fs::write(&cfg, "train.epoch = 2\n").unwrap();
    assert!(!sds(&["train", p(&s), "--config", p(&cfg)]).status.success());
}

#[test]
fn seed_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["generate", "--per-class", "5", "--output", p(&a), "--seed", "1"]);
    ok(&["generate", "--per-class", "5", "--output", p(&b), "--seed", "2"]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn mode_experiment_writes_one_row_per_class_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mode.csv");
    let stdout = ok(&[
        "experiment",
        "mode",
        "--repetitions",
        "2",
        "--per-class",
        "20",
        "--hidden",
        "8",
        "--embed-dim",
        "4",
        "--epochs",
        "2",
        "--output",
        p(&out),
    ]);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(stdout.contains("minimum at i=5"));
    assert!(stdout.contains("PASS") || stdout.contains("FAIL"));
}

#[test]
fn experiment_default_name_has_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "experiment",
        "quality",
        "--repetitions",
        "1",
        "--classes",
        "3",
        "--per-class",
        "20",
        "--hidden",
        "8",
        "--embed-dim",
        "4",
        "--epochs",
        "2",
        "--out",
        p(dir.path()),
    ]);
    assert!(stdout.contains("spearman"));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 1);
    assert!(
        names[0].starts_with("quality-") && names[0].ends_with(".csv"),
        "{names:?}"
    );
}
