use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SEQUENCE: [&str; 8] = ["ingest", "train", "attack", "pretrain-ie", "unlearn", "finetune", "retrain", "evaluate"];

fn toy_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy.conf")
}

fn run(run_dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_unlearnrec"))
        .arg("--run-dir")
        .arg(run_dir)
        .args(args)
        .env_remove("UNLREC_RUN_DIR")
        .output()
        .expect("binary runs");
    eprintln!("{args:?}: {}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    out
}

fn stage(run_dir: &Path, name: &str) -> Output {
    let config = toy_config();
    if name == "ingest" {
        run(run_dir, &["--config", config.to_str().unwrap(), name])
    } else {
        run(run_dir, &[name])
    }
}

fn full_run(run_dir: &Path) {
    for name in SEQUENCE {
        let out = stage(run_dir, name);
        assert_eq!(out.status.code(), Some(0), "{name}");
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert_eq!(stdout.lines().count(), 1, "one summary line from {name}");
        assert!(stdout.starts_with(name), "{stdout}");
    }
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn full_sequence_report_and_idempotency() {
    let dataset = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy.tsv");
    let dataset_bytes = fs::read(&dataset).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    full_run(&a);

    for rel in [
        "metrics.csv",
        "config.txt",
        "manifest.txt",
        "attack_edges.tsv",
        "logs/train.csv",
        "data/id_map.tsv",
        "checkpoints/ours0.e0.mat",
        "scores/ours.csv",
    ] {
        assert!(a.join(rel).exists(), "{rel}");
    }
    assert!(!a.join(".lock").exists());
    assert!(fs::read_to_string(a.join("logs/train.csv")).unwrap().starts_with("epoch,loss\n"));
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed=2024"));
    assert!(manifest.contains("dataset_sha256="));
    assert!(manifest.contains("checkpoints/encoder.h0.mat\t"));

    let out = run(&a, &["report"]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5, "{table}");
    for column in ["recall@10", "ndcg@10", "mi_bf", "mi_ng"] {
        assert!(lines[0].contains(column), "{table}");
    }
    for (line, label) in lines[1..].iter().zip(["before", "ours(0)", "ours(finetuned)", "retrain"]) {
        assert!(line.starts_with(label), "{table}");
        assert!(!line.contains(" -"), "every stage has every metric: {table}");
    }

    // Rerunning every stage in place, or in a fresh directory, reproduces every byte.
    let first = snapshot(&a);
    for name in SEQUENCE {
        assert_eq!(stage(&a, name).status.code(), Some(0));
    }
    assert_eq!(snapshot(&a), first);
    let b = tmp.path().join("b");
    full_run(&b);
    assert_eq!(snapshot(&b), first);

    assert_eq!(fs::read(&dataset).unwrap(), dataset_bytes);
}

#[test]
fn missing_prerequisites_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = run(&dir, &["evaluate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifact"));

    assert_eq!(stage(&dir, "ingest").status.code(), Some(0));
    let out = run(&dir, &["evaluate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clean") || String::from_utf8_lossy(&out.stderr).contains("attack"));
    assert_eq!(run(&dir, &["unlearn"]).status.code(), Some(2));
    assert_eq!(run(&dir, &["report"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_3_and_keeps_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    assert_eq!(stage(&dir, "ingest").status.code(), Some(0));
    let config = fs::read(dir.join("config.txt")).unwrap();
    let out = run(&dir, &["train", "--set", "lr_backbone=1e300"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.join("checkpoints/clean.e0.mat").exists());
    assert_eq!(fs::read(dir.join("config.txt")).unwrap(), config);
}

#[test]
fn config_errors_and_lock() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = run(&dir, &["train", "--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "dim=8\nlayers=abc\n").unwrap();
    let out = run(&dir, &["--config", conf.to_str().unwrap(), "train"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("layers") && err.contains(":2"), "{err}");

    assert_eq!(stage(&dir, "ingest").status.code(), Some(0));
    fs::write(dir.join(".lock"), "").unwrap();
    let out = run(&dir, &["train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
    assert!(dir.join(".lock").exists(), "a foreign lock is left alone");
}

#[test]
fn seed_flag_changes_the_split() {
    let tmp = tempfile::tempdir().unwrap();
    let config = toy_config();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run(&a, &["--config", config.to_str().unwrap(), "ingest"]).status.code(), Some(0));
    assert_eq!(run(&b, &["--config", config.to_str().unwrap(), "--seed", "7", "ingest"]).status.code(), Some(0));
    assert_ne!(fs::read(a.join("data/test.tsv")).unwrap(), fs::read(b.join("data/test.tsv")).unwrap());
    assert!(fs::read_to_string(b.join("config.txt")).unwrap().contains("seed=7\n"));
}
