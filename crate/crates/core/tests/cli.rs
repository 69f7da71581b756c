use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cldrd");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 200-document world with a config file wired to it.
struct World {
    _dir: tempfile::TempDir,
    root: PathBuf,
    world: PathBuf,
    config: PathBuf,
}

impl World {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let world = root.join("world");
        ok(&[
            "synth",
            "--seed",
            "1",
            "--num-topics",
            "10",
            "--docs-per-topic",
            "20",
            "--train-queries",
            "30",
            "--eval-queries",
            "15",
            "--out",
            s(&world),
        ]);
        let config = root.join("run.cfg");
        fs::write(
            &config,
            format!(
                "# small world\ncollection = {0}/collection.tsv\ntrain_queries = {0}/queries.train.tsv\neval_queries = {0}/queries.eval.tsv\neval_qrels = {0}/qrels.eval.txt\nteacher_file = {0}/oracle.grades.txt\ndim = 16\nvocab_size = 4096\nseed = 1\n",
                world.display()
            ),
        )
        .unwrap();
        World {
            _dir: dir,
            root,
            world,
            config,
        }
    }

    fn file(&self, name: &str) -> String {
        self.world.join(name).to_str().unwrap().to_owned()
    }

    fn train(&self, out: &str, extra: &[&str]) -> PathBuf {
        let out = self.root.join(out);
        let mut args = vec!["train", "--config", s(&self.config), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

fn metric_lines(stdout: &str) -> HashMap<String, f64> {
    stdout
        .lines()
        .filter_map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f.len() == 3).then(|| (format!("{}@{}", f[0], f[1]), f[2].parse().unwrap()))
        })
        .collect()
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "synth",
            "--seed",
            "9",
            "--num-topics",
            "5",
            "--docs-per-topic",
            "10",
            "--out",
            s(out),
        ]);
    }
    for name in [
        "collection.tsv",
        "queries.train.tsv",
        "queries.eval.tsv",
        "qrels.eval.txt",
        "oracle.grades.txt",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let docs = fs::read_to_string(a.join("collection.tsv")).unwrap();
    assert_eq!(docs.lines().count(), 50);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["synth"]).status.code(), Some(2));
    assert_eq!(run(&["train"]).status.code(), Some(2));
    let w = World::new();
    let out = run(&[
        "train",
        "--config",
        s(&w.config),
        "--set",
        "depth=150",
        "--out",
        s(&w.root.join("bad")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth"));
    let out = run(&["train", "--config", s(&w.config), "--set", "nonsense=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_checkpoints_and_log() {
    let w = World::new();
    let out = w.train("fwd", &["--iterations", "2"]);
    for name in [
        "init.ckpt",
        "iter1.ckpt",
        "iter2.ckpt",
        "data.iter1.tsv",
        "metrics.jsonl",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    assert!(!out.join("iter3.ckpt").exists());
    let log = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    let ks: Vec<u64> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter_map(|v| v.get("k").and_then(|k| k.as_u64()))
        .collect();
    assert_eq!(ks, [5, 10]);
}

#[test]
fn reverse_runs_hardest_first() {
    let w = World::new();
    let out = w.train("rev", &["--reverse"]);
    let log = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    let ks: Vec<u64> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter_map(|v| v.get("k").and_then(|k| k.as_u64()))
        .collect();
    assert_eq!(ks, [30, 10, 5]);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let w = World::new();
    let out = w.train("frozen", &["--peak-lr", "0"]);
    assert_eq!(
        fs::read(out.join("init.ckpt")).unwrap(),
        fs::read(out.join("iter3.ckpt")).unwrap()
    );
}

#[test]
fn retrieve_respects_cutoff_and_compares() {
    let w = World::new();
    let out = w.train("fwd", &["--iterations", "1"]);
    let ckpt = out.join("iter1.ckpt");
    let index = w.root.join("ix.bin");
    ok(&[
        "index",
        "--config",
        s(&w.config),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&index),
    ]);
    let run_file = w.root.join("a.run");
    let stdout = ok(&[
        "retrieve",
        "--config",
        s(&w.config),
        "--checkpoint",
        s(&ckpt),
        "--index",
        s(&index),
        "--queries",
        &w.file("queries.eval.tsv"),
        "--k",
        "10",
        "--out",
        s(&run_file),
        "--qrels",
        &w.file("qrels.eval.txt"),
        "--compare",
        s(&run_file),
    ]);
    let mut per_query: HashMap<String, usize> = HashMap::new();
    for line in fs::read_to_string(&run_file).unwrap().lines() {
        *per_query
            .entry(line.split(' ').next().unwrap().to_owned())
            .or_default() += 1;
    }
    assert_eq!(per_query.len(), 15);
    assert!(per_query.values().all(|&n| n == 10));
    let metrics = metric_lines(&stdout);
    assert!(metrics.contains_key("mrr@10"), "{stdout}");
    let compare: Vec<&str> = stdout.lines().filter(|l| l.contains("\tp ")).collect();
    assert_eq!(compare.len(), 3);
    assert!(compare.iter().all(|l| l.contains("p 1.0000")), "{stdout}");
}

#[test]
fn oracle_rerank_is_perfect() {
    let w = World::new();
    let run_file = w.root.join("teacher.run");
    let stdout = ok(&[
        "rerank",
        "--config",
        s(&w.config),
        "--teacher",
        "oracle",
        "--queries",
        &w.file("queries.eval.tsv"),
        "--k",
        "100",
        "--out",
        s(&run_file),
        "--qrels",
        &w.file("qrels.eval.txt"),
    ]);
    let m = metric_lines(&stdout);
    assert_eq!(m["mrr@10"], 1.0, "{stdout}");
    let eval = ok(&[
        "evaluate",
        "--config",
        s(&w.config),
        "--run",
        s(&run_file),
        "--qrels",
        &w.file("qrels.eval.txt"),
    ]);
    assert_eq!(metric_lines(&eval), m);
}
