mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowmine::fsa::Fsa;
use flowmine::trace::parse_trace;
use tempfile::TempDir;

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        let w = Work { dir: tempfile::tempdir().unwrap() };
        w.put("t.tbl", common::TABLE);
        w.put("f.flow", common::FLOWS);
        w.put("t4.trace", "1\n3\n5\n6\n4\n2\n3\n1\n5\n6\n2\n4\n");
        w.put("t5.trace", "1\n3\n2\n4\n");
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn put(&self, name: &str, text: &str) {
        fs::write(self.path(name), text).unwrap();
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_flowmine")).current_dir(self.dir.path()).args(args).output().unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_is_deterministic_per_seed() {
    let w = Work::new();
    let args = |seed: &'static str| {
        ["--table", "t.tbl", "gen", "--spec", "f.flow", "--instances", "4", "--seed", seed]
    };
    let a = w.run(&args("11"));
    let b = w.run(&args("11"));
    let c = w.run(&args("12"));
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    assert_ne!(stdout(&a), stdout(&c));
    let t = parse_trace(&stdout(&a), &common::table()).unwrap();
    assert_eq!(t.msg_count() % 2, 0);
    assert!(t.msg_count() >= 16);
}

#[test]
fn mine_then_eval_ground_truth_trace() {
    let w = Work::new();
    let g = w.run(&[
        "--table",
        "t.tbl",
        "gen",
        "--spec",
        "f.flow",
        "--instances",
        "5",
        "--seed",
        "3",
        "--gap",
        "4",
        "--out",
        "g.trace",
        "--truth",
        "gt.json",
    ]);
    assert_eq!(code(&g), 0, "{}", String::from_utf8_lossy(&g.stderr));

    let m = w.run(&["--table", "t.tbl", "mine", "--trace", "g.trace", "--out", "out"]);
    assert_eq!(code(&m), 0, "{}", String::from_utf8_lossy(&m.stderr));
    for f in ["model.json", "model.dot", "graph.json", "report.json"] {
        assert!(w.path("out").join(f).exists(), "{f} missing");
    }
    let model = Fsa::from_json(&w.read("out/model.json")).unwrap();
    assert!(model.transition_count() > 0);
    let report: serde_json::Value = serde_json::from_str(&w.read("out/report.json")).unwrap();
    assert!(report["summary"]["best_size"].as_u64().unwrap() > 0);

    let e = w.run(&["--table", "t.tbl", "eval", "--model", "gt.json", "--trace", "g.trace"]);
    assert_eq!(code(&e), 0);
    let r: serde_json::Value = serde_json::from_str(&stdout(&e)).unwrap();
    assert_eq!(r["ratio"].as_f64(), Some(1.0));

    let e = w.run(&[
        "--table",
        "t.tbl",
        "eval",
        "--model",
        "out/model.json",
        "--trace",
        "g.trace",
        "--strategy",
        "exhaustive",
    ]);
    assert_eq!(code(&e), 0);
    let r: serde_json::Value = serde_json::from_str(&stdout(&e)).unwrap();
    assert!(r["ratio"].as_f64().unwrap() > 0.5);

    let d = w.run(&["dot", "--model", "out/model.json"]);
    assert_eq!(code(&d), 0);
    assert!(stdout(&d).starts_with("digraph"));
}

#[test]
fn slice_writes_a_partition() {
    let w = Work::new();
    let g = w.run(&[
        "--table",
        "t.tbl",
        "gen",
        "--spec",
        "f.flow",
        "--instances",
        "3",
        "--seed",
        "5",
        "--pid",
        "--out",
        "p.trace",
    ]);
    assert_eq!(code(&g), 0);
    let s = w.run(&["--table", "t.tbl", "slice", "--trace", "p.trace", "--policy", "pid", "--out", "sl"]);
    assert_eq!(code(&s), 0, "{}", String::from_utf8_lossy(&s.stderr));

    let table = common::table();
    let whole = parse_trace(&w.read("p.trace"), &table).unwrap();
    let mut files: Vec<PathBuf> = fs::read_dir(w.path("sl")).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 6);
    let total: usize = files
        .iter()
        .map(|p: &PathBuf| parse_trace(&fs::read_to_string(p).unwrap(), &table).unwrap().msg_count())
        .sum();
    assert_eq!(total, whole.msg_count());
    assert!(files[0].file_name().unwrap().to_str().unwrap().starts_with("slice_"));
}

#[test]
fn export_smt_emits_script() {
    let w = Work::new();
    let o = w.run(&["--table", "t.tbl", "export-smt", "--trace", "t4.trace", "--window", "3"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("declare-const") || text.contains("declare-fun"));
    assert!(text.contains("check-sat"));
}

#[test]
fn exit_codes() {
    let w = Work::new();
    let infeasible =
        w.run(&["--table", "t.tbl", "mine", "--trace", "t4.trace", "--window", "0", "--out", "x"]);
    assert_eq!(code(&infeasible), 2);
    let capped =
        w.run(&["--table", "t.tbl", "mine", "--trace", "t4.trace", "--max-window", "0", "--out", "x"]);
    assert_eq!(code(&capped), 2);

    w.put("empty.trace", "");
    assert_eq!(code(&w.run(&["mine", "--trace", "empty.trace", "--out", "x"])), 1);
    assert_eq!(code(&w.run(&["mine", "--trace", "nope.trace", "--out", "x"])), 1);
    assert_eq!(code(&w.run(&["mine", "--bogus"])), 1);
    w.put("bad.trace", "1 2 3 (((\n");
    assert_eq!(code(&w.run(&["--table", "t.tbl", "mine", "--trace", "bad.trace", "--out", "x"])), 1);
    assert_eq!(code(&w.run(&["--help"])), 0);
    assert!(!Path::new(&w.path("x")).join("model.json").exists());
}

#[test]
fn config_file_supplies_defaults() {
    let w = Work::new();
    w.put("cfg.toml", "[gen]\ninstances = 2\nseed = 9\n");
    let a = w.run(&["--table", "t.tbl", "--config", "cfg.toml", "gen", "--spec", "f.flow"]);
    let b = w.run(&["--table", "t.tbl", "gen", "--spec", "f.flow", "--instances", "2", "--seed", "9"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));

    w.put("bad.toml", "[gen]\nmystery = 1\n");
    assert_eq!(code(&w.run(&["--config", "bad.toml", "gen", "--spec", "f.flow"])), 1);
}
