use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pair"))
        .args(args)
        .env_remove("PAIR_API_KEY")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` with its contents, keyed by relative path.
fn snapshot(dir: &Path, skip: &[&str]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                if !skip.iter().any(|k| rel.contains(k)) {
                    out.push((rel, read(&p)));
                }
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_writes_solved_instances_deterministically() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        let out =
            pair(&["gen", "--family", "rue", "--n", "10", "--count", "5", "--seed", "42", "--out", s(dir.path())]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let files = snapshot(a.path(), &[]);
    let instances: Vec<_> = files.iter().filter(|(p, _)| p.ends_with(".tsp")).collect();
    assert_eq!(instances.len(), 5);
    for (_, text) in &instances {
        assert!(text.lines().any(|l| l.starts_with("optimal_length ")));
    }
    assert_eq!(files, snapshot(b.path(), &[]));
    assert!(read(a.path().join("manifest.gen.txt")).contains("instances/rue-10-46.tsp"));
}

#[test]
fn gen_beyond_solver_cap_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = pair(&["gen", "--family", "rue", "--n", "30", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("capacity"));
}

fn gen_one(dir: &Path, n: &str) -> String {
    let out = pair(&["gen", "--family", "clu", "--n", n, "--seed", "3", "--out", s(dir)]);
    assert_eq!(code(&out), 0);
    dir.join("instances").join(format!("clu-{n}-3.tsp")).display().to_string()
}

#[test]
fn mock_run_is_offline_and_repeatable() {
    let dir = TempDir::new().unwrap();
    let inst = gen_one(dir.path(), "9");
    let outs = [dir.path().join("a"), dir.path().join("b")];
    for out in &outs {
        let r = pair(&["run", "--instance", &inst, "--strategy", "pair_mock", "--seed", "5", "--out", s(out)]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    }
    let skip = ["timing."];
    let a = snapshot(&outs[0], &skip);
    assert_eq!(a, snapshot(&outs[1], &skip));
    assert!(a.iter().any(|(p, _)| p == "runs/clu-9-3.pair_mock.mock.s5.r0.jsonl"));
    assert!(a.iter().any(|(p, _)| p.ends_with(".diversity.csv")));
}

#[test]
fn missing_instance_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let r = pair(&["run", "--instance", s(&dir.path().join("nope.tsp")), "--out", s(dir.path())]);
    assert_eq!(code(&r), 2);
}

#[test]
fn llm_strategy_needs_an_endpoint() {
    let dir = TempDir::new().unwrap();
    let inst = gen_one(dir.path(), "7");
    let r = pair(&["run", "--instance", &inst, "--strategy", "pair_llm", "--out", s(dir.path())]);
    assert_eq!(code(&r), 2);
}

#[test]
fn unreachable_endpoint_maps_to_transport_code_or_falls_back() {
    let dir = TempDir::new().unwrap();
    let inst = gen_one(dir.path(), "7");
    let base = [
        "run",
        "--instance",
        &inst,
        "--strategy",
        "pair_llm",
        "--out",
        s(dir.path()),
        "--base-url",
        "http://127.0.0.1:9",
        "--model",
        "m",
        "--max-retries",
        "1",
        "--max-requeries",
        "0",
        "--timeout-ms",
        "2000",
        "--generations",
        "3",
        "--early-stop",
        "false",
    ];
    let mut strict = base.to_vec();
    strict.extend(["--fallback-to-mock", "false"]);
    let r = pair(&strict);
    assert_eq!(code(&r), 3, "{}", String::from_utf8_lossy(&r.stderr));
    let record = read(dir.path().join("runs/clu-7-3.pair_llm.m.s0.r0.jsonl"));
    assert!(record.contains("\"completed\":false"));

    let r = pair(&base);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let record = read(dir.path().join("runs/clu-7-3.pair_llm.m.s0.r0.jsonl"));
    assert!(record.contains("\"completed\":true"));
    assert!(record.contains("\"fallback\":true"));
}

fn compare(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "compare",
        "--out",
        s(out),
        "--families",
        "rue",
        "--node-counts",
        "8",
        "--instances",
        "2",
        "--strategies",
        "pair_mock,random_lmea",
        "--generations",
        "40",
        "--seed",
        "11",
    ];
    args.extend_from_slice(extra);
    pair(&args)
}

#[test]
fn compare_grid_counts_and_shares_seeds() {
    let dir = TempDir::new().unwrap();
    let r = compare(dir.path(), &[]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let runs: Vec<_> = fs::read_dir(dir.path().join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 4);
    let table = read(dir.path().join("report/table.md"));
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("pair_mock (mock)") && table.contains("random_lmea (none)"));

    // same instance, same master seed: identical starting populations
    let first_line = |strategy: &str| {
        let p = dir.path().join(format!("runs/rue-8-11.{strategy}.s11.r0.jsonl"));
        read(p).lines().next().unwrap().to_string()
    };
    assert_eq!(first_line("pair_mock.mock"), first_line("random_lmea.none"));
}

#[test]
fn resumed_grid_matches_uninterrupted_grid() {
    let full = TempDir::new().unwrap();
    assert_eq!(code(&compare(full.path(), &["--jobs", "2"])), 0);

    let resumed = TempDir::new().unwrap();
    assert_eq!(code(&compare(resumed.path(), &[])), 0);
    let runs = resumed.path().join("runs");
    let mut files: Vec<_> = fs::read_dir(&runs).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    fs::remove_file(&files[0]).unwrap();
    // a run cut short leaves a record without a completed summary
    let text = read(&files[1]);
    let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    fs::write(&files[1], truncated).unwrap();
    fs::remove_dir_all(resumed.path().join("report")).unwrap();
    assert_eq!(code(&compare(resumed.path(), &[])), 0);

    let skip = ["timing.", "manifest."];
    assert_eq!(snapshot(full.path(), &skip), snapshot(resumed.path(), &skip));
}

#[test]
fn report_reproduces_compare_output() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&compare(dir.path(), &[])), 0);
    let before = snapshot(&dir.path().join("report"), &[]);
    let r = pair(&["report", "--out", s(dir.path())]);
    assert_eq!(code(&r), 0);
    assert_eq!(before, snapshot(&dir.path().join("report"), &[]));
    let r = pair(&["report", "--out", s(dir.path())]);
    assert_eq!(code(&r), 0);
    assert_eq!(before, snapshot(&dir.path().join("report"), &[]));
}

#[test]
fn report_on_empty_directory_warns() {
    let dir = TempDir::new().unwrap();
    let r = pair(&["report", "--out", s(dir.path())]);
    assert_eq!(code(&r), 0);
    assert!(String::from_utf8_lossy(&r.stderr).contains("no run records"));
    assert_eq!(read(dir.path().join("report/table.md")).lines().count(), 2);
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let inst = gen_one(dir.path(), "8");
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# small run\nstrategy = random_lmea\nseed = 4\ngenerations = 5\nearly_stop = false\n").unwrap();
    let r = pair(&["run", "--instance", &inst, "--config", s(&cfg), "--seed", "9", "--out", s(dir.path())]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let record = read(dir.path().join("runs/clu-8-3.random_lmea.none.s9.r0.jsonl"));
    assert_eq!(record.lines().count(), 6);

    fs::write(&cfg, "strategy = pair_mock\npopulation = sixteen\n").unwrap();
    let r = pair(&["run", "--instance", &inst, "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&r), 2);
}

#[test]
fn api_key_never_reaches_logs_or_files() {
    let dir = TempDir::new().unwrap();
    let inst = gen_one(dir.path(), "7");
    let secret = "sk-test-5f1d8e0c9b7a";
    let out = Command::new(env!("CARGO_BIN_EXE_pair"))
        .args([
            "-vv",
            "run",
            "--instance",
            &inst,
            "--strategy",
            "pair_llm",
            "--out",
            s(dir.path()),
            "--base-url",
            "http://127.0.0.1:9",
            "--model",
            "m",
            "--max-retries",
            "2",
            "--generations",
            "2",
            "--early-stop",
            "false",
        ])
        .env("PAIR_API_KEY", secret)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(!String::from_utf8_lossy(&out.stderr).contains(secret));
    assert!(!String::from_utf8_lossy(&out.stdout).contains(secret));
    for (path, text) in snapshot(dir.path(), &[]) {
        assert!(!text.contains(secret), "{path} contains the key");
    }
}
