use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread;
use std::time::Duration;

use serde_json::Value;

const TOY1: &str = "des (0,5,3)\n(0,\"?a\",1)\n(0,\"delta\",0)\n(1,\"!x\",2)\n(2,\"?b\",0)\n(2,\"delta\",2)\n";

fn mbt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbt"))
        .args(args)
        .current_dir(dir)
        .env_remove("MBT_SEED")
        .env_remove("MBT_JOBS")
        .env_remove("MBT_OUT_DIR")
        .env_remove("MBT_FORMAT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn toy1_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy1.aut"), TOY1).unwrap();
    dir
}

#[test]
fn validate_toy1_is_clean() {
    let dir = toy1_dir();
    let out = mbt(dir.path(), &["validate", "toy1.aut"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "[]");
}

#[test]
fn validate_reports_errors_with_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.aut"), "des (0,3,2)\n(0,\"?a\",1)\n(0,\"?a\",0)\n(1,\"!x\",0)\n").unwrap();
    let out = mbt(dir.path(), &["validate", "bad.aut"]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report.as_array().unwrap().iter().any(|v| v["rule"] == "nondeterministic"), "{report}");

    let csv = mbt(dir.path(), &["validate", "bad.aut", "--format", "csv"]);
    assert!(stdout(&csv).starts_with("rule,severity,message\nD,error,"));
}

#[test]
fn parse_errors_are_actionable() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("broken.aut"), "des (0,1,2)\n(0,\"a\",1)\n").unwrap();
    let out = mbt(dir.path(), &["validate", "broken.aut"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken.aut") && err.contains("line 2"), "{err}");
}

#[test]
fn run_toy1_reaches_coverage() {
    let dir = toy1_dir();
    let out = mbt(dir.path(), &["run", "--model", "toy1.aut", "--strategy", "greedy", "--depth", "5", "--target", "1.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["verdict"], "coverage-reached");
    assert_eq!(report["transitions_taken"].as_u64().unwrap() as usize, report["trace"].as_array().unwrap().len());
}

#[test]
fn run_with_fault_fails() {
    let dir = toy1_dir();
    let fault = r#"{"kind":"drop-output","source":1,"output":"x","target":2}"#;
    let out = mbt(dir.path(), &["run", "--model", "toy1.aut", "--input-bias", "1", "--fault", fault]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["verdict"], "fail-unexpected-quiescence");
    assert_eq!(report["trace"], serde_json::json!(["?a"]));
}

#[test]
fn generate_writes_model_and_metadata_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--seed", "7", "generate", "--N", "10", "--lambda", "6", "--r", "1", "--p", "2"];
    let first = mbt(dir.path(), &[&args[..], &["--out-dir", "a"]].concat());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    mbt(dir.path(), &[&args[..], &["--out-dir", "b"]].concat());
    let a = fs::read(dir.path().join("a/model.aut")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/model.aut")).unwrap());
    let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a/model.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["params"]["n"], 10);
    assert_eq!(meta["attempts"].as_u64().unwrap() + 6, meta["accepted_seed"].as_u64().unwrap());
    let valid = mbt(dir.path(), &["validate", "a/model.aut", "--strict"]);
    assert!(valid.status.success());
}

#[test]
fn env_seed_is_lowest_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_mbt"));
        cmd.current_dir(dir.path()).args(["generate", "--N", "3", "--lambda", "2", "--r", "1", "--p", "1"]).args(extra);
        match env {
            Some(v) => cmd.env("MBT_SEED", v),
            None => cmd.env_remove("MBT_SEED"),
        };
        cmd.env("MBT_OUT_DIR", dir.path().join("env"));
        assert!(cmd.status().unwrap().success());
    };
    let meta = |sub: &str| -> Value {
        serde_json::from_str(&fs::read_to_string(dir.path().join(sub).join("model.meta.json")).unwrap()).unwrap()
    };
    run(&[], Some("41"));
    assert_eq!(meta("env")["params"]["seed"], 41);
    run(&["--seed", "5", "--out-dir", "cli"], Some("41"));
    assert_eq!(meta("cli")["params"]["seed"], 5);
}

#[test]
fn convert_canonicalises_and_completes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("raw.aut"), "des (0,3,3)\r\n(2,\"?b\",0)\r\n(1,\"!x\",2)\r\n(0,\"?a\",1)\r\n").unwrap();
    let out = mbt(dir.path(), &["convert", "raw.aut", "--delta-complete"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), TOY1);

    fs::write(dir.path().join("prefixed.aut"), "des (0,2,2)\n(0,\"in_go\",1)\n(1,\"out_done\",0)\n").unwrap();
    let out = mbt(dir.path(), &["convert", "prefixed.aut", "--input-prefix", "in_", "--output-prefix", "out_"]);
    assert_eq!(stdout(&out), "des (0,2,2)\n(0,\"?go\",1)\n(1,\"!done\",0)\n");
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn connect(port: u16) -> TcpStream {
    for _ in 0..200 {
        if let Ok(s) = TcpStream::connect(("127.0.0.1", port)) {
            return s;
        }
        thread::sleep(Duration::from_millis(25));
    }
    panic!("server did not come up");
}

#[test]
fn serve_and_run_over_tcp() {
    let dir = toy1_dir();
    let port = free_port();
    let bind = format!("127.0.0.1:{port}");
    let _server = Server(
        Command::new(env!("CARGO_BIN_EXE_mbt"))
            .args(["serve", "toy1.aut", "--bind", &bind])
            .current_dir(dir.path())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let stream = connect(port);
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    let mut line = String::new();
    for (req, resp) in [("POLL", "QUIESCENT"), ("INPUT a", "OK"), ("POLL", "OUTPUT x"), ("BYE", "OK")] {
        writeln!(writer, "{req}").unwrap();
        line.clear();
        reader.read_line(&mut line).unwrap();
        assert_eq!(line, format!("{resp}\n"));
    }

    let out = mbt(dir.path(), &["run", "--model", "toy1.aut", "--connect", &bind]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["verdict"], "coverage-reached");
}

#[test]
fn benches_write_tidy_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"models": [{"n": 3, "lambda": 2, "r": 1, "p": 2, "seed": 1}],
        "strategies": [{"strategy": {"kind": "greedy", "depth": 5}}, {"strategy": {"kind": "random"}}],
        "runs_per_cell": 4, "coverage_thresholds": [0.1, 0.5, 1.0], "seed": 3}"#;
    fs::write(dir.path().join("spec.json"), spec).unwrap();

    let cov = mbt(dir.path(), &["bench-coverage", "--config", "spec.json", "--format", "csv", "--out-dir", "c"]);
    assert!(cov.status.success(), "{}", String::from_utf8_lossy(&cov.stderr));
    let text = stdout(&cov);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("model,strategy,target,mean_transitions,sd_transitions,runs,censored"));
    assert_eq!(lines.count(), 6);
    assert_eq!(fs::read_to_string(dir.path().join("c/coverage.csv")).unwrap(), text);
    assert!(fs::read_to_string(dir.path().join("c/coverage.gp")).unwrap().contains("dt 2"));

    let seq = mbt(dir.path(), &["bench-coverage", "--config", "spec.json", "--format", "csv", "--out-dir", "s", "--sequential"]);
    assert_eq!(stdout(&seq), text);

    let mutants = mbt(dir.path(), &["bench-mutants", "--config", "spec.json", "--out-dir", "m", "--jobs", "2"]);
    assert!(mutants.status.success(), "{}", String::from_utf8_lossy(&mutants.stderr));
    let out: Value = serde_json::from_str(&stdout(&mutants)).unwrap();
    assert_eq!(out["rows"].as_array().unwrap().len(), 2 * 5);
    assert_eq!(out["strategies"].as_array().unwrap().len(), 2);
}
