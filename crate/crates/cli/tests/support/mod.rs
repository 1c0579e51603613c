#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Output, Stdio};

pub const BIN: &str = env!("CARGO_BIN_EXE_bridge");

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// A `serve` or `simulate` child, killed on drop.
pub struct Daemon {
    child: Child,
    // Held so the child's stdout pipe stays open.
    _stdout: BufReader<ChildStdout>,
    pub addr: String,
}

impl Daemon {
    pub fn start(args: &[&str]) -> Daemon {
        let mut child = Command::new(BIN)
            .args(args)
            .env("RUST_LOG", "warn")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn bridge");
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut first = String::new();
        stdout.read_line(&mut first).unwrap();
        let addr = first
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line {first:?}"))
            .to_owned();
        Daemon {
            child,
            _stdout: stdout,
            addr,
        }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Simulator plus a test-mode bridge pointed at it.
pub struct Stack {
    pub sim: Daemon,
    pub bridge: Daemon,
}

impl Stack {
    pub fn start(code_seed: u64) -> Stack {
        let sim = Daemon::start(&["simulate", "--port", "0", "--latency-ms", "30"]);
        let seed = code_seed.to_string();
        let vendor = sim.url();
        let bridge = Daemon::start(&[
            "serve",
            "--port",
            "0",
            "--vendor-url",
            &vendor,
            "--poll-interval-ms",
            "100",
            "--test-mode",
            "--code-seed",
            &seed,
        ]);
        Stack { sim, bridge }
    }

    pub fn run(&self, args: &[&str], stdin: &str) -> Output {
        run(&self.bridge.url(), args, stdin)
    }
}

pub fn run(api: &str, args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(BIN)
        .arg("--api")
        .arg(api)
        .args(args)
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn bridge");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Outcome of the scripted ritual against a fresh stack.
pub struct GoldenRun {
    pub transcript: String,
    pub expected: String,
    pub code: String,
    pub success: bool,
}

/// Pair bulb-1 on a fresh stack (code seed 42) and play the checked-in
/// input script with answer seed 42 in test mode.
pub fn golden_ritual() -> GoldenRun {
    let stack = Stack::start(42);
    let paired = stack.run(&["pair", "--user", "demo", "--pass", "demo", "--device", "bulb-1"], "");
    assert!(paired.status.success(), "pair failed: {}", stderr(&paired));
    let code = stdout(&paired).trim().to_owned();
    let input = std::fs::read_to_string(golden_dir().join("ritual.input")).unwrap();
    let played = stack.run(&["play", "--code", &code, "--seed", "42", "--test-mode"], &input);
    let transcript = stdout(&played);
    let golden = golden_dir().join("ritual.transcript");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &transcript).unwrap();
    }
    GoldenRun {
        expected: std::fs::read_to_string(golden).unwrap_or_default(),
        transcript,
        code,
        success: played.status.success(),
    }
}

/// Cue names in transcript order.
pub fn cue_trace(transcript: &str) -> Vec<String> {
    let re = regex::Regex::new(r"\| cue (\w+) ").unwrap();
    re.captures_iter(transcript).map(|c| c[1].to_owned()).collect()
}

/// `SpookyAmbiance, Listening, (AnswerYes|AnswerNo, Listening)*, Restore`
pub fn trace_matches_ritual(cues: &[String]) -> bool {
    let joined = cues.join(",");
    regex::Regex::new(r"^SpookyAmbiance,Listening(,(AnswerYes|AnswerNo),Listening)*,Restore$")
        .unwrap()
        .is_match(&joined)
}
