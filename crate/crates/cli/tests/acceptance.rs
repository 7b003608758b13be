//! Runs every acceptance criterion at its stated tolerance and time limit and
//! prints one PASS/FAIL line per criterion (written straight to stderr so the
//! lines show up without `--nocapture`).

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hrma_core::checks::{run_check, CheckResult, RunConfig};

fn report(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn numerical(id: u32) -> (bool, String) {
    let cfg = RunConfig { timings: true, ..RunConfig::default() };
    match run_check(id, &cfg) {
        Ok(c) => line_for(&c),
        Err(e) => (false, format!("[FAIL] {id:>2}: error {e}")),
    }
}

fn line_for(c: &CheckResult) -> (bool, String) {
    let secs = c.seconds.unwrap_or(f64::NAN);
    let in_time = secs < c.time_limit_s;
    let ok = c.pass && in_time;
    let metrics = c
        .metrics
        .iter()
        .map(|m| match m.lower {
            Some(lo) => format!("{} = {:.4e} in [{lo}, {}]", m.name, m.value, m.upper),
            None => format!("{} = {:.4e} <= {:.4e}", m.name, m.value, m.upper),
        })
        .collect::<Vec<_>>()
        .join("; ");
    let status = if ok { "PASS" } else { "FAIL" };
    (ok, format!("[{status}] criterion {:>2} {} ({secs:.2}s < {}s): {metrics}", c.id, c.name, c.time_limit_s))
}

fn check_all(json: &Path, threads: Option<&str>) -> Vec<u8> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hrma"));
    cmd.env_remove("HRMA_THREADS");
    if let Some(n) = threads {
        cmd.args(["--threads", n]);
    }
    let out = cmd.args(["check", "--suite", "all", "--json"]).arg(json).output().expect("binary runs");
    assert!(out.status.success(), "check all failed: {}", String::from_utf8_lossy(&out.stdout));
    std::fs::read(json).expect("report written")
}

/// `check all` twice with default threads, then with one and with eight threads.
fn determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let runs: Vec<Vec<u8>> = [None, None, Some("1"), Some("8")]
        .iter()
        .enumerate()
        .map(|(i, t)| check_all(&dir.path().join(format!("run{i}.json")), *t))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    let ok = identical && secs < 60.0;
    let status = if ok { "PASS" } else { "FAIL" };
    (
        ok,
        format!(
            "[{status}] criterion 13 determinism ({secs:.2}s < 60s): 4 runs of `check all` byte-identical = {identical} ({} bytes)",
            runs[0].len()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let mut failed = Vec::new();
    for id in 1..=12 {
        let (ok, line) = numerical(id);
        report(&line);
        if !ok {
            failed.push(id);
        }
    }
    let (ok, line) = determinism();
    report(&line);
    if !ok {
        failed.push(13);
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
