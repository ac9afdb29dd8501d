//! Runs the ten pinned acceptance criteria and prints one PASS/FAIL line per
//! criterion. Built without the libtest harness so the lines always show.

use std::process::ExitCode;

use hydrostat::experiments::verify::{run_criterion, CRITERIA};

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary output directory");
    let mut failed = Vec::new();
    for n in 1..=CRITERIA.len() {
        let r = run_criterion(n, dir.path());
        println!("{}", r.line());
        if !r.passed() {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
