//! One line per acceptance criterion; exits nonzero if any fails.
//! Runs without the libtest harness so the lines are printed by `cargo test`.

use std::process::ExitCode;

use spotvol::validation::{run_suite, SuiteConfig, CRITERIA};

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("scratch dir");
    let cfg = SuiteConfig { work_dir: Some(dir.path().to_path_buf()), ..SuiteConfig::default() };
    let report = run_suite(&cfg);
    for c in &report.criteria {
        println!("{}", c.summary_line());
    }
    let ids: Vec<u8> = report.criteria.iter().map(|c| c.id).collect();
    let complete = ids == CRITERIA;
    let failed = report.criteria.iter().filter(|c| !c.passed).count();
    println!("acceptance: {}/{} passed (seed {})", ids.len() - failed, CRITERIA.len(), report.seed);
    if complete && report.all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
