//! Prints one line per criterion and exits non-zero if any fails.

use std::process::ExitCode;

use validation::{check, Status, CRITERIA};

fn main() -> ExitCode {
    // filter arguments from `cargo test` are ignored; every criterion runs
    let mut failed = 0;
    for (id, name, f) in CRITERIA {
        let line = check(id, name, f);
        let tag = match line.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!(
            "criterion {} [{tag}] {}: {} [{:.1}s]",
            line.id,
            line.name,
            line.detail,
            line.elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
