//! Acceptance suite: every verification criterion at desk scale
//! (n = 2 at N = 64, n = 3 at N = 32, 1000 oracle draws per dimension,
//! boundary-case run to t = 200), one pass/fail line per criterion.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines
//! as they come; the suite shares its expensive trajectories between
//! criteria and takes a few minutes single-threaded.

use jflow::verify::{Scale, Suite, VerifyOptions};

#[test]
fn acceptance_criteria() {
    let suite = Suite::new(VerifyOptions {
        scale: Scale::Full,
        inject_fault: None,
    });
    let outcomes = suite.run_all();
    let mut failed = Vec::new();
    for o in &outcomes {
        println!("{}", o.line());
        if !o.passed {
            failed.push(o.line());
        }
    }
    assert!(
        failed.is_empty(),
        "acceptance criteria failed:\n{}",
        failed.join("\n")
    );
}
