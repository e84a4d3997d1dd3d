//! Every acceptance criterion at the full level, one line per criterion.

use std::io::Write;
use std::time::Instant;

use cloudray::acceptance::{AcceptOptions, Status, Suite, N_CRITERIA};

/// Writes through the raw handle so the lines show without `--nocapture`.
fn say(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

#[test]
fn acceptance_full() {
    let mut suite = Suite::new(AcceptOptions::default());
    let mut failed = Vec::new();
    let mut timings = Vec::new();
    for id in 1..=N_CRITERIA {
        let t = Instant::now();
        let c = suite.criterion(id);
        timings.push(format!("criterion {id:>2}: {:.1} s", t.elapsed().as_secs_f64()));
        say(&c.line());
        if c.status != Status::Pass {
            failed.push(c.name.clone());
        }
    }
    for t in &timings {
        say(t);
    }
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
