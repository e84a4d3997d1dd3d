//! Run selected acceptance criteria and print one line each with timing.
//!
//! cargo run --release --example acceptance_criterion -- 7 8

use cloudray::acceptance::{AcceptOptions, Suite};

fn main() {
    let ids: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut suite = Suite::new(AcceptOptions::default());
    for id in ids {
        let t = std::time::Instant::now();
        let c = suite.criterion(id);
        println!("{}  ({:.0} s)", c.line(), t.elapsed().as_secs_f64());
    }
}
