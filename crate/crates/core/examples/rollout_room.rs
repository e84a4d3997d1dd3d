//! Roll out trained checkpoints on unseen Room-B links and compare path
//! loss and delay spread against the tracer.
//!
//! cargo run --release --example rollout_room -- <det.ckpt.json> <non.ckpt.json> [links]

use cloudray::metrics::condensed;
use cloudray::scenegen::make_eval_suite;
use cloudray::surrogate::{Rollouter, SurrogateModel};
use cloudray::tracer::{trace, Scene, TraceConfig};

fn main() -> cloudray::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    if args.len() < 3 {
        eprintln!("usage: rollout_room <det.ckpt.json> <non.ckpt.json> [links]");
        std::process::exit(2);
    }
    let det = SurrogateModel::load(args[1].as_ref())?;
    let non = SurrogateModel::load(args[2].as_ref())?;
    let n = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(5);
    let suite = make_eval_suite(0, [0, n, 0])?;
    let b = &suite.rooms[1];
    let mut roll = Rollouter::new(b.geometry.clone(), &det, &non)?;
    let cfg = TraceConfig {
        n_rays: 10_000,
        ..TraceConfig::default()
    };
    println!("link        PL pred/true (dB)   DS pred/true (ns)   paths  rejected");
    for l in &b.links {
        let scene = Scene::new(b.geometry.clone(), l.tx, l.rx, 28e9)?;
        let (pred, diag) = roll.run(&scene, &cfg)?;
        let truth = trace(&scene, &cfg)?;
        let (p, t) = (condensed(&pred)?, condensed(&truth)?);
        println!(
            "{:10}  {:7.2} / {:7.2}   {:6.2} / {:6.2}   {:5}  {:8}",
            l.id, p.pl_db, t.pl_db, p.ds_ns, t.ds_ns, diag.paths, diag.rejected_hops
        );
    }
    Ok(())
}
