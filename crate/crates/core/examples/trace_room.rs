//! Sample Room-A into a point cloud, trace one link and print its paths,
//! path loss, delay spread and power delay profile.
//!
//! cargo run --release --example trace_room -- [n_rays]

use cloudray::metrics::{condensed, pdp, DEFAULT_BIN};
use cloudray::scenegen::{gen_room, place_links, room_a};
use cloudray::tracer::{trace, Scene, TraceConfig};

fn main() -> cloudray::Result<()> {
    let n_rays = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let room = gen_room(&room_a(), 1)?;
    println!("room-a: {} points, {} edges", room.cloud.len(), room.edges.len());
    let link = &place_links(&room, "room-a", 1, 1)?[0];
    let scene = Scene::new(room.geometry()?, link.tx, link.rx, 28e9)?;
    let t = std::time::Instant::now();
    let real = trace(
        &scene,
        &TraceConfig {
            n_rays,
            ..TraceConfig::default()
        },
    )?;
    println!("{} paths in {:.1} s", real.len(), t.elapsed().as_secs_f64());
    for p in real.paths().take(12) {
        let kinds: Vec<String> = p.hops.iter().map(|h| format!("{:?}", h.kind)).collect();
        println!(
            "  {:7.2} dB  {:6.2} ns  [{}]",
            p.power_db(),
            p.total_length() / 299_792_458.0 * 1e9,
            if kinds.is_empty() { "LOS".into() } else { kinds.join(" ") }
        );
    }
    let c = condensed(&real)?;
    println!("PL {:.2} dB, RMS delay spread {:.2} ns", c.pl_db, c.ds_ns);
    for (tau, p) in pdp(&real, DEFAULT_BIN)?.bins.iter().take(10) {
        println!("  PDP {:5.1} ns  {:7.2} dB", tau * 1e9, 10.0 * p.log10());
    }
    Ok(())
}
