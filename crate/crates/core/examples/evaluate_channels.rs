//! Write traced and perturbed channel files for a few links and score them
//! with the evaluation command: per-link CSV plus aggregate RMSEs.
//!
//! cargo run --release --example evaluate_channels -- <out_dir>

use std::path::Path;

use cloudray::cli::cmd_eval;
use cloudray::io::{write_channel, ChannelFile};
use cloudray::scenegen::make_eval_suite;
use cloudray::tracer::{trace, Scene, TraceConfig};

fn main() -> cloudray::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "eval-out".into());
    let out = Path::new(&out);
    let (truth_dir, pred_dir) = (out.join("truth"), out.join("pred"));
    std::fs::create_dir_all(&truth_dir)?;
    std::fs::create_dir_all(&pred_dir)?;
    let suite = make_eval_suite(0, [0, 0, 4])?;
    let c = &suite.rooms[2];
    for l in &c.links {
        let scene = Scene::new(c.geometry.clone(), l.tx, l.rx, 28e9)?;
        let dense = TraceConfig {
            n_rays: 40_000,
            ..TraceConfig::default()
        };
        // A sparser launch stands in for a prediction.
        let sparse = TraceConfig {
            n_rays: 5_000,
            ..TraceConfig::default()
        };
        write_channel(&truth_dir.join(format!("{}.json", l.id)), &ChannelFile::of(&l.id, &trace(&scene, &dense)?))?;
        write_channel(&pred_dir.join(format!("{}.json", l.id)), &ChannelFile::of(&l.id, &trace(&scene, &sparse)?))?;
    }
    let s = cmd_eval(&pred_dir, &truth_dir, &out.join("eval"))?;
    println!("{} links: PL RMSE {:.3} dB, DS RMSE {:.3} ns", s.n_links, s.pl_rmse_db, s.ds_rmse_ns);
    for (k, a) in s.angle_deg.iter().enumerate() {
        match a {
            Some(a) => println!("  order {}: mean angular error {a:.2} deg", k + 1),
            None => println!("  order {}: no paths", k + 1),
        }
    }
    println!("per-link rows in {}", out.join("eval/eval.csv").display());
    Ok(())
}
