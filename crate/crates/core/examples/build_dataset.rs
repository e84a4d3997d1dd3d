//! Build a ray-level dataset from Room-A and write it to a directory.
//!
//! cargo run --release --example build_dataset -- <out_dir> [links]

use std::collections::BTreeMap;

use cloudray::scenegen::{gen_dataset, make_eval_suite, Dataset, DatasetConfig, Split};
use cloudray::tracer::TraceConfig;

fn main() -> cloudray::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "dataset-out".into());
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(12);
    let suite = make_eval_suite(0, [n, 0, 0])?;
    let a = &suite.rooms[0];
    let scenes: BTreeMap<_, _> = [(a.name.clone(), a.geometry.clone())].into();
    let cfg = DatasetConfig {
        trace: TraceConfig {
            n_rays: 20_000,
            ..TraceConfig::default()
        },
        ..DatasetConfig::default()
    };
    let ds = gen_dataset(&scenes, &a.links, &cfg, 0)?;
    ds.write(out.as_ref(), &scenes)?;
    for split in [Split::Train, Split::Test, Split::Excluded] {
        let entries: Vec<_> = ds.manifest.links.iter().filter(|e| e.split == split).collect();
        let det: usize = entries.iter().map(|e| e.det).sum();
        let non: usize = entries.iter().map(|e| e.non).sum();
        println!("{split:?}: {} links, {det} det / {non} non samples", entries.len());
    }
    let back = Dataset::load(out.as_ref())?;
    println!("reloaded {} links from {out}", back.links.len());
    Ok(())
}
