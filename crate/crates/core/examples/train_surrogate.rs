//! Train both mechanism networks on a Room-A dataset and save checkpoints
//! and loss curves.
//!
//! cargo run --release --example train_surrogate -- <out_dir> [epochs]

use std::collections::BTreeMap;
use std::path::Path;

use cloudray::scenegen::{gen_dataset, make_eval_suite, DatasetConfig, Split};
use cloudray::surrogate::{train, Mechanism, SurrogateConfig, SurrogateModel, TrainConfig, TrainItem};

fn main() -> cloudray::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "train-out".into());
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let suite = make_eval_suite(0, [12, 0, 0])?;
    let a = &suite.rooms[0];
    let scenes: BTreeMap<_, _> = [(a.name.clone(), a.geometry.clone())].into();
    let ds = gen_dataset(&scenes, &a.links, &DatasetConfig::default(), 0)?;
    let samples: Vec<_> = ds.samples(Split::Train).cloned().collect();
    let config = SurrogateConfig::desk();
    let items = TrainItem::prepare(&a.geometry, &samples, &config)?;
    std::fs::create_dir_all(&out)?;
    for m in [Mechanism::Deterministic, Mechanism::NonDeterministic] {
        let mut model = SurrogateModel::new(config.clone(), m)?;
        let t = std::time::Instant::now();
        let report = train(
            &mut model,
            &items,
            &TrainConfig {
                epochs,
                lr: 1e-3,
                rotate: true,
                ..TrainConfig::default()
            },
        )?;
        let (first, last) = (report.curve[0], report.curve[report.curve.len() - 1]);
        println!(
            "{}: {} samples, total loss {:.4} -> {:.4} in {:.0} s",
            m.name(),
            items.len() - report.skipped,
            first.total,
            last.total,
            t.elapsed().as_secs_f64()
        );
        report.write_csv(&Path::new(&out).join(format!("{}_loss.csv", m.name())))?;
        model.save(&Path::new(&out).join(format!("{}.ckpt.json", m.name())))?;
    }
    Ok(())
}
