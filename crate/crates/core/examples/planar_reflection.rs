//! Train the deterministic network on single-bounce reflections from random
//! planes and score it on held-out planes.
//!
//! cargo run --release --example planar_reflection -- [epochs] [lr]

use cloudray::acceptance::AcceptOptions;
use cloudray::scenegen::planar_samples;
use cloudray::surrogate::{median, score_items, train, Mechanism, SurrogateModel, TrainConfig, TrainItem};

fn main() -> cloudray::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let defaults = AcceptOptions::default();
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(defaults.planar_epochs);
    let lr = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(defaults.lr);
    let sets = planar_samples(&defaults.planar, 7)?;
    let config = defaults.planar_surrogate.clone();
    let every = defaults.planar_holdout_every;
    let mut train_items = Vec::new();
    let mut test_items = Vec::new();
    for (i, s) in sets.iter().enumerate() {
        let items = TrainItem::prepare(&s.geometry, &s.samples, &config)?;
        if i % every == every - 1 {
            test_items.extend(items);
        } else {
            train_items.extend(items);
        }
    }
    println!("{} train / {} held-out samples", train_items.len(), test_items.len());
    let mut model = SurrogateModel::new(config, Mechanism::Deterministic)?;
    let t = std::time::Instant::now();
    let report = train(
        &mut model,
        &train_items,
        &TrainConfig {
            epochs,
            lr,
            rotate: defaults.rotate,
            ..TrainConfig::default()
        },
    )?;
    for e in report.curve.iter().step_by((epochs / 10).max(1)) {
        println!("epoch {:4}  dir {:.5}  att {:.5}", e.epoch, e.dir, e.att);
    }
    let fit = score_items(&model, &train_items)?;
    println!("train: mean angle {:.2} deg, median angle {:.2}", fit.mean_angle(), median(&fit.angle_deg));
    let scores = score_items(&model, &test_items)?;
    println!(
        "held-out: mean angle {:.2} deg, median power error {:.2} dB ({:.0} s)",
        scores.mean_angle(),
        scores.median_power(),
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
