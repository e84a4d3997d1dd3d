use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::CropPlan;
use super::model::{material_input, Batch, SurrogateModel};
use super::{crop_plan, LossWeights, Mechanism, RaySample, SurrogateConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::nn::{adam_step, grad_check, Binder, GradCheckReport, Graph, WeightDecay};
use crate::seed::{mix, named};
use crate::tracer::SceneGeometry;

/// A training example with its crop already planned.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub plan: Arc<CropPlan>,
    pub d_in: Vec3,
    pub d_out: Vec3,
    pub bounce: usize,
    pub material: [f64; 4],
    pub amp: [f64; 8],
    pub mechanism: Mechanism,
}

impl TrainItem {
    /// Items for `samples` drawn from `geometry`; crops are planned once per
    /// distinct point.
    pub fn prepare(geometry: &SceneGeometry, samples: &[RaySample], config: &SurrogateConfig) -> Result<Vec<TrainItem>> {
        let mut ids: Vec<usize> = samples.iter().map(|s| s.point_id).collect();
        ids.sort_unstable();
        ids.dedup();
        let plans: Vec<Arc<CropPlan>> = ids
            .par_iter()
            .map(|&id| crop_plan(geometry, id, config).map(Arc::new))
            .collect::<Result<_>>()?;
        let by_id: HashMap<usize, Arc<CropPlan>> = ids.into_iter().zip(plans).collect();
        Ok(samples
            .iter()
            .map(|s| TrainItem {
                plan: by_id[&s.point_id].clone(),
                d_in: s.d_in,
                d_out: s.d_out,
                bounce: s.bounce,
                material: material_input(&s.material),
                amp: s.amp.to_reals(),
                mechanism: s.mechanism(),
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: WeightDecay,
    /// Loss weights; the mechanism defaults apply when absent.
    pub weights: Option<LossWeights>,
    pub seed: u64,
    /// Apply an independent uniformly random rotation to every example of
    /// every batch. Labels are frame-local, so only the crop offsets and
    /// the two directions rotate.
    pub rotate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: WeightDecay::default(),
            weights: None,
            seed: 0,
            rotate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub dir: f64,
    pub att: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochLoss>,
    /// Items of the other mechanism, left untouched.
    pub skipped: usize,
}

impl TrainReport {
    /// Loss curve as `epoch,dir_loss,att_loss,total`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("csv: {e}")))?;
        w.write_record(["epoch", "dir_loss", "att_loss", "total"])
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
        for e in &self.curve {
            w.write_record([
                e.epoch.to_string(),
                e.dir.to_string(),
                e.att.to_string(),
                e.total.to_string(),
            ])
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loss of `items` under the current parameters, without updating them.
pub fn batch_loss(model: &SurrogateModel, items: &[&TrainItem], w: LossWeights) -> Result<(f64, f64, f64)> {
    let mut g = Graph::new();
    let mut p = Binder::new(&model.store);
    let (total, d, a) = run_batch(model, &mut g, &mut p, items, w)?;
    Ok((g.value(total).data[0], d, a))
}

fn run_batch(
    model: &SurrogateModel,
    g: &mut Graph,
    p: &mut Binder,
    items: &[&TrainItem],
    w: LossWeights,
) -> Result<(crate::nn::Var, f64, f64)> {
    let batch = Batch {
        plans: items.iter().map(|i| i.plan.as_ref()).collect(),
        d_in: items.iter().map(|i| i.d_in).collect(),
        d_out: items.iter().map(|i| i.d_out).collect(),
        bounce: items.iter().map(|i| i.bounce).collect(),
        material: items.iter().map(|i| i.material).collect(),
    };
    let dirs: Vec<Vec3> = items.iter().map(|i| i.d_out).collect();
    let amps: Vec<[f64; 8]> = items.iter().map(|i| i.amp).collect();
    model.loss(g, p, &batch, &dirs, &amps, w)
}

/// Uniform random rotation from a uniformly sampled unit quaternion.
fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 1e-3 && n <= 1.0 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

fn rotate_item(item: &TrainItem, r: &UnitQuaternion<f64>) -> TrainItem {
    let mut plan = (*item.plan).clone();
    for level in &mut plan.levels {
        for o in level.offsets.chunks_exact_mut(3) {
            let v = r * Vec3::new(o[0], o[1], o[2]);
            o.copy_from_slice(v.as_slice());
        }
    }
    TrainItem {
        plan: Arc::new(plan),
        d_in: r * item.d_in,
        d_out: r * item.d_out,
        ..item.clone()
    }
}

/// Mini-batch Adam over the items of the model's mechanism. Items of the
/// other mechanism are skipped, so the two networks never share updates.
pub fn train(model: &mut SurrogateModel, items: &[TrainItem], cfg: &TrainConfig) -> Result<TrainReport> {
    let own: Vec<&TrainItem> = items.iter().filter(|i| i.mechanism == model.mechanism).collect();
    if own.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let w = cfg.weights.unwrap_or_else(|| LossWeights::default_for(model.mechanism));
    let root = named(cfg.seed, "train");
    let mut order: Vec<usize> = (0..own.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(root, &[epoch as u64]));
        order.shuffle(&mut rng);
        let lr = cfg.weight_decay.lr_at(cfg.lr, epoch);
        let (mut sd, mut sa, mut st) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let rotated: Vec<TrainItem> = if cfg.rotate {
                chunk.iter().map(|&i| rotate_item(own[i], &random_rotation(&mut rng))).collect()
            } else {
                Vec::new()
            };
            let batch: Vec<&TrainItem> = if cfg.rotate {
                rotated.iter().collect()
            } else {
                chunk.iter().map(|&i| own[i]).collect()
            };
            let mut g = Graph::new();
            let (total, d, a, bindings) = {
                let mut p = Binder::new(&model.store);
                let (t, d, a) = run_batch(model, &mut g, &mut p, &batch, w)?;
                (t, d, a, p.bindings())
            };
            let tv = g.value(total).data[0];
            if !tv.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: format!("dir {d}, att {a}"),
                });
            }
            g.backward(total)?;
            model.store.zero_grad();
            model.store.accumulate(&g, &bindings);
            adam_step(&mut model.store, lr, cfg.beta1, cfg.beta2, cfg.weight_decay.step_coef())?;
            let n = batch.len() as f64;
            sd += d * n;
            sa += a * n;
            st += tv * n;
        }
        let n = own.len() as f64;
        curve.push(EpochLoss {
            epoch,
            dir: sd / n,
            att: sa / n,
            total: st / n,
        });
    }
    Ok(TrainReport {
        curve,
        skipped: items.len() - own.len(),
    })
}

/// Finite-difference check of the full forward pass and loss of `items`
/// with respect to every parameter.
pub fn loss_grad_check(model: &SurrogateModel, items: &[&TrainItem], eps: f64, tol: f64) -> Result<GradCheckReport> {
    let names: Vec<String> = model.store.params.keys().cloned().collect();
    let inputs = names
        .iter()
        .map(|n| model.store.get(n).cloned())
        .collect::<Result<Vec<_>>>()?;
    let w = LossWeights::default_for(model.mechanism);
    grad_check(
        |g, vars| {
            let mut p = Binder::new(&model.store);
            for (n, v) in names.iter().zip(vars) {
                p.preset(n, *v);
            }
            Ok(run_batch(model, g, &mut p, items, w)?.0)
        },
        &inputs,
        eps,
        tol,
    )
}
