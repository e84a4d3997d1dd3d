use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AcceptOptions, Criterion, Suite};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::metrics::{path_loss, rms_ds};
use crate::scenegen::{gen_dataset, make_eval_suite, planar_samples, DatasetConfig, EvalSuite, PlanarConfig, Split};
use crate::seed::{mix, named};
use crate::surrogate::{
    score_items, HopScores, LossWeights, Mechanism, RaySample, Rollouter, SurrogateConfig, SurrogateModel,
    TrainConfig, TrainItem,
};
use crate::tracer::{evaluate_path, trace, HopKind, Scene, TraceConfig, Vertex};

/// Held-out scores of the deterministic network on planar reflections.
#[derive(Debug, Clone)]
pub struct PlanarRun {
    pub n_train: usize,
    pub n_test: usize,
    /// Direction loss of the last training epoch; absent for a checkpoint.
    pub final_dir_loss: Option<f64>,
    pub scores: HopScores,
}

/// Trains on planes whose index is not a multiple of the holdout stride
/// (offset by one), or loads the checkpoint when one is given.
pub fn planar_run(opts: &AcceptOptions) -> Result<PlanarRun> {
    let sets = planar_samples(&opts.planar, named(opts.seed, "planar"))?;
    let every = opts.planar_holdout_every.max(2);
    let config = match &opts.det_checkpoint {
        Some(p) => SurrogateModel::load(p)?.config.clone(),
        None => opts.planar_surrogate.clone(),
    };
    let (mut train_items, mut test_items) = (Vec::new(), Vec::new());
    for (i, s) in sets.iter().enumerate() {
        let items = TrainItem::prepare(&s.geometry, &s.samples, &config)?;
        if i % every == every - 1 {
            test_items.extend(items);
        } else {
            train_items.extend(items);
        }
    }
    let mut final_dir_loss = None;
    let model = match &opts.det_checkpoint {
        Some(p) => {
            let m = SurrogateModel::load(p)?;
            if m.mechanism != Mechanism::Deterministic {
                return Err(Error::Schema(format!("{} is not a deterministic checkpoint", p.display())));
            }
            m
        }
        None => {
            let mut m = SurrogateModel::new(config, Mechanism::Deterministic)?;
            let report = crate::surrogate::train(
                &mut m,
                &train_items,
                &TrainConfig {
                    epochs: opts.planar_epochs,
                    lr: opts.lr,
                    rotate: opts.rotate,
                    seed: named(opts.seed, "planar-train"),
                    ..TrainConfig::default()
                },
            )?;
            final_dir_loss = report.curve.last().map(|e| e.dir);
            m
        }
    };
    Ok(PlanarRun {
        n_train: train_items.len(),
        n_test: test_items.len(),
        final_dir_loss,
        scores: score_items(&model, &test_items)?,
    })
}

fn planar<'a>(suite: &'a mut Suite) -> &'a Result<PlanarRun> {
    if suite.planar.is_none() {
        suite.planar = Some(planar_run(&suite.opts));
    }
    suite.planar.as_ref().unwrap()
}

pub fn direction(suite: &mut Suite) -> Criterion {
    let c = Criterion::new(5, "direction_learning", "held-out mean angle <= 5 deg");
    match planar(suite) {
        Ok(run) => {
            let mut c = c;
            c.measure("n_train", run.n_train as f64);
            if let Some(l) = run.final_dir_loss {
                c.measure("final_dir_loss", l);
            }
            let a = c.measure("mean_angle_deg", run.scores.mean_angle());
            c.verdict(a <= 5.0)
        }
        Err(e) => c.failed_with(e),
    }
}

pub fn amplitude(suite: &mut Suite) -> Criterion {
    let mut c = Criterion::new(6, "amplitude_learning", "held-out median power error <= 1.5 dB, weights (1,5)/(1,0.001)");
    let w_det = LossWeights::default_for(Mechanism::Deterministic);
    let w_non = LossWeights::default_for(Mechanism::NonDeterministic);
    let weights_ok = (w_det.dir, w_det.att, w_non.dir, w_non.att) == (1.0, 5.0, 1.0, 0.001);
    match planar(suite) {
        Ok(run) => {
            let e = c.measure("median_power_err_db", run.scores.median_power());
            if !weights_ok {
                c.detail = "loss-weight defaults differ".into();
            }
            c.verdict(e <= 1.5 && weights_ok)
        }
        Err(e) => c.failed_with(e),
    }
}

/// Root-mean-square errors of surrogate channels against traced ones on
/// the evaluation room.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomErrors {
    pub n_links: usize,
    pub pl_rmse_db: f64,
    pub ds_rmse_ns: f64,
}

/// Training data from the training room and reference channels of the
/// evaluation room, shared by the rollout and ablation criteria.
pub struct RoomRun {
    pub suite: EvalSuite,
    pub items: Vec<TrainItem>,
    /// Traced path loss and delay spread per evaluation link.
    pub truth: Vec<(Scene, f64, f64)>,
    /// Errors of the default configuration.
    pub errors: Option<Result<RoomErrors>>,
}

impl RoomRun {
    pub fn build(opts: &AcceptOptions) -> Result<Self> {
        let suite = make_eval_suite(opts.seed, [opts.room_links[0], opts.room_links[1], 0])?;
        let a = suite.room("room-a").ok_or_else(|| Error::invalid("suite lacks room-a"))?;
        let b = suite.room("room-b").ok_or_else(|| Error::invalid("suite lacks room-b"))?;
        let scenes: BTreeMap<String, Arc<_>> = [(a.name.clone(), a.geometry.clone())].into();
        let cfg = DatasetConfig {
            trace: opts.trace.clone(),
            ..DatasetConfig::default()
        };
        let ds = gen_dataset(&scenes, &a.links, &cfg, named(opts.seed, "room-dataset"))?;
        let mut samples: Vec<RaySample> = ds
            .links
            .iter()
            .zip(&ds.manifest.links)
            .filter(|(_, e)| e.split != Split::Excluded)
            .flat_map(|(l, _)| l.samples.iter().cloned())
            .collect();
        thin(&mut samples, opts.room_max_samples, named(opts.seed, "room-thin"));
        let items = TrainItem::prepare(&a.geometry, &samples, &opts.surrogate)?;
        let root = named(opts.seed, "room-truth");
        let mut truth = Vec::with_capacity(b.links.len());
        for (i, link) in b.links.iter().enumerate() {
            let scene = Scene::new(b.geometry.clone(), link.tx, link.rx, cfg.freq)?;
            let real = trace(
                &scene,
                &TraceConfig {
                    seed: mix(root, &[i as u64]),
                    ..opts.trace.clone()
                },
            )?;
            truth.push((scene, path_loss(&real)?, rms_ds(&real)?));
        }
        Ok(RoomRun {
            suite,
            items,
            truth,
            errors: None,
        })
    }

    /// Train both networks with `config` and score rollouts against the
    /// reference channels.
    pub fn evaluate(&self, opts: &AcceptOptions, config: &SurrogateConfig, epochs: usize, seed: u64) -> Result<RoomErrors> {
        let [det, non] = self.train_pair(opts, config, epochs, seed)?;
        self.score(opts, &det, &non, None, seed)
    }

    /// Deterministic and non-deterministic networks trained on the room items.
    pub fn train_pair(&self, opts: &AcceptOptions, config: &SurrogateConfig, epochs: usize, seed: u64) -> Result<[SurrogateModel; 2]> {
        let mut nets = Vec::with_capacity(2);
        for m in [Mechanism::Deterministic, Mechanism::NonDeterministic] {
            let mut model = SurrogateModel::new(
                SurrogateConfig {
                    seed: mix(seed, &[m as u64]),
                    ..config.clone()
                },
                m,
            )?;
            crate::surrogate::train(
                &mut model,
                &self.items,
                &TrainConfig {
                    epochs,
                    lr: opts.lr,
                    rotate: opts.rotate,
                    seed: mix(seed, &[m as u64, 1]),
                    ..TrainConfig::default()
                },
            )?;
            nets.push(model);
        }
        let non = nets.pop().expect("two networks");
        let det = nets.pop().expect("two networks");
        Ok([det, non])
    }

    /// Rollout errors over the truth links. `amp` replaces the amplitude
    /// networks while `det` and `non` still choose the paths.
    pub fn score(
        &self,
        opts: &AcceptOptions,
        det: &SurrogateModel,
        non: &SurrogateModel,
        amp: Option<(&SurrogateModel, &SurrogateModel)>,
        seed: u64,
    ) -> Result<RoomErrors> {
        let geometry = self.truth.first().map(|t| t.0.geometry.clone()).ok_or(Error::EmptyDataset)?;
        let mut roll = Rollouter::new(geometry, det, non)?;
        if let Some((a, b)) = amp {
            roll = roll.with_amplitude(a, b)?;
        }
        let cfg = TraceConfig {
            n_rays: opts.rollout_rays,
            seed: named(seed, "rollout"),
            ..opts.trace.clone()
        };
        let (mut se_pl, mut se_ds) = (0.0, 0.0);
        for (scene, pl, ds) in &self.truth {
            let (real, _) = roll.run(scene, &cfg)?;
            se_pl += (path_loss(&real)? - pl).powi(2);
            se_ds += ((rms_ds(&real)? - ds) * 1e9).powi(2);
        }
        let n = self.truth.len() as f64;
        Ok(RoomErrors {
            n_links: self.truth.len(),
            pl_rmse_db: (se_pl / n).sqrt(),
            ds_rmse_ns: (se_ds / n).sqrt(),
        })
    }
}

/// Keep a seeded subset of at most `max` samples, in original order.
fn thin(samples: &mut Vec<RaySample>, max: usize, seed: u64) {
    if samples.len() <= max {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = rand::seq::index::sample(&mut rng, samples.len(), max);
    let mut idx = keep.into_vec();
    idx.sort_unstable();
    *samples = idx.into_iter().map(|i| samples[i].clone()).collect();
}

fn room(suite: &mut Suite) -> std::result::Result<&mut RoomRun, String> {
    if suite.room.is_none() {
        suite.room = Some(RoomRun::build(&suite.opts));
    }
    suite.room.as_mut().unwrap().as_mut().map_err(|e| format!("error: {e}"))
}

pub fn rollout_fidelity(suite: &mut Suite) -> Criterion {
    let mut c = Criterion::new(7, "rollout_fidelity", "room_b PL RMSE <= 3.5 dB, DS RMSE <= 8 ns, >= 20 links");
    let opts = suite.opts.clone();
    let run = match room(suite) {
        Ok(r) => r,
        Err(e) => return c.failed_msg(e),
    };
    if run.errors.is_none() {
        run.errors = Some(run.evaluate(&opts, &opts.surrogate, opts.room_epochs, named(opts.seed, "room-model")));
    }
    match run.errors.as_ref().unwrap() {
        Ok(e) => {
            let n = c.measure("links", e.n_links as f64);
            let pl = c.measure("pl_rmse_db", e.pl_rmse_db);
            let ds = c.measure("ds_rmse_ns", e.ds_rmse_ns);
            c.verdict(n >= 20.0 && pl <= 3.5 && ds <= 8.0)
        }
        Err(e) => c.failed_with(e),
    }
}

pub fn ablation(suite: &mut Suite) -> Criterion {
    let mut c = Criterion::new(8, "material_ablation", "PL RMSE with materials < without, every seed");
    let opts = suite.opts.clone();
    let run = match room(suite) {
        Ok(r) => r,
        Err(e) => return c.failed_msg(e),
    };
    // Both variants share the paths chosen by the material-aware direction
    // networks; only the amplitude networks differ.
    let mut all = true;
    for s in 0..opts.ablation_seeds {
        let seed = mix(named(opts.seed, "ablation"), &[s as u64]);
        let pairs = [true, false].map(|use_material| {
            let config = SurrogateConfig {
                use_material,
                ..opts.surrogate.clone()
            };
            run.train_pair(&opts, &config, opts.ablation_epochs, seed)
        });
        let [Ok([det, non]), Ok([geo_det, geo_non])] = pairs else {
            let e = pairs.into_iter().find_map(|p| p.err()).expect("one failed");
            return c.failed_with(&e);
        };
        let scored = run
            .score(&opts, &det, &non, None, seed)
            .and_then(|mat| Ok([mat, run.score(&opts, &det, &non, Some((&geo_det, &geo_non)), seed)?]));
        let rmse = match scored {
            Ok([mat, geo]) => [mat.pl_rmse_db, geo.pl_rmse_db],
            Err(e) => return c.failed_with(&e),
        };
        c.measure(&format!("seed{s}_mat_db"), rmse[0]);
        c.measure(&format!("seed{s}_geo_db"), rmse[1]);
        all &= rmse[0] < rmse[1];
    }
    c.verdict(all && opts.ablation_seeds > 0)
}

/// A single-sample dataset of each mechanism drawn from one plane.
fn single_samples(opts: &AcceptOptions) -> Result<(Arc<crate::tracer::SceneGeometry>, RaySample, RaySample)> {
    let cfg = PlanarConfig {
        n_planes: 1,
        per_plane: 1,
        ..opts.planar.clone()
    };
    let set = planar_samples(&cfg, named(opts.seed, "overfit"))?.remove(0);
    let reflect = set.samples[0].clone();
    let n = set.normal;
    let mut rng = ChaCha8Rng::seed_from_u64(named(opts.seed, "overfit-scatter"));
    // Off-specular exit direction in the upper half-space.
    let d_out = loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let v = v + n * 1.5;
        let v = v / v.norm();
        if v.dot(&reflect.d_out) < 0.9 && v.dot(&n) > 0.2 {
            break v;
        }
    };
    let p = reflect.position;
    let scene = Scene::new(set.geometry.clone(), reflect.tx, p + d_out * cfg.distance, cfg.freq)?;
    let path = evaluate_path(
        &scene,
        &[Vertex::Scatter {
            position: p,
            normal: n,
            point_id: reflect.point_id,
        }],
    )?;
    let hop = &path.hops[0];
    let scatter = RaySample {
        rx: scene.rx,
        d_in: hop.dir_in,
        d_out: hop.dir_out,
        amp: hop.local,
        kind: HopKind::Scatter,
        ..reflect.clone()
    };
    Ok((set.geometry, reflect, scatter))
}

pub fn overfit(opts: &AcceptOptions) -> Criterion {
    let mut c = Criterion::new(10, "overfit", "single-sample total loss < 1e-4 within 500 epochs, both mechanisms");
    let (geometry, reflect, scatter) = match single_samples(opts) {
        Ok(v) => v,
        Err(e) => return c.failed_with(&e),
    };
    let mut ok = true;
    for (m, sample) in [(Mechanism::Deterministic, reflect), (Mechanism::NonDeterministic, scatter)] {
        let res = (|| -> Result<f64> {
            let items = TrainItem::prepare(&geometry, &[sample], &opts.surrogate)?;
            let mut model = SurrogateModel::new(opts.surrogate.clone(), m)?;
            let report = crate::surrogate::train(
                &mut model,
                &items,
                &TrainConfig {
                    epochs: opts.overfit_epochs,
                    lr: opts.lr,
                    seed: named(opts.seed, "overfit-train"),
                    ..TrainConfig::default()
                },
            )?;
            Ok(report.curve.iter().map(|e| e.total).fold(f64::INFINITY, f64::min))
        })();
        match res {
            Ok(l) => {
                c.measure(&format!("{}_min_loss", m.name()), l);
                ok &= l < 1e-4;
            }
            Err(e) => return c.failed_with(&e),
        }
    }
    c.verdict(ok && opts.overfit_epochs <= 500)
}
