use std::f64::consts::PI;
use std::sync::Arc;

use super::{AcceptOptions, Criterion};
use crate::em::{fresnel, lambertian, MaterialTable, C0};
use crate::error::Result;
use crate::geometry::{PointCloud, Vec3};
use crate::nn::op_suite;
use crate::scenegen::{gen_room, planar_samples, PlanarConfig, RoomSpec};
use crate::surrogate::{loss_grad_check, Mechanism, SurrogateConfig, SurrogateModel, TrainItem};
use crate::tracer::{evaluate_path, reception_radius, trace, Scene, SceneGeometry, TraceConfig, Vertex};

const F: f64 = 28e9;

pub(super) fn friis() -> Criterion {
    let mut c = Criterion::new(1, "friis", "max |PL - 20log10(4 pi d / lambda)| <= 0.01 dB");
    let run = || -> Result<f64> {
        let geo = Arc::new(SceneGeometry::new(PointCloud::empty(0.05), vec![], MaterialTable::bundled())?);
        let lambda = C0 / F;
        let mut worst = 0.0f64;
        for d in [1.0, 5.0, 20.0] {
            let tx = Vec3::new(0.3, -0.2, 1.5);
            let rx = tx + Vec3::new(0.6, 0.0, 0.8) * d;
            let real = trace(&Scene::new(geo.clone(), tx, rx, F)?, &TraceConfig::default())?;
            let pl = crate::metrics::path_loss(&real)?;
            worst = worst.max((pl - 20.0 * (4.0 * PI * d / lambda).log10()).abs());
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => {
            let w = c.measure("max_err_db", w);
            c.verdict(w <= 0.01)
        }
        Err(e) => c.failed_with(&e),
    }
}

/// Valid specular path of a box found by the image method.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePath {
    /// Wall indices in the order hit.
    pub walls: Vec<usize>,
    pub points: Vec<Vec3>,
    pub length: f64,
}

fn mirror(p: &Vec3, q: &Vec3, n: &Vec3) -> Vec3 {
    p - n * (2.0 * (p - q).dot(n))
}

/// Every specular path of up to `order` reflections inside the box
/// `[0, d]`, walls ordered x=0, x=max, y=0, y=max, z=0, z=max. Exhaustive
/// over wall sequences without immediate repeats.
pub fn image_oracle(d: [f64; 3], tx: &Vec3, rx: &Vec3, order: usize) -> Vec<OraclePath> {
    let [dx, dy, dz] = d;
    let planes = [
        (Vec3::zeros(), Vec3::x()),
        (Vec3::new(dx, 0.0, 0.0), -Vec3::x()),
        (Vec3::zeros(), Vec3::y()),
        (Vec3::new(0.0, dy, 0.0), -Vec3::y()),
        (Vec3::zeros(), Vec3::z()),
        (Vec3::new(0.0, 0.0, dz), -Vec3::z()),
    ];
    let inside = |p: &Vec3| (0..3).all(|k| p[k] >= -1e-9 && p[k] <= d[k] + 1e-9);
    let mut seqs: Vec<Vec<usize>> = (0..6).map(|w| vec![w]).collect();
    let mut frontier = seqs.clone();
    for _ in 1..order {
        frontier = frontier
            .iter()
            .flat_map(|s| {
                let last = *s.last().expect("non-empty");
                (0..6).filter(move |&w| w != last).map(move |w| [s.clone(), vec![w]].concat())
            })
            .collect();
        seqs.extend(frontier.iter().cloned());
    }
    let mut out = Vec::new();
    'seq: for s in seqs {
        let mut imgs = Vec::with_capacity(s.len());
        let mut img = *tx;
        for &w in &s {
            img = mirror(&img, &planes[w].0, &planes[w].1);
            imgs.push(img);
        }
        let mut target = *rx;
        let mut points = vec![Vec3::zeros(); s.len()];
        for k in (0..s.len()).rev() {
            let (q, n) = planes[s[k]];
            let t = (q - target).dot(&n) / (imgs[k] - target).dot(&n);
            if !(t > 0.0 && t < 1.0) {
                continue 'seq;
            }
            target += (imgs[k] - target) * t;
            if !inside(&target) {
                continue 'seq;
            }
            points[k] = target;
        }
        out.push(OraclePath {
            walls: s.clone(),
            points,
            length: (img - rx).norm(),
        });
    }
    out
}

pub(super) fn box_spec() -> RoomSpec {
    RoomSpec {
        extents: [4.0, 3.0, 2.5],
        wall_materials: [0, 1, 2, 3],
        floor_material: 5,
        ceiling_material: 3,
        columns: vec![],
        openings: vec![],
        spacing: 0.08,
    }
}

pub(super) fn image_method(opts: &AcceptOptions) -> Criterion {
    let mut c = Criterion::new(
        2,
        "image_method",
        "every traced delay within the reception radius of an oracle delay; no oracle path above the floor missed",
    );
    let run = || -> Result<(f64, usize, usize, usize)> {
        let spec = box_spec();
        let room = gen_room(&spec, opts.seed)?;
        let geo = room.geometry()?;
        let tx = Vec3::new(1.1, 0.9, 1.4);
        let rx = Vec3::new(3.0, 2.2, 1.1);
        let scene = Scene::new(geo.clone(), tx, rx, F)?;
        let cfg = TraceConfig {
            n_rays: 100_000,
            max_bounces: 2,
            max_diffuse: 0,
            n_scatter: 0,
            diffraction_order: 0,
            threads: opts.threads,
            ..TraceConfig::default()
        };
        let real = trace(&scene, &cfg)?;
        let index = geo.index.as_ref().expect("box has points");
        let normals = [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()];
        let mut oracle = Vec::new();
        for o in image_oracle(spec.extents, &tx, &rx, 2) {
            let verts: Vec<Vertex> = o
                .walls
                .iter()
                .zip(&o.points)
                .map(|(&w, p)| Vertex::Reflect {
                    position: *p,
                    normal: normals[w],
                    point_id: index.knn(p, 1)[0].0,
                })
                .collect();
            let path = evaluate_path(&scene, &verts)?;
            oracle.push((o.length, path.power_db()));
        }
        let los = evaluate_path(&scene, &[])?.power_db();
        let max = oracle.iter().map(|o| o.1).fold(los, f64::max);
        let mut worst = 0.0f64;
        let mut unmatched = 0;
        for p in &real.nlos {
            let len = p.gain.tau * C0;
            let tol = reception_radius(len, &cfg);
            let miss = oracle.iter().map(|o| (o.0 - len).abs()).fold(f64::INFINITY, f64::min);
            worst = worst.max(miss / tol);
            if miss > tol {
                unmatched += 1;
            }
        }
        let strong: Vec<f64> = oracle
            .iter()
            .filter(|o| o.1 >= max - cfg.power_floor_db)
            .map(|o| o.0)
            .collect();
        let missed = strong
            .iter()
            .filter(|&&l| {
                !real
                    .nlos
                    .iter()
                    .any(|p| (p.gain.tau * C0 - l).abs() <= reception_radius(l, &cfg))
            })
            .count();
        Ok((worst, unmatched, missed, strong.len()))
    };
    match run() {
        Ok((worst, unmatched, missed, strong)) => {
            c.measure("worst_miss_over_radius", worst);
            c.measure("unmatched", unmatched as f64);
            c.measure("missed", missed as f64);
            c.measure("oracle_above_floor", strong as f64);
            c.verdict(unmatched == 0 && missed == 0 && strong > 0)
        }
        Err(e) => c.failed_with(&e),
    }
}

/// Small encoder and networks for finite-difference checks.
pub(super) fn tiny_config(seed: u64) -> SurrogateConfig {
    let mut c = SurrogateConfig::desk();
    c.posenc_k = 1;
    c.crop_points = 24;
    c.sa = vec![
        crate::surrogate::SaLevel { n: 4, r: 0.4, k: 3, width: 4 },
        crate::surrogate::SaLevel { n: 2, r: 0.8, k: 2, width: 4 },
    ];
    c.d_env = 4;
    c.dir_emb = 4;
    c.n_layers = 1;
    c.heads = 2;
    c.max_bounces = 2;
    c.amp_widths = vec![6, 8];
    c.mat_emb = 2;
    c.seed = seed;
    c
}

pub(super) const COMPOSED_EPS: f64 = 1e-6;
pub(super) const COMPOSED_TOL: f64 = 1e-3;

pub(super) fn gradients(opts: &AcceptOptions) -> Criterion {
    let mut c = Criterion::new(3, "gradients", "single op rel err < 1e-4, composed < 1e-3");
    let run = || -> Result<(f64, f64, Vec<String>)> {
        let mut failing = Vec::new();
        let mut op_max = 0.0f64;
        for (name, r) in op_suite(opts.seed)? {
            op_max = op_max.max(r.max_rel_err);
            if !r.pass {
                failing.push(name);
            }
        }
        let planar = PlanarConfig {
            n_planes: 1,
            per_plane: 3,
            ..PlanarConfig::default()
        };
        let set = &planar_samples(&planar, opts.seed)?[0];
        let cfg = tiny_config(opts.seed);
        let items = TrainItem::prepare(&set.geometry, &set.samples, &cfg)?;
        let refs: Vec<&TrainItem> = items.iter().collect();
        let mut comp_max = 0.0f64;
        for m in [Mechanism::Deterministic, Mechanism::NonDeterministic] {
            let model = SurrogateModel::new(cfg.clone(), m)?;
            let r = loss_grad_check(&model, &refs, COMPOSED_EPS, COMPOSED_TOL)?;
            comp_max = comp_max.max(r.max_rel_err);
            if !r.pass {
                failing.push(format!("composed_{}", m.name()));
            }
        }
        Ok((op_max, comp_max, failing))
    };
    match run() {
        Ok((op, comp, failing)) => {
            c.measure("op_max_rel_err", op);
            c.measure("composed_max_rel_err", comp);
            if !failing.is_empty() {
                c.detail = format!("failing: {}", failing.join(", "));
            }
            c.verdict(failing.is_empty())
        }
        Err(e) => c.failed_with(&e),
    }
}

pub(super) fn energy() -> Criterion {
    let mut c = Criterion::new(
        4,
        "energy",
        "|r| <= 1 over 0-89 deg for >= 5 materials; Lambertian integral in [0.99, 1.01]; |R^2 + S^2 - 1| <= 4 eps",
    );
    let run = || -> Result<(f64, f64, f64, usize)> {
        let table = MaterialTable::bundled();
        let mut max_r = 0.0f64;
        let mut max_dev = 0.0f64;
        for id in table.ids() {
            let m = table.get(id)?;
            for deg in 0..90 {
                let (rp, rl) = fresnel((deg as f64).to_radians().cos(), m, F)?;
                max_r = max_r.max(rp.norm()).max(rl.norm());
            }
            max_dev = max_dev.max((m.r() * m.r() + m.s * m.s - 1.0).abs());
        }
        // Midpoint rule over the hemisphere about +z.
        let n = Vec3::z();
        let (nt, np) = (400, 400);
        let (dt, dp) = (0.5 * PI / nt as f64, 2.0 * PI / np as f64);
        let mut integral = 0.0;
        for i in 0..nt {
            let t = (i as f64 + 0.5) * dt;
            for j in 0..np {
                let p = (j as f64 + 0.5) * dp;
                let k = Vec3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos());
                integral += lambertian(&k, &n) * t.sin() * dt * dp;
            }
        }
        Ok((max_r, integral, max_dev, table.ids().len()))
    };
    match run() {
        Ok((r, i, dev, n)) => {
            c.measure("max_abs_r", r);
            c.measure("lambertian_integral", i);
            c.measure("max_r2_s2_dev", dev);
            c.measure("materials", n as f64);
            c.verdict(r <= 1.0 && (0.99..=1.01).contains(&i) && dev <= 4.0 * f64::EPSILON && n >= 5)
        }
        Err(e) => c.failed_with(&e),
    }
}

pub(super) fn determinism(opts: &AcceptOptions) -> Criterion {
    let mut c = Criterion::new(
        9,
        "determinism",
        "repeated fast criteria byte-identical; 1 thread and N threads give identical traces",
    );
    let run = || -> Result<(bool, bool, usize)> {
        let fast = |o: &AcceptOptions| -> Result<String> {
            let v = vec![friis(), image_method(o), gradients(o), energy()];
            Ok(serde_json::to_string(&v)?)
        };
        let repeat = fast(opts)? == fast(opts)?;
        let room = gen_room(&box_spec(), opts.seed)?;
        let scene = Scene::new(room.geometry()?, Vec3::new(1.1, 0.9, 1.4), Vec3::new(3.0, 2.2, 1.1), F)?;
        let n = std::thread::available_parallelism().map_or(2, |n| n.get()).max(2);
        let traced = |threads| -> Result<String> {
            let cfg = TraceConfig {
                n_rays: 20_000,
                n_scatter: 4,
                threads,
                seed: opts.seed,
                ..TraceConfig::default()
            };
            Ok(serde_json::to_string(&trace(&scene, &cfg)?)?)
        };
        let threads = traced(1)? == traced(n)?;
        Ok((repeat, threads, n))
    };
    match run() {
        Ok((repeat, threads, n)) => {
            c.measure("repeat_identical", f64::from(u8::from(repeat)));
            c.measure("thread_identical", f64::from(u8::from(threads)));
            c.measure("threads_compared", n as f64);
            c.verdict(repeat && threads)
        }
        Err(e) => c.failed_with(&e),
    }
}
