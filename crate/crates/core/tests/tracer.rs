mod common;

use std::f64::consts::PI;

use cloudray::em::{reflect_dir, C0};
use cloudray::geometry::{EdgeSegment, PointCloud, Vec3};
use cloudray::tracer::{
    enumerate_diffraction, fermat_point, power_filter, reception_radius, reception_test, trace,
    ChannelRealization, HopKind, RayState, Scene, TraceConfig,
};
use cloudray::Error;
use common::{box_cloud, box_planes, geometry, rect};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const F: f64 = 28e9;

fn specular(n_rays: usize, bounces: usize) -> TraceConfig {
    TraceConfig {
        n_rays,
        max_bounces: bounces,
        max_diffuse: 0,
        n_scatter: 0,
        diffraction_order: 0,
        power_floor_db: 200.0,
        ..TraceConfig::default()
    }
}

fn mirror(p: &Vec3, q: &Vec3, n: &Vec3) -> Vec3 {
    p - n * (2.0 * (p - q).dot(n))
}

fn floor() -> PointCloud {
    rect(Vec3::new(-6.0, -6.0, 0.0), Vec3::x(), Vec3::y(), 12.0, 12.0, 0.1, Vec3::z(), 0)
}

#[test]
fn empty_room_is_friis() {
    let g = geometry(PointCloud::empty(0.05), vec![]);
    let tx = Vec3::new(0.0, 0.0, 1.0);
    let rx = Vec3::new(4.0, 3.0, 1.0);
    let scene = Scene::new(g, tx, rx, F).unwrap();
    let real = trace(&scene, &TraceConfig::default()).unwrap();
    assert!(real.nlos.is_empty());
    let los = real.los.unwrap();
    let lambda = C0 / F;
    let friis = lambda / (4.0 * PI * 5.0);
    assert!((los.gain.a.norm() - friis).abs() < 1e-12 * friis);
    assert!((los.gain.tau - 5.0 / C0).abs() < 1e-18);
}

#[test]
fn floor_gives_los_and_one_image_path() {
    let g = geometry(floor(), vec![]);
    let tx = Vec3::new(0.0, 0.0, 1.5);
    let rx = Vec3::new(3.0, 0.5, 1.2);
    let scene = Scene::new(g, tx, rx, F).unwrap();
    let real = trace(&scene, &specular(100_000, 3)).unwrap();
    assert!(real.los.is_some());
    assert_eq!(real.nlos.len(), 1);
    let image = mirror(&tx, &Vec3::zeros(), &Vec3::z());
    let tau = (image - rx).norm() / C0;
    assert!((real.nlos[0].gain.tau - tau).abs() * C0 < 1e-9);
    assert_eq!(real.nlos[0].hops[0].kind, HopKind::Reflect);
}

/// Delays of all valid image paths with up to `order` wall reflections.
fn image_delays(d: [f64; 3], tx: &Vec3, rx: &Vec3, order: usize) -> Vec<f64> {
    let planes = box_planes(d);
    let inside = |p: &Vec3| (0..3).all(|k| p[k] >= -1e-9 && p[k] <= d[k] + 1e-9);
    let mut out = Vec::new();
    let mut seqs: Vec<Vec<usize>> = (0..6).map(|w| vec![w]).collect();
    for _ in 1..order {
        let more: Vec<Vec<usize>> = seqs
            .iter()
            .filter(|s| s.len() == seqs.last().unwrap().len())
            .flat_map(|s| (0..6).filter(|w| w != s.last().unwrap()).map(|w| [s.clone(), vec![w]].concat()))
            .collect();
        seqs.extend(more);
    }
    for s in &seqs {
        let mut img = *tx;
        let mut imgs = vec![];
        for &w in s {
            img = mirror(&img, &planes[w].0, &planes[w].1);
            imgs.push(img);
        }
        let mut target = *rx;
        let mut ok = true;
        for k in (0..s.len()).rev() {
            let (q, n) = planes[s[k]];
            let den = (imgs[k] - target).dot(&n);
            let t = (q - target).dot(&n) / den;
            if !(t > 0.0 && t < 1.0) {
                ok = false;
                break;
            }
            target += (imgs[k] - target) * t;
            if !inside(&target) {
                ok = false;
                break;
            }
        }
        if ok {
            out.push((img - rx).norm() / C0);
        }
    }
    out
}

#[test]
fn box_room_delays_are_image_delays() {
    let d = [4.0, 3.0, 2.5];
    let g = geometry(box_cloud(d, 0.08, 0), vec![]);
    let tx = Vec3::new(1.1, 0.9, 1.4);
    let rx = Vec3::new(3.0, 2.2, 1.1);
    let scene = Scene::new(g, tx, rx, F).unwrap();
    let real = trace(&scene, &specular(100_000, 2)).unwrap();
    let oracle = image_delays(d, &tx, &rx, 2);
    for p in &real.nlos {
        assert!(
            oracle.iter().any(|t| (t - p.gain.tau).abs() * C0 < 1e-6),
            "delay {} not an image delay",
            p.gain.tau
        );
    }
    // All first-order images are found.
    for t in image_delays(d, &tx, &rx, 1) {
        assert!(real.nlos.iter().any(|p| (t - p.gain.tau).abs() * C0 < 1e-6));
    }
    assert!(real.nlos.len() >= 10);
}

fn box_scene(tx: Vec3, rx: Vec3) -> Scene {
    let g = geometry(box_cloud([4.0, 3.0, 2.5], 0.08, 0), vec![]);
    Scene::new(g, tx, rx, F).unwrap()
}

#[test]
fn reception_examples() {
    let cfg = TraceConfig::default();
    let g = geometry(PointCloud::empty(0.05), vec![]);
    let rx = Vec3::new(5.0, 0.0, 0.0);
    let state = RayState {
        origin: Vec3::zeros(),
        dir: Vec3::x(),
        unfolded: 0.0,
        t_max: f64::INFINITY,
    };
    assert!(reception_test(&state, &rx, &cfg, &g));
    let rho = reception_radius(5.0, &cfg);
    let miss = |m: f64| RayState {
        dir: (rx + Vec3::y() * m).normalize(),
        ..state
    };
    // Closest approach of the tilted ray is m cos(a) from rx, and the radius
    // there differs by a factor below 1e-6 for these small tilts.
    assert!(!reception_test(&miss(10.0 * rho), &rx, &cfg, &g));
    assert!(reception_test(&miss(0.9 * rho), &rx, &cfg, &g));
    let wall = rect(
        Vec3::new(2.5, -1.0, -1.0),
        Vec3::y(),
        Vec3::z(),
        2.0,
        2.0,
        0.05,
        -Vec3::x(),
        0,
    );
    let gw = geometry(wall, vec![]);
    assert!(!reception_test(&miss(0.9 * rho), &rx, &cfg, &gw));
}

#[test]
fn terminal_inside_disc_is_rejected() {
    let g = geometry(floor(), vec![]);
    let err = Scene::new(g, Vec3::new(0.05, 0.05, 0.0), Vec3::new(1.0, 0.0, 1.0), F).unwrap_err();
    assert!(matches!(err, Error::TerminalEmbedded));
}

fn golden_section(edge: &EdgeSegment, tx: &Vec3, rx: &Vec3) -> Vec3 {
    let f = |s: f64| {
        let p = edge.point_at(s);
        (tx - p).norm() + (p - rx).norm()
    };
    // Dense scan to bracket, then golden-section refine.
    let m: usize = 2000;
    let best = (0..=m).min_by(|&a, &b| f(a as f64 / m as f64).total_cmp(&f(b as f64 / m as f64))).unwrap();
    let mut lo = (best.saturating_sub(1)) as f64 / m as f64;
    let mut hi = ((best + 1).min(m)) as f64 / m as f64;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    edge.point_at(0.5 * (lo + hi))
}

#[test]
fn fermat_point_matches_line_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 200 {
        let mut v = || Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let (a, b, tx, rx) = (v(), v(), v(), v());
        let axis = (b - a).normalize();
        let n0 = axis.cross(&Vec3::new(0.3, 0.5, 0.7)).normalize();
        let n1 = axis.cross(&n0);
        let edge = EdgeSegment::new([a, b], [n0, n1], PI / 2.0, [0, 0]).unwrap();
        let (p, inside) = fermat_point(&edge, &tx, &rx);
        let q = golden_section(&edge, &tx, &rx);
        assert!((p - q).norm() < 1e-6 || !inside, "{p} vs {q}");
        if inside {
            checked += 1;
        }
    }
}

#[test]
fn no_edges_no_diffraction() {
    let scene = box_scene(Vec3::new(1.0, 1.0, 1.0), Vec3::new(3.0, 2.0, 1.5));
    assert!(enumerate_diffraction(&scene, &TraceConfig::default()).unwrap().is_empty());
}

/// A square column at the origin spanning z in [0, 2].
fn column(h: f64, w: f64) -> (PointCloud, Vec<EdgeSegment>) {
    let (x, y, z) = (Vec3::x(), Vec3::y(), Vec3::z());
    let c = -0.5 * w;
    let parts = [
        rect(Vec3::new(c, c, 0.0), y, z, w, 2.0, h, -x, 0),
        rect(Vec3::new(-c, c, 0.0), y, z, w, 2.0, h, x, 0),
        rect(Vec3::new(c, c, 0.0), x, z, w, 2.0, h, -y, 0),
        rect(Vec3::new(c, -c, 0.0), x, z, w, 2.0, h, y, 0),
    ];
    let cloud = PointCloud::concat(&parts);
    let mut edges = vec![];
    for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
        let p = Vec3::new(sx * -c, sy * -c, 0.0);
        edges.push(
            EdgeSegment::new([p, p + z * 2.0], [x * sx, y * sy], PI / 2.0, [0, 0]).unwrap(),
        );
    }
    (cloud, edges)
}

#[test]
fn column_edge_diffraction_is_found_in_shadow() {
    let (cloud, edges) = column(0.04, 0.6);
    let g = geometry(cloud, edges);
    // Rx hidden behind the column; two corners are seen by both ends.
    let tx = Vec3::new(-3.0, -1.0, 1.0);
    let rx = Vec3::new(2.0, 0.9, 1.2);
    let scene = Scene::new(g, tx, rx, F).unwrap();
    let cfg = TraceConfig {
        n_rays: 20_000,
        ..TraceConfig::default()
    };
    let real = trace(&scene, &cfg).unwrap();
    assert!(real.los.is_none());
    let diff: Vec<_> = real.nlos.iter().filter(|p| p.has_diffraction()).collect();
    assert_eq!(diff.len(), 2);
    for p in diff {
        let h = &p.hops[0];
        let e = Vec3::z();
        assert!((h.dir_in.dot(&e) - h.dir_out.dot(&e)).abs() < 1e-6);
    }
}

#[test]
fn power_filter_boundary() {
    let g = geometry(PointCloud::empty(0.05), vec![]);
    let scene = Scene::new(g, Vec3::zeros(), Vec3::x(), F).unwrap();
    let base = trace(&scene, &TraceConfig::default()).unwrap().los.unwrap();
    let with = |db: f64| {
        let mut p = base.clone();
        p.gain.a = base.gain.a * 10f64.powf(db / 20.0);
        p
    };
    let real = ChannelRealization {
        los: Some(with(0.0)),
        nlos: vec![with(-39.9), with(-40.1)],
        freq: F,
    };
    let f = power_filter(&real, 40.0);
    assert!(f.los.is_some());
    assert_eq!(f.nlos.len(), 1);
    let equal = ChannelRealization {
        los: None,
        nlos: vec![with(-3.0); 4],
        freq: F,
    };
    assert_eq!(power_filter(&equal, 40.0).nlos.len(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn power_filter_matches_scan(dbs in proptest::collection::vec(-80.0f64..0.0, 1..30), floor in 1.0f64..60.0) {
        let g = geometry(PointCloud::empty(0.05), vec![]);
        let scene = Scene::new(g, Vec3::zeros(), Vec3::x(), F).unwrap();
        let base = trace(&scene, &TraceConfig::default()).unwrap().los.unwrap();
        let paths: Vec<_> = dbs.iter().map(|db| {
            let mut p = base.clone();
            p.gain.a = base.gain.a * 10f64.powf(db / 20.0);
            p
        }).collect();
        let real = ChannelRealization { los: None, nlos: paths.clone(), freq: F };
        let kept = power_filter(&real, floor);
        let max = paths.iter().map(|p| p.power_db()).fold(f64::NEG_INFINITY, f64::max);
        let expect: Vec<_> = paths.iter().filter(|p| p.power_db() >= max - floor).cloned().collect();
        prop_assert_eq!(kept.nlos, expect);
    }
}

fn diffuse_cfg(threads: usize) -> TraceConfig {
    TraceConfig {
        n_rays: 20_000,
        n_scatter: 4,
        threads,
        seed: 5,
        ..TraceConfig::default()
    }
}

#[test]
fn deterministic_and_thread_invariant() {
    let scene = box_scene(Vec3::new(1.0, 1.2, 1.3), Vec3::new(3.1, 2.0, 1.0));
    let a = trace(&scene, &diffuse_cfg(1)).unwrap();
    let b = trace(&scene, &diffuse_cfg(1)).unwrap();
    let c = trace(&scene, &diffuse_cfg(3)).unwrap();
    let ja = serde_json::to_string(&a).unwrap();
    assert_eq!(ja, serde_json::to_string(&b).unwrap());
    assert_eq!(ja, serde_json::to_string(&c).unwrap());
    assert!(a.nlos.iter().any(|p| p.n_scatter() == 1));
}

#[test]
fn hops_obey_mechanism_laws_and_budgets() {
    let (col, edges) = column(0.05, 0.5);
    let room = box_cloud([4.0, 3.0, 2.5], 0.08, 0);
    let col = col.translated(&Vec3::new(2.0, 1.5, 0.0));
    let edges = edges
        .iter()
        .map(|e| {
            let o = Vec3::new(2.0, 1.5, 0.0);
            EdgeSegment::new([e.endpoints[0] + o, e.endpoints[1] + o], e.wedge_faces, e.interior_angle, e.materials)
                .unwrap()
        })
        .collect();
    let mut cloud = PointCloud::concat(&[room.clone(), col]);
    cloud.point_radius = room.point_radius;
    let g = geometry(cloud, edges);
    let scene = Scene::new(g, Vec3::new(0.7, 0.6, 1.2), Vec3::new(3.4, 2.5, 1.0), F).unwrap();
    let cfg = diffuse_cfg(0);
    let real = trace(&scene, &cfg).unwrap();
    assert!(real.nlos.iter().any(|p| p.has_diffraction()));
    for p in &real.nlos {
        assert!(p.bounce_count() <= cfg.max_bounces);
        assert!(p.n_scatter() <= cfg.max_diffuse);
        let total = p.total_length();
        assert!((total / C0 - p.gain.tau).abs() < 1e-15);
        for h in &p.hops {
            match h.kind {
                HopKind::Reflect => {
                    let r = reflect_dir(&h.dir_in, &h.normal).unwrap();
                    assert!((r - h.dir_out).norm() < 1e-9);
                }
                HopKind::Scatter => {
                    assert!(h.dir_in.dot(&h.normal) < 0.0);
                    assert!(h.dir_out.dot(&h.normal) > 0.0);
                }
                HopKind::Diffract => {
                    assert!((h.dir_in.z - h.dir_out.z).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn constrained_count_never_exceeds_unconstrained() {
    let scene = box_scene(Vec3::new(1.3, 0.8, 1.0), Vec3::new(2.9, 2.3, 1.6));
    let base = TraceConfig {
        n_rays: 10_000,
        n_scatter: 2,
        power_floor_db: 300.0,
        ..TraceConfig::default()
    };
    let loose = TraceConfig {
        max_bounces: 4,
        max_diffuse: 2,
        ..base.clone()
    };
    let a = trace(&scene, &base).unwrap().len();
    let b = trace(&scene, &loose).unwrap().len();
    assert!(a <= b, "{a} > {b}");
}

#[test]
fn denser_launch_keeps_specular_delays() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..3 {
        let mut v = || Vec3::new(rng.gen_range(0.4..3.6), rng.gen_range(0.4..2.6), rng.gen_range(0.4..2.1));
        let (tx, rx) = (v(), v());
        let scene = box_scene(tx, rx);
        let small = trace(&scene, &specular(5_000, 2)).unwrap();
        let big = trace(&scene, &specular(20_000, 2)).unwrap();
        for p in &small.nlos {
            assert!(big.nlos.iter().any(|q| (q.gain.tau - p.gain.tau).abs() * C0 < scene.geometry.cloud.point_radius));
        }
    }
}

#[test]
fn specular_paths_are_reciprocal() {
    let tx = Vec3::new(0.9, 0.7, 1.5);
    let rx = Vec3::new(3.2, 2.1, 0.9);
    let fwd = trace(&box_scene(tx, rx), &specular(50_000, 2)).unwrap();
    let bwd = trace(&box_scene(rx, tx), &specular(50_000, 2)).unwrap();
    assert_eq!(fwd.nlos.len(), bwd.nlos.len());
    for p in &fwd.nlos {
        let q = bwd
            .nlos
            .iter()
            .find(|q| (q.gain.tau - p.gain.tau).abs() * C0 < 1e-6)
            .expect("reverse path");
        assert!((p.power_db() - q.power_db()).abs() < 1e-6);
    }
}
