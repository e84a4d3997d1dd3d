use std::collections::BTreeMap;
use std::sync::Arc;

use cloudray::geometry::Vec3;
use cloudray::scenegen::{
    gen_dataset, gen_room, make_eval_suite, room_a, room_b, room_c, Dataset, DatasetConfig, Link, RoomScene,
    RoomSpec, Split,
};
use cloudray::seed::{mix, named};
use cloudray::tracer::{trace, HopKind, Scene, SceneGeometry, TraceConfig};

fn on_column(room: &RoomScene, p: &Vec3, margin: f64) -> bool {
    room.spec.columns.iter().any(|c| {
        (p.x - c.center[0]).abs() <= c.radius + margin
            && (p.y - c.center[1]).abs() <= c.radius + margin
            && p.z <= c.height + margin
    })
}

fn key(p: &Vec3) -> [u64; 3] {
    [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
}

#[test]
fn rooms_a_and_b_share_walls_not_columns() {
    let (a, b) = (gen_room(&room_a(), 4).unwrap(), gen_room(&room_b(), 4).unwrap());
    let margin = 2.0 * a.spec.spacing;
    let far = |p: &Vec3| !on_column(&a, p, margin) && !on_column(&b, p, margin);
    let walls = |r: &RoomScene| {
        let mut v: Vec<[u64; 3]> = r.cloud.positions.iter().filter(|p| far(p)).map(key).collect();
        v.sort_unstable();
        v
    };
    assert_eq!(walls(&a), walls(&b));
    let cols = |r: &RoomScene, other: &RoomScene| -> Vec<[u64; 3]> {
        r.cloud
            .positions
            .iter()
            .filter(|p| on_column(r, p, 1e-9) && !on_column(other, p, margin))
            .map(key)
            .collect()
    };
    let ca: std::collections::HashSet<_> = cols(&a, &b).into_iter().collect();
    let cb = cols(&b, &a);
    assert!(!ca.is_empty() && !cb.is_empty());
    assert!(cb.iter().all(|k| !ca.contains(k)));
}

#[test]
fn room_c_has_other_extents() {
    assert_ne!(room_c().extents, room_a().extents);
}

#[test]
fn suite_rooms_trace_at_ten_thousand_rays() {
    let suite = make_eval_suite(2, [20, 20, 20]).unwrap();
    assert_eq!(suite.rooms.len(), 3);
    let cfg = TraceConfig {
        n_rays: 10_000,
        ..TraceConfig::default()
    };
    for room in &suite.rooms {
        assert!(room.links.len() >= 20);
        let l = &room.links[0];
        let real = trace(&Scene::new(room.geometry.clone(), l.tx, l.rx, 28e9).unwrap(), &cfg).unwrap();
        assert!(!real.is_empty(), "{}", room.name);
    }
}

#[test]
fn links_keep_clear_of_surfaces() {
    let suite = make_eval_suite(3, [20, 20, 20]).unwrap();
    for room in &suite.rooms {
        for l in &room.links {
            assert!(room.room.clearance(&l.tx) >= 0.5 && room.room.clearance(&l.rx) >= 0.5);
            assert!((1.0..=2.0).contains(&l.tx.z) && (1.0..=2.0).contains(&l.rx.z));
        }
    }
}

fn small_room() -> RoomSpec {
    RoomSpec::from_toml_str(
        r#"
extents = [4.0, 3.0, 2.5]
wall_materials = [0, 1, 2, 3]
floor_material = 5
ceiling_material = 3
spacing = 0.1
"#,
    )
    .unwrap()
}

fn small_dataset(seed: u64) -> (BTreeMap<String, Arc<SceneGeometry>>, Vec<Link>, DatasetConfig, Dataset) {
    let room = gen_room(&small_room(), 1).unwrap();
    let links = cloudray::scenegen::place_links(&room, "box", 12, 5).unwrap();
    let scenes: BTreeMap<_, _> = [("box".to_string(), room.geometry().unwrap())].into();
    let cfg = DatasetConfig {
        trace: TraceConfig {
            n_rays: 4000,
            max_bounces: 2,
            n_scatter: 1,
            ..TraceConfig::default()
        },
        ..DatasetConfig::default()
    };
    let ds = gen_dataset(&scenes, &links, &cfg, seed).unwrap();
    (scenes, links, cfg, ds)
}

#[test]
fn samples_recount_and_reproduce_their_paths() {
    let (scenes, links, cfg, ds) = small_dataset(9);
    let root = named(9, "trace");
    for (li, (link, ls)) in links.iter().zip(&ds.links).enumerate() {
        let scene = Scene::new(scenes["box"].clone(), link.tx, link.rx, cfg.freq).unwrap();
        let real = trace(
            &scene,
            &TraceConfig {
                seed: mix(root, &[li as u64]),
                ..cfg.trace.clone()
            },
        )
        .unwrap();
        let expected: usize = real.nlos.iter().map(|p| p.hops.len()).sum();
        assert_eq!(ls.samples.len(), expected);
        for s in &ls.samples {
            let hop = &real.nlos[s.path].hops[s.bounce];
            assert_eq!((s.position, s.d_in, s.d_out, s.amp), (hop.position, hop.dir_in, hop.dir_out, hop.local));
        }
    }
}

#[test]
fn split_is_by_link_five_to_one() {
    let (_, _, _, ds) = small_dataset(11);
    let kept = ds.manifest.links.iter().filter(|e| e.split != Split::Excluded).count();
    let test = ds.links_in(Split::Test).len();
    assert!((test as f64 - kept as f64 / 6.0).abs() <= 1.0);
    for e in &ds.manifest.links {
        assert_eq!(e.split == Split::Excluded, e.det + e.non == 0);
    }
}

#[test]
fn dataset_is_byte_identical_under_seed() {
    let (scenes, _, _, a) = small_dataset(13);
    let (_, _, _, b) = small_dataset(13);
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.write(da.path(), &scenes).unwrap();
    b.write(db.path(), &scenes).unwrap();
    let files = |d: &std::path::Path| -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![d.to_path_buf()];
        while let Some(p) = stack.pop() {
            for e in std::fs::read_dir(&p).unwrap() {
                let e = e.unwrap().path();
                if e.is_dir() {
                    stack.push(e);
                } else {
                    out.push((e.strip_prefix(d).unwrap().display().to_string(), std::fs::read(&e).unwrap()));
                }
            }
        }
        out.sort();
        out
    };
    let fa = files(da.path());
    assert!(fa.len() > 3);
    assert_eq!(fa, files(db.path()));
    let back = Dataset::load(da.path()).unwrap();
    assert_eq!(back.manifest, a.manifest);
    assert_eq!(back.links, a.links);
}

#[test]
fn single_plane_gives_single_bounce_reflections() {
    let cfg = cloudray::scenegen::PlanarConfig {
        n_planes: 3,
        per_plane: 20,
        ..Default::default()
    };
    for set in cloudray::scenegen::planar_samples(&cfg, 1).unwrap() {
        assert!(set
            .samples
            .iter()
            .all(|s| s.kind == HopKind::Reflect && s.bounce == 0 && s.mechanism().name() == "det"));
    }
}
