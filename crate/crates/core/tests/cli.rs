use std::path::Path;

use cloudray::cli::{cmd_eval, cmd_gen_scene, cmd_rollout, cmd_trace, run};
use cloudray::io::{read_channel, SceneFile};
use cloudray::surrogate::{Mechanism, SurrogateConfig, SurrogateModel};
use cloudray::tracer::TraceConfig;

const BOX: &str = r#"
extents = [4.0, 3.0, 2.5]
wall_materials = [0, 1, 2, 3]
floor_material = 5
ceiling_material = 3
spacing = 0.1
"#;

fn write_spec(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("box.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn gen_scene_writes_files_that_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), BOX);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let s = cmd_gen_scene(&spec, &a, 7).unwrap();
    cmd_gen_scene(&spec, &b, 7).unwrap();
    for f in ["room.toml", "scene.toml", "cloud.pts", "materials.toml"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    assert_eq!(read_all(&a), read_all(&b));
    let loaded = SceneFile::load(&a.join("scene.toml")).unwrap();
    assert_eq!(loaded.geometry.cloud.len(), s.points);
    assert_eq!(loaded.geometry.edges.len(), s.edges);
    let room = cloudray::scenegen::gen_room(&cloudray::scenegen::RoomSpec::from_toml_str(BOX).unwrap(), 7).unwrap();
    assert_eq!(loaded.geometry.cloud, room.cloud);
    assert_eq!(loaded.geometry.edges, room.edges);
    loaded.scene().unwrap();
}

#[test]
fn unknown_material_exits_two_naming_it() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), &BOX.replace("floor_material = 5", "floor_material = 77"));
    let out = tmp.path().join("o");
    let err = cmd_gen_scene(&spec, &out, 0).unwrap_err();
    assert!(err.to_string().contains("77"), "{err}");
    let code = run(["cloudray", "--out", out.to_str().unwrap(), "gen-scene", spec.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn malformed_spec_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "extents = [4.0, 3.0, 2.5]\nwall_materials = [0, 1\n");
    let err = cmd_gen_scene(&spec, &tmp.path().join("o"), 0).unwrap_err();
    assert!(matches!(err, cloudray::Error::Parse { line, .. } if line >= 2), "{err}");
}

#[test]
fn empty_room_trace_is_friis() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene.toml");
    std::fs::write(tmp.path().join("cloud.pts"), "pointcloud count=0 normals=true point_radius=0.1\n").unwrap();
    std::fs::write(&scene, "cloud = \"cloud.pts\"\ntx = [0.0, 0.0, 1.0]\nrx = [5.0, 0.0, 1.0]\nfreq = 28e9\n").unwrap();
    let out = tmp.path().join("trace");
    assert_eq!(cmd_trace(&scene, None, &TraceConfig::default(), &out).unwrap(), 1);
    let ch = read_channel(&out.join("link.json")).unwrap();
    assert_eq!(ch.paths.len(), 1);
    assert!(ch.paths[0].los);
    let lambda = 299_792_458.0 / 28e9;
    let friis = 20.0 * (4.0 * std::f64::consts::PI * 5.0 / lambda).log10();
    assert!((-ch.paths[0].power_db - friis).abs() < 0.01, "{}", ch.paths[0].power_db);
}

#[test]
fn eval_of_identical_dirs_is_zero_and_random_rollout_completes() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), BOX);
    let scene_dir = tmp.path().join("scene");
    cmd_gen_scene(&spec, &scene_dir, 3).unwrap();
    let scene = scene_dir.join("scene.toml");
    let cfg = TraceConfig {
        n_rays: 2000,
        ..TraceConfig::default()
    };
    let truth = tmp.path().join("truth");
    cmd_trace(&scene, None, &cfg, &truth).unwrap();
    let s = cmd_eval(&truth, &truth, &tmp.path().join("eval")).unwrap();
    assert_eq!(s.n_links, 1);
    assert_eq!((s.pl_rmse_db, s.ds_rmse_ns), (0.0, 0.0));
    assert!(s.angle_deg.iter().flatten().all(|a| *a == 0.0));
    assert!(tmp.path().join("eval/eval.csv").is_file());

    let mut config = SurrogateConfig::desk();
    config.crop_points = 32;
    let (det, non) = (tmp.path().join("det.ckpt.json"), tmp.path().join("non.ckpt.json"));
    SurrogateModel::new(config.clone(), Mechanism::Deterministic).unwrap().save(&det).unwrap();
    SurrogateModel::new(config, Mechanism::NonDeterministic).unwrap().save(&non).unwrap();
    let pred = tmp.path().join("pred");
    assert_eq!(cmd_rollout(&scene, &det, &non, None, &cfg, &pred).unwrap(), 1);
    let diag: serde_json::Value = serde_json::from_slice(&std::fs::read(pred.join("diagnostics.json")).unwrap()).unwrap();
    assert!(diag["link"]["launched"].as_u64().unwrap() > 0);
    assert!(diag["link"]["rejected_hops"].is_u64());
    cmd_eval(&pred, &truth, &tmp.path().join("eval2")).unwrap();
}

#[test]
fn accept_fast_writes_a_passing_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("accept");
    let code = run(["cloudray", "--out", out.to_str().unwrap(), "accept", "fast"]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["criteria"].as_array().unwrap().len(), 10);
    assert!(out.join("resolved.json").is_file());
}

#[test]
fn corrupted_checkpoint_fails_the_named_criterion() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = tmp.path().join("det.ckpt.json");
    std::fs::write(&ckpt, "{\"not\": \"a checkpoint\"}").unwrap();
    let opts = cloudray::acceptance::AcceptOptions {
        det_checkpoint: Some(ckpt),
        ..Default::default()
    };
    let mut suite = cloudray::acceptance::Suite::new(opts);
    let c = suite.criterion(5);
    assert!(!c.passed());
    assert_eq!(c.name, "direction_learning");
    assert!(c.detail.contains("error"), "{}", c.detail);
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(run(["cloudray", "no-such-command"]), 2);
}
