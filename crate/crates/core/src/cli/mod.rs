//! Command-line pipeline: scene generation, tracing, dataset build,
//! training, rollout, evaluation and the acceptance suite.
//!
//! Every command writes `resolved.json` (the merged configuration and the
//! derived sub-seeds) next to its outputs.

mod eval;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::acceptance::{run_suite, AcceptOptions, Level, Report};
use crate::error::{Error, Result};
use crate::io::{write_channel, ChannelFile, SceneFile};
use crate::metrics::{write_csv, LinkRow};
use crate::scenegen::{gen_dataset, gen_room, place_links, Dataset, DatasetConfig, Link, RoomSpec, Split};
use crate::seed::named;
use crate::surrogate::{rollout, Mechanism, SurrogateConfig, SurrogateModel, TrainConfig, TrainItem};
use crate::tracer::{trace, Scene, TraceConfig};

pub use eval::{cmd_eval, EvalRow, EvalSummary};

/// Environment variable naming the default output root.
pub const DATA_ROOT_VAR: &str = "CLOUDRAY_DATA";

#[derive(Debug, Parser)]
#[command(name = "cloudray", version, about = "Point-cloud ray tracing and neural surrogate pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Global {
    /// TOML configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Output directory; defaults to `$CLOUDRAY_DATA/<command>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Fast,
    Full,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a room spec into a scene.
    GenScene { spec: PathBuf },
    /// Trace one scene, or every link of a links file against it.
    Trace {
        scene: PathBuf,
        #[arg(long)]
        links: Option<PathBuf>,
    },
    /// Generate rooms, place links and build a ray-level dataset.
    Dataset {
        #[arg(long, required = true)]
        spec: Vec<PathBuf>,
        #[arg(long, default_value_t = 60)]
        links: usize,
    },
    /// Train both mechanism networks on a dataset.
    Train { dataset: PathBuf },
    /// Multi-bounce inference with trained networks.
    Rollout {
        scene: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        non: PathBuf,
        #[arg(long)]
        links: Option<PathBuf>,
    },
    /// Compare predicted and reference channel files.
    Eval { pred: PathBuf, truth: PathBuf },
    /// Run the acceptance criteria.
    Accept {
        #[arg(value_enum, default_value_t = LevelArg::Fast)]
        level: LevelArg,
        /// Replace the trained deterministic network by this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn out_dir(global: &Global, name: &str) -> PathBuf {
    global.out.clone().unwrap_or_else(|| {
        std::env::var_os(DATA_ROOT_VAR)
            .map_or_else(|| PathBuf::from("cloudray-data"), PathBuf::from)
            .join(name)
    })
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let src = std::fs::read_to_string(path)?;
    toml::from_str(&src).map_err(|e| Error::Parse {
        line: e
            .span()
            .map_or(0, |s| src[..s.start.min(src.len())].matches('\n').count() + 1),
        msg: e.message().to_string(),
    })
}

#[derive(Serialize)]
struct Snapshot<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    threads: usize,
    seeds: BTreeMap<&'static str, u64>,
    config: &'a T,
}

fn write_snapshot<T: Serialize>(out: &Path, command: &str, global: &Global, config: &T) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let seeds = ["scene", "trace", "train", "links", "split"]
        .into_iter()
        .map(|n| (n, named(global.seed, n)))
        .collect();
    let snap = Snapshot {
        command,
        seed: global.seed,
        threads: global.threads,
        seeds,
        config,
    };
    std::fs::write(out.join("resolved.json"), serde_json::to_vec_pretty(&snap)?)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(v)?)?;
    Ok(())
}

/// Summary printed by `gen-scene`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSummary {
    pub points: usize,
    pub edges: usize,
}

/// Writes `room.toml`, `cloud.pts`, `materials.toml` and `scene.toml` with
/// one seeded link at 28 GHz.
pub fn cmd_gen_scene(spec_path: &Path, out: &Path, seed: u64) -> Result<SceneSummary> {
    let spec = RoomSpec::load(spec_path)?;
    let room = gen_room(&spec, seed)?;
    let geo = room.geometry()?;
    let link = &place_links(&room, "scene", 1, seed)?[0];
    let file = SceneFile {
        tx: Some(link.tx.into()),
        rx: Some(link.rx.into()),
        freq: Some(28e9),
        ..SceneFile::geometry_only(&geo)
    };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("room.toml"), spec.to_toml_string())?;
    file.write_with(&out.join("scene.toml"), &geo)?;
    Ok(SceneSummary {
        points: room.cloud.len(),
        edges: room.edges.len(),
    })
}

fn read_links(path: &Path) -> Result<Vec<Link>> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// Links to run against a loaded scene: those of `links_path`, or the
/// scene file's own terminals.
fn scenes_for(scene_path: &Path, links_path: Option<&Path>) -> Result<Vec<(String, Scene)>> {
    let loaded = SceneFile::load(scene_path)?;
    match links_path {
        None => Ok(vec![("link".to_string(), loaded.scene()?)]),
        Some(p) => {
            let freq = loaded.file.freq.unwrap_or(28e9);
            read_links(p)?
                .into_iter()
                .map(|l| Ok((l.id, Scene::new(loaded.geometry.clone(), l.tx, l.rx, freq)?)))
                .collect()
        }
    }
}

fn write_channels(out: &Path, results: &[(String, crate::tracer::ChannelRealization)]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for (id, real) in results {
        write_channel(&out.join(format!("{id}.json")), &ChannelFile::of(id, real))?;
        if !real.is_empty() {
            rows.push(LinkRow::of(id, real)?);
        }
    }
    write_csv(&rows, std::fs::File::create(out.join("links.csv"))?)
}

/// Trace each link; one `<link>.json` channel file per link plus `links.csv`.
pub fn cmd_trace(scene_path: &Path, links: Option<&Path>, cfg: &TraceConfig, out: &Path) -> Result<usize> {
    let mut results = Vec::new();
    for (i, (id, scene)) in scenes_for(scene_path, links)?.into_iter().enumerate() {
        let c = TraceConfig {
            seed: crate::seed::mix(cfg.seed, &[i as u64]),
            ..cfg.clone()
        };
        results.push((id, trace(&scene, &c)?));
    }
    write_channels(out, &results)?;
    Ok(results.len())
}

/// Rooms from `specs` (scene names are the file stems), `n_links` links per
/// room, traced into a dataset at `out`.
pub fn cmd_dataset(specs: &[PathBuf], n_links: usize, cfg: &DatasetConfig, out: &Path, seed: u64) -> Result<Dataset> {
    let mut scenes = BTreeMap::new();
    let mut links = Vec::new();
    for p in specs {
        let name = p
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::invalid(format!("bad spec path {}", p.display())))?
            .to_string();
        let room = gen_room(&RoomSpec::load(p)?, seed)?;
        links.extend(place_links(&room, &name, n_links, seed)?);
        scenes.insert(name, room.geometry()?);
    }
    let ds = gen_dataset(&scenes, &links, cfg, seed)?;
    ds.write(out, &scenes)?;
    for split in [Split::Train, Split::Test] {
        let l: Vec<&Link> = ds.links_in(split);
        let name = if split == Split::Train { "train_links.json" } else { "test_links.json" };
        write_json(&out.join(name), &l)?;
    }
    Ok(ds)
}

/// Configuration file of `train`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub surrogate: SurrogateConfig,
    pub train: TrainConfig,
}

/// Train one network per mechanism on the training split. Writes
/// `det.ckpt.json`, `non.ckpt.json` and their loss curves.
pub fn cmd_train(dataset: &Path, cfg: &TrainFile, out: &Path) -> Result<()> {
    let ds = Dataset::load(dataset)?;
    let scenes = ds.load_scenes(dataset)?;
    let mut items = Vec::new();
    for (entry, link) in ds.manifest.links.iter().zip(&ds.links) {
        if entry.split != Split::Train {
            continue;
        }
        let geo = scenes
            .get(&entry.link.scene)
            .ok_or_else(|| Error::Schema(format!("unknown scene {}", entry.link.scene)))?;
        items.extend(TrainItem::prepare(geo, &link.samples, &cfg.surrogate)?);
    }
    std::fs::create_dir_all(out)?;
    for m in [Mechanism::Deterministic, Mechanism::NonDeterministic] {
        let mut model = SurrogateModel::new(cfg.surrogate.clone(), m)?;
        let report = crate::surrogate::train(&mut model, &items, &cfg.train)?;
        report.write_csv(&out.join(format!("{}_loss.csv", m.name())))?;
        model.save(&out.join(format!("{}.ckpt.json", m.name())))?;
    }
    Ok(())
}

/// Rollout per link; channel files as for `trace` plus `diagnostics.json`.
pub fn cmd_rollout(
    scene_path: &Path,
    det: &Path,
    non: &Path,
    links: Option<&Path>,
    cfg: &TraceConfig,
    out: &Path,
) -> Result<usize> {
    let det = SurrogateModel::load(det)?;
    let non = SurrogateModel::load(non)?;
    let mut results = Vec::new();
    let mut diags = BTreeMap::new();
    for (id, scene) in scenes_for(scene_path, links)? {
        let (real, d) = rollout(&scene, &det, &non, cfg)?;
        diags.insert(id.clone(), d);
        results.push((id, real));
    }
    write_channels(out, &results)?;
    write_json(&out.join("diagnostics.json"), &diags)?;
    Ok(results.len())
}

/// Runs the suite and writes `report.json`; failures are listed in the
/// returned error.
pub fn cmd_accept(level: Level, opts: &AcceptOptions, out: &Path) -> Result<Report> {
    let report = run_suite(level, opts)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.json"), report.to_json())?;
    Ok(report)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let g = &cli.global;
    let cfg_path = g.config.as_deref();
    match &cli.command {
        Command::GenScene { spec } => {
            let out = out_dir(g, "scene");
            let seed = named(g.seed, "scene");
            write_snapshot(&out, "gen-scene", g, &serde_json::json!({ "spec": spec, "scene_seed": seed }))?;
            let s = cmd_gen_scene(spec, &out, seed)?;
            println!("{} points, {} edges -> {}", s.points, s.edges, out.display());
        }
        Command::Trace { scene, links } => {
            let out = out_dir(g, "trace");
            let mut cfg: TraceConfig = read_config(cfg_path)?;
            cfg.seed = named(g.seed, "trace");
            cfg.threads = g.threads;
            write_snapshot(&out, "trace", g, &cfg)?;
            let n = cmd_trace(scene, links.as_deref(), &cfg, &out)?;
            println!("traced {n} link(s) -> {}", out.display());
        }
        Command::Dataset { spec, links } => {
            let out = out_dir(g, "dataset");
            let mut cfg: DatasetConfig = read_config(cfg_path)?;
            cfg.trace.threads = g.threads;
            write_snapshot(&out, "dataset", g, &cfg)?;
            let ds = cmd_dataset(spec, *links, &cfg, &out, g.seed)?;
            let (d, n): (usize, usize) = ds.manifest.links.iter().fold((0, 0), |a, e| (a.0 + e.det, a.1 + e.non));
            println!("{} links, {d} det / {n} non samples -> {}", ds.manifest.links.len(), out.display());
        }
        Command::Train { dataset } => {
            let out = out_dir(g, "train");
            let mut cfg: TrainFile = read_config(cfg_path)?;
            cfg.train.seed = named(g.seed, "train");
            cfg.surrogate.seed = named(g.seed, "train");
            write_snapshot(&out, "train", g, &cfg)?;
            cmd_train(dataset, &cfg, &out)?;
            println!("checkpoints -> {}", out.display());
        }
        Command::Rollout { scene, det, non, links } => {
            let out = out_dir(g, "rollout");
            let mut cfg: TraceConfig = read_config(cfg_path)?;
            cfg.seed = named(g.seed, "trace");
            cfg.threads = g.threads;
            write_snapshot(&out, "rollout", g, &cfg)?;
            let n = cmd_rollout(scene, det, non, links.as_deref(), &cfg, &out)?;
            println!("rolled out {n} link(s) -> {}", out.display());
        }
        Command::Eval { pred, truth } => {
            let out = out_dir(g, "eval");
            write_snapshot(&out, "eval", g, &serde_json::json!({ "pred": pred, "truth": truth }))?;
            let s = cmd_eval(pred, truth, &out)?;
            println!(
                "{} links: PL RMSE {:.3} dB, DS RMSE {:.3} ns",
                s.n_links, s.pl_rmse_db, s.ds_rmse_ns
            );
        }
        Command::Accept { level, checkpoint } => {
            let out = out_dir(g, "accept");
            let mut opts: AcceptOptions = read_config(cfg_path)?;
            opts.seed = g.seed;
            opts.threads = g.threads;
            if checkpoint.is_some() {
                opts.det_checkpoint = checkpoint.clone();
            }
            let level = match level {
                LevelArg::Fast => Level::Fast,
                LevelArg::Full => Level::Full,
            };
            write_snapshot(&out, "accept", g, &opts)?;
            let report = cmd_accept(level, &opts, &out)?;
            for c in &report.criteria {
                println!("{}", c.line());
            }
            let failed: Vec<String> = report.failed().map(|c| c.name.clone()).collect();
            if !failed.is_empty() {
                eprintln!("failed: {}", failed.join(", "));
                return Ok(1);
            }
        }
    }
    Ok(0)
}

/// Parse `args` and run. Returns the process exit code: 0 success, 1 an
/// acceptance criterion failed, 2 input error, 3 numerical failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
