use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RoomScene;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::io::SceneFile;
use crate::nn::config_hash;
use crate::seed::{mix, named};
use crate::surrogate::RaySample;
use crate::tracer::{trace, Scene, SceneGeometry, TraceConfig};

pub const DATASET_SCHEMA: &str = "cloudray-dataset";
pub const DATASET_VERSION: u32 = 1;

/// Transmitter/receiver pair inside a named scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub scene: String,
    pub tx: Vec3,
    pub rx: Vec3,
}

/// Minimum terminal clearance from any surface (m).
pub const MIN_CLEARANCE: f64 = 0.5;
/// Minimum tx-rx separation (m).
pub const MIN_SEPARATION: f64 = 1.0;

fn place_point(room: &RoomScene, rng: &mut ChaCha8Rng) -> Result<Vec3> {
    let [dx, dy, _] = room.spec.extents;
    for _ in 0..10_000 {
        let p = Vec3::new(
            rng.gen_range(MIN_CLEARANCE..dx - MIN_CLEARANCE),
            rng.gen_range(MIN_CLEARANCE..dy - MIN_CLEARANCE),
            rng.gen_range(1.0..2.0),
        );
        if room.clearance(&p) >= MIN_CLEARANCE {
            return Ok(p);
        }
    }
    Err(Error::invalid("no free terminal position in room"))
}

/// `n` links at heights 1-2 m, at least 0.5 m from every surface and 1 m
/// apart. Link ids are `{scene}-{i:03}`.
pub fn place_links(room: &RoomScene, scene: &str, n: usize, seed: u64) -> Result<Vec<Link>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(named(seed, "links"), &[named(0, scene)]));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let tx = place_point(room, &mut rng)?;
        let rx = place_point(room, &mut rng)?;
        if (tx - rx).norm() < MIN_SEPARATION {
            continue;
        }
        out.push(Link {
            id: format!("{scene}-{:03}", out.len()),
            scene: scene.to_string(),
            tx,
            rx,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub trace: TraceConfig,
    pub freq: f64,
    /// Test links per training link is `1 / train_per_test`.
    pub train_per_test: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            trace: TraceConfig {
                n_rays: 20_000,
                ..TraceConfig::default()
            },
            freq: 28e9,
            train_per_test: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    /// No NLOS path was found; the link carries no samples.
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub link: Link,
    pub split: Split,
    pub det: usize,
    pub non: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: String,
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub config: DatasetConfig,
    /// Scene name to scene file, relative to the dataset directory.
    pub scenes: BTreeMap<String, String>,
    pub links: Vec<LinkEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSamples {
    pub link: String,
    pub samples: Vec<RaySample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub links: Vec<LinkSamples>,
}

impl Dataset {
    /// Samples of every link in `split`.
    pub fn samples(&self, split: Split) -> impl Iterator<Item = &RaySample> {
        self.manifest
            .links
            .iter()
            .zip(&self.links)
            .filter(move |(e, _)| e.split == split)
            .flat_map(|(_, l)| l.samples.iter())
    }

    pub fn links_in(&self, split: Split) -> Vec<&Link> {
        self.manifest
            .links
            .iter()
            .filter(|e| e.split == split)
            .map(|e| &e.link)
            .collect()
    }

    /// Writes `manifest.json`, one `samples/<link>.json` per link and the
    /// scene geometry under `scenes/`.
    pub fn write(&self, dir: &Path, scenes: &BTreeMap<String, Arc<SceneGeometry>>) -> Result<()> {
        std::fs::create_dir_all(dir.join("samples"))?;
        for (name, file) in &self.manifest.scenes {
            let geo = scenes
                .get(name)
                .ok_or_else(|| Error::invalid(format!("no geometry for scene {name}")))?;
            SceneFile::geometry_only(geo).write_with(&dir.join(file), geo)?;
        }
        for (e, l) in self.manifest.links.iter().zip(&self.links) {
            std::fs::write(dir.join(&e.file), serde_json::to_vec(l)?)?;
        }
        std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(())
    }

    /// Geometry of every scene named in the manifest.
    pub fn load_scenes(&self, dir: &Path) -> Result<BTreeMap<String, Arc<SceneGeometry>>> {
        self.manifest
            .scenes
            .iter()
            .map(|(name, file)| Ok((name.clone(), SceneFile::load(&dir.join(file))?.geometry)))
            .collect()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
        if manifest.schema != DATASET_SCHEMA || manifest.version != DATASET_VERSION {
            return Err(Error::Schema(format!(
                "expected {DATASET_SCHEMA} v{DATASET_VERSION}, found {} v{}",
                manifest.schema, manifest.version
            )));
        }
        let mut links = Vec::with_capacity(manifest.links.len());
        for e in &manifest.links {
            let l: LinkSamples = serde_json::from_slice(&std::fs::read(dir.join(&e.file))?)?;
            if l.link != e.link.id {
                return Err(Error::Schema(format!("{} holds link {}", e.file, l.link)));
            }
            links.push(l);
        }
        Ok(Dataset { manifest, links })
    }
}

/// Trace every link and split each NLOS path into per-hop samples.
///
/// Splits are by link so no link contributes to both sides.
pub fn gen_dataset(
    scenes: &BTreeMap<String, Arc<SceneGeometry>>,
    links: &[Link],
    cfg: &DatasetConfig,
    seed: u64,
) -> Result<Dataset> {
    if cfg.train_per_test == 0 {
        return Err(Error::invalid("train_per_test must be positive"));
    }
    let mut entries = Vec::with_capacity(links.len());
    let mut out = Vec::with_capacity(links.len());
    let trace_root = named(seed, "trace");
    for (li, link) in links.iter().enumerate() {
        let geo = scenes
            .get(&link.scene)
            .ok_or_else(|| Error::invalid(format!("link {} names unknown scene {}", link.id, link.scene)))?;
        let scene = Scene::new(geo.clone(), link.tx, link.rx, cfg.freq)?;
        let tc = TraceConfig {
            seed: mix(trace_root, &[li as u64]),
            ..cfg.trace.clone()
        };
        let real = trace(&scene, &tc)?;
        let samples = decompose(&scene, &real.nlos)?;
        let det = samples.iter().filter(|s| s.kind.is_deterministic()).count();
        entries.push(LinkEntry {
            link: link.clone(),
            split: if samples.is_empty() { Split::Excluded } else { Split::Train },
            det,
            non: samples.len() - det,
            file: format!("samples/{}.json", link.id),
        });
        out.push(LinkSamples {
            link: link.id.clone(),
            samples,
        });
    }
    let mut kept: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].split != Split::Excluded).collect();
    kept.shuffle(&mut ChaCha8Rng::seed_from_u64(named(seed, "split")));
    let n_test = (kept.len() as f64 / (cfg.train_per_test + 1) as f64).round() as usize;
    for &i in &kept[..n_test] {
        entries[i].split = Split::Test;
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            schema: DATASET_SCHEMA.into(),
            version: DATASET_VERSION,
            seed,
            config_hash: config_hash(&serde_json::to_value(cfg)?)?,
            config: cfg.clone(),
            scenes: scenes.keys().map(|k| (k.clone(), format!("scenes/{k}/scene.toml"))).collect(),
            links: entries,
        },
        links: out,
    })
}

fn decompose(scene: &Scene, paths: &[crate::tracer::TracedPath]) -> Result<Vec<RaySample>> {
    let geo = &scene.geometry;
    let mut samples = Vec::new();
    for (pi, path) in paths.iter().enumerate() {
        for (b, hop) in path.hops.iter().enumerate() {
            let point_id = match hop.point_id {
                Some(id) => id,
                None => match geo.index.as_ref().and_then(|i| i.knn(&hop.position, 1).first().copied()) {
                    Some((id, _)) => id,
                    None => continue,
                },
            };
            samples.push(RaySample {
                tx: scene.tx,
                rx: scene.rx,
                position: hop.position,
                point_id,
                d_in: hop.dir_in,
                d_out: hop.dir_out,
                amp: hop.local,
                material: hop.material.clone(),
                kind: hop.kind,
                bounce: b,
                path: pi,
            });
        }
    }
    Ok(samples)
}
