//! Shooting-and-bouncing-rays path construction.
//!
//! Rays are launched on a Fibonacci lattice, reflected specularly at disc
//! hits and optionally branched into Lambertian scatter directions. Rays
//! that pass through the reception sphere around the receiver yield
//! candidate interaction sequences, which are then refined to exact
//! geometry (image method between fixed anchors), validated for
//! visibility, evaluated with the field model and deduplicated.

mod diffraction;
mod evaluate;
mod refine;
pub(crate) mod sbr;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use diffraction::{enumerate_diffraction, fermat_point};
pub use evaluate::{evaluate_path, evaluate_path_with, Vertex};
pub use sbr::{reception_radius, reception_test, RayState};

use crate::em::{Material, MaterialTable, PathGain, PolAmp};
use crate::error::{Error, Result};
use crate::geometry::{EdgeSegment, PointCloud, SpatialIndex, Vec3};

/// Static part of a scene, shared between links.
#[derive(Debug)]
pub struct SceneGeometry {
    pub cloud: PointCloud,
    /// `None` for a scene without points.
    pub index: Option<SpatialIndex>,
    pub edges: Vec<EdgeSegment>,
    pub materials: MaterialTable,
}

impl SceneGeometry {
    pub fn new(cloud: PointCloud, edges: Vec<EdgeSegment>, materials: MaterialTable) -> Result<Self> {
        cloud.validate()?;
        if cloud.normals.is_none() && !cloud.is_empty() {
            return Err(Error::invalid("scene cloud needs normals"));
        }
        for &id in &cloud.material_id {
            materials.get(id)?;
        }
        for e in &edges {
            materials.get(e.materials[0])?;
            materials.get(e.materials[1])?;
        }
        let index = if cloud.is_empty() {
            None
        } else {
            Some(SpatialIndex::build(&cloud)?)
        };
        Ok(SceneGeometry {
            cloud,
            index,
            edges,
            materials,
        })
    }

    pub fn material_of(&self, point_id: usize) -> &Material {
        self.materials
            .get(self.cloud.material_id[point_id])
            .expect("material ids validated at construction")
    }

    pub fn occluded(&self, a: &Vec3, b: &Vec3) -> bool {
        self.index.as_ref().is_some_and(|i| i.occluded(a, b))
    }
}

/// One transmitter/receiver link in a scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub geometry: Arc<SceneGeometry>,
    pub tx: Vec3,
    pub rx: Vec3,
    /// Carrier frequency (Hz).
    pub freq: f64,
}

impl Scene {
    pub fn new(geometry: Arc<SceneGeometry>, tx: Vec3, rx: Vec3, freq: f64) -> Result<Self> {
        if (tx - rx).norm() < 1e-9 {
            return Err(Error::invalid("tx and rx coincide"));
        }
        if !(freq > 0.0) {
            return Err(Error::invalid(format!("frequency must be positive, got {freq}")));
        }
        if let Some(idx) = &geometry.index {
            for p in [&tx, &rx] {
                if !idx.range(p, idx.radius()).is_empty() {
                    return Err(Error::TerminalEmbedded);
                }
            }
        }
        Ok(Scene {
            geometry,
            tx,
            rx,
            freq,
        })
    }

    pub fn lambda(&self) -> f64 {
        crate::em::C0 / self.freq
    }
}

/// Tracer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub n_rays: usize,
    pub max_bounces: usize,
    pub max_diffuse: usize,
    /// 0 disables diffraction; only first order is supported.
    pub diffraction_order: usize,
    /// Lambertian branches spawned per hit while the diffuse budget lasts.
    pub n_scatter: usize,
    /// Reception sphere scale; the radius is `scale * unfolded * sqrt(4 pi / n_rays) / sqrt 3`.
    pub rx_scale: f64,
    pub power_floor_db: f64,
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub threads: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            n_rays: 100_000,
            max_bounces: 3,
            max_diffuse: 1,
            diffraction_order: 1,
            n_scatter: 8,
            rx_scale: 1.5,
            power_floor_db: 40.0,
            seed: 0,
            threads: 0,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_bounces < 1 {
            return Err(Error::invalid("max_bounces must be at least 1"));
        }
        if !(self.power_floor_db > 0.0) {
            return Err(Error::invalid("power_floor_db must be positive"));
        }
        if self.n_rays == 0 {
            return Err(Error::invalid("n_rays must be positive"));
        }
        if self.diffraction_order > 1 {
            return Err(Error::invalid("only first-order diffraction is supported"));
        }
        if !(self.rx_scale > 0.0) {
            return Err(Error::invalid("rx_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopKind {
    Reflect,
    Scatter,
    Diffract,
}

impl HopKind {
    /// Specular reflection is the deterministic mechanism.
    pub fn is_deterministic(self) -> bool {
        self == HopKind::Reflect
    }
}

/// One interaction of a path together with its outgoing segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub kind: HopKind,
    pub position: Vec3,
    pub dir_in: Vec3,
    pub dir_out: Vec3,
    /// Surface normal facing the incoming ray (reflect, scatter) or face-0
    /// normal (diffract).
    pub normal: Vec3,
    pub point_id: Option<usize>,
    pub edge_id: Option<usize>,
    pub material: Material,
    /// Interaction matrix in the ray-fixed frame of `(dir_in, dir_out)`.
    pub local: PolAmp,
    /// Spreading factor applied on the outgoing segment.
    pub spreading: f64,
    /// Hop matrix in global polarization bases, phase included.
    pub amp: PolAmp,
    /// Outgoing segment length (meters).
    pub length: f64,
}

/// Elevation/azimuth pair (radians): `theta` from +z, `phi` from +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angles {
    pub theta: f64,
    pub phi: f64,
}

impl Angles {
    pub fn of(d: &Vec3) -> Self {
        Angles {
            theta: d.z.clamp(-1.0, 1.0).acos(),
            phi: d.y.atan2(d.x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracedPath {
    /// Length of the segment from the transmitter to the first vertex (or
    /// the receiver for line of sight).
    pub launch_length: f64,
    pub launch_dir: Vec3,
    pub hops: Vec<Hop>,
    pub gain: PathGain,
    /// Departure direction at the transmitter.
    pub aod: Angles,
    /// Arrival direction, pointing from the receiver back along the path.
    pub aoa: Angles,
}

impl TracedPath {
    pub fn bounce_count(&self) -> usize {
        self.hops.len()
    }

    pub fn n_scatter(&self) -> usize {
        self.hops.iter().filter(|h| h.kind == HopKind::Scatter).count()
    }

    pub fn has_diffraction(&self) -> bool {
        self.hops.iter().any(|h| h.kind == HopKind::Diffract)
    }

    pub fn is_los(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.launch_length + self.hops.iter().map(|h| h.length).sum::<f64>()
    }

    pub fn power_db(&self) -> f64 {
        self.gain.power_db()
    }
}

/// All paths of one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub los: Option<TracedPath>,
    pub nlos: Vec<TracedPath>,
    pub freq: f64,
}

impl ChannelRealization {
    pub fn paths(&self) -> impl Iterator<Item = &TracedPath> {
        self.los.iter().chain(self.nlos.iter())
    }

    pub fn gains(&self) -> Vec<PathGain> {
        self.paths().map(|p| p.gain).collect()
    }

    pub fn len(&self) -> usize {
        self.nlos.len() + usize::from(self.los.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Drop paths weaker than the strongest by more than `floor_db`.
pub fn power_filter(real: &ChannelRealization, floor_db: f64) -> ChannelRealization {
    let max = real.paths().map(|p| p.gain.power()).fold(0.0, f64::max);
    if max <= 0.0 {
        return real.clone();
    }
    let threshold = 10.0 * max.log10() - floor_db;
    let keep = |p: &TracedPath| p.gain.power() > 0.0 && p.power_db() >= threshold;
    ChannelRealization {
        los: real.los.clone().filter(keep),
        nlos: real.nlos.iter().filter(|p| keep(p)).cloned().collect(),
        freq: real.freq,
    }
}

/// Trace all paths of one link.
pub fn trace(scene: &Scene, cfg: &TraceConfig) -> Result<ChannelRealization> {
    cfg.validate()?;
    let los = if scene.geometry.occluded(&scene.tx, &scene.rx) {
        None
    } else {
        Some(evaluate_path(scene, &[])?)
    };
    let mut nlos = sbr::shoot_all(scene, cfg)?;
    if cfg.diffraction_order >= 1 {
        nlos.extend(enumerate_diffraction(scene, cfg)?);
    }
    sort_canonical(&mut nlos);
    let real = ChannelRealization {
        los,
        nlos,
        freq: scene.freq,
    };
    Ok(power_filter(&real, cfg.power_floor_db))
}

fn lex(a: &Vec3, b: &Vec3) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x)
        .then_with(|| a.y.total_cmp(&b.y))
        .then_with(|| a.z.total_cmp(&b.z))
}

/// Order by delay, then by hop positions.
pub fn sort_canonical(paths: &mut [TracedPath]) {
    paths.sort_by(|a, b| {
        a.gain
            .tau
            .total_cmp(&b.gain.tau)
            .then_with(|| a.hops.len().cmp(&b.hops.len()))
            .then_with(|| {
                a.hops
                    .iter()
                    .zip(&b.hops)
                    .map(|(x, y)| lex(&x.position, &y.position).then(x.kind.cmp(&y.kind)))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
}
