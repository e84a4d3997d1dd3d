use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_rect, Rect, RADIUS_FACTOR};
use crate::em::MaterialTable;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::seed::{mix, named};
use crate::surrogate::RaySample;
use crate::tracer::{evaluate_path, HopKind, Scene, SceneGeometry, Vertex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanarConfig {
    pub n_planes: usize,
    pub per_plane: usize,
    /// Side length of the square plane (m).
    pub size: f64,
    pub spacing: f64,
    /// Interaction points lie within this distance of the plane centre.
    pub sample_radius: f64,
    pub max_incidence_deg: f64,
    /// Terminal distance from the interaction point (m).
    pub distance: f64,
    pub freq: f64,
}

impl Default for PlanarConfig {
    fn default() -> Self {
        PlanarConfig {
            n_planes: 24,
            per_plane: 100,
            size: 3.0,
            spacing: 0.08,
            sample_radius: 0.6,
            max_incidence_deg: 80.0,
            distance: 3.0,
            freq: 28e9,
        }
    }
}

/// One randomly placed and oriented plane with its specular samples.
#[derive(Debug, Clone)]
pub struct PlanarSet {
    pub geometry: Arc<SceneGeometry>,
    pub normal: Vec3,
    pub samples: Vec<RaySample>,
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn tangent_frame(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    (u, n.cross(&u))
}

/// Random planes with single-bounce specular samples labelled by the
/// physical reflection model.
pub fn planar_samples(cfg: &PlanarConfig, seed: u64) -> Result<Vec<PlanarSet>> {
    if !(cfg.sample_radius < 0.5 * cfg.size && cfg.max_incidence_deg < 90.0 && cfg.distance > 0.0) {
        return Err(Error::invalid("inconsistent planar config"));
    }
    let materials = MaterialTable::bundled();
    let ids = materials.ids();
    let mut sets = Vec::with_capacity(cfg.n_planes);
    let root = named(seed, "planar");
    let max_theta = cfg.max_incidence_deg.to_radians();
    for pl in 0..cfg.n_planes {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(root, &[pl as u64]));
        let normal = random_unit(&mut rng);
        let (u, v) = tangent_frame(&normal);
        let center = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let material = ids[rng.gen_range(0..ids.len())];
        let half = 0.5 * cfg.size;
        let rect = Rect {
            origin: center - u * half - v * half,
            u,
            v,
            lu: cfg.size,
            lv: cfg.size,
            normal,
            material,
        };
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        sample_rect(&rect, cfg.spacing, &mut rng, &|_, _| false, &mut out);
        let cloud = PointCloud::new(out.0, Some(out.1), out.2, RADIUS_FACTOR * cfg.spacing)?;
        let geometry = Arc::new(SceneGeometry::new(cloud, vec![], materials.clone())?);
        let index = geometry.index.as_ref().expect("plane has points");
        let mut samples = Vec::with_capacity(cfg.per_plane);
        while samples.len() < cfg.per_plane {
            let r = cfg.sample_radius * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let target = center + u * (r * a.cos()) + v * (r * a.sin());
            let (point_id, _) = index.knn(&target, 1)[0];
            let p = index.center(point_id);
            // Uniform in solid angle over the allowed incidence cone.
            let cos_t = 1.0 - rng.gen::<f64>() * (1.0 - max_theta.cos());
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let az = rng.gen_range(0.0..std::f64::consts::TAU);
            let d_in = -normal * cos_t + (u * az.cos() + v * az.sin()) * sin_t;
            let d_out = d_in - normal * (2.0 * d_in.dot(&normal));
            let tx = p - d_in * cfg.distance;
            let rx = p + d_out * cfg.distance;
            let scene = match Scene::new(geometry.clone(), tx, rx, cfg.freq) {
                Ok(s) => s,
                Err(Error::TerminalEmbedded) => continue,
                Err(e) => return Err(e),
            };
            let path = evaluate_path(
                &scene,
                &[Vertex::Reflect {
                    position: p,
                    normal,
                    point_id,
                }],
            )?;
            let hop = &path.hops[0];
            samples.push(RaySample {
                tx,
                rx,
                position: p,
                point_id,
                d_in: hop.dir_in,
                d_out: hop.dir_out,
                amp: hop.local,
                material: hop.material.clone(),
                kind: HopKind::Reflect,
                bounce: 0,
                path: samples.len(),
            });
        }
        sets.push(PlanarSet {
            geometry,
            normal,
            samples,
        });
    }
    Ok(sets)
}
