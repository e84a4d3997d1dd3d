use std::collections::HashSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::refine::{refine, RawVertex};
use super::{evaluate_path, sort_canonical, HopKind, Scene, SceneGeometry, TraceConfig, TracedPath};
use crate::em::reflect_dir;
use crate::error::{Error, Result};
use crate::geometry::{fibonacci_directions, Vec3};
use crate::seed::mix;

/// One straight segment of a launched ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayState {
    pub origin: Vec3,
    pub dir: Vec3,
    /// Unfolded path length from the transmitter to `origin`.
    pub unfolded: f64,
    /// Parameter of the segment end (`f64::INFINITY` if the ray escapes).
    pub t_max: f64,
}

/// Reception-sphere radius after `unfolded` meters of travel.
pub fn reception_radius(unfolded: f64, cfg: &TraceConfig) -> f64 {
    cfg.rx_scale * unfolded * (4.0 * PI / cfg.n_rays as f64).sqrt() / 3f64.sqrt()
}

/// Closest-approach parameter on the segment and the reception radius there.
pub(crate) fn closest_approach(state: &RayState, rx: &Vec3, cfg: &TraceConfig) -> Option<(f64, f64)> {
    let t = (rx - state.origin).dot(&state.dir).clamp(0.0, state.t_max);
    if !t.is_finite() {
        return None;
    }
    let miss = (state.origin + state.dir * t - rx).norm();
    let rho = reception_radius(state.unfolded + t, cfg);
    (miss <= rho).then_some((t, rho))
}

/// Whether the segment passes through the reception sphere around `rx`
/// with a clear line to the point of closest approach.
pub fn reception_test(state: &RayState, rx: &Vec3, cfg: &TraceConfig, geometry: &SceneGeometry) -> bool {
    let Some((t, _)) = closest_approach(state, rx, cfg) else {
        return false;
    };
    let p = state.origin + state.dir * t;
    t < 1e-12 || !geometry.occluded(&state.origin, &p)
}

struct Branch {
    ray: RayState,
    verts: Vec<RawVertex>,
    diffuse: usize,
}

/// Cosine-weighted direction about `n`.
pub(crate) fn lambertian_sample(n: &Vec3, rng: &mut ChaCha8Rng) -> Vec3 {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let a = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t = n.cross(&a).normalize();
    let b = n.cross(&t);
    (t * (r * phi.cos()) + b * (r * phi.sin()) + n * (1.0 - u1).max(0.0).sqrt()).normalize()
}

/// Raw interaction sequences of all launch rays that reach the receiver.
fn shoot_one(scene: &Scene, cfg: &TraceConfig, ray_idx: usize, dir: Vec3) -> Vec<Vec<RawVertex>> {
    let geo = &scene.geometry;
    let Some(index) = geo.index.as_ref() else {
        return Vec::new();
    };
    let normals = geo.cloud.normals.as_ref().expect("scene clouds carry normals");
    let mut found = Vec::new();
    let mut stack = vec![Branch {
        ray: RayState {
            origin: scene.tx,
            dir,
            unfolded: 0.0,
            t_max: f64::INFINITY,
        },
        verts: Vec::new(),
        diffuse: 0,
    }];
    while let Some(mut br) = stack.pop() {
        let hit = index.intersect(&br.ray.origin, &br.ray.dir);
        br.ray.t_max = hit.as_ref().map_or(f64::INFINITY, |h| h.t);
        // The line-of-sight path is handled separately.
        if !br.verts.is_empty() && closest_approach(&br.ray, &scene.rx, cfg).is_some() {
            found.push(br.verts.clone());
        }
        let Some(hit) = hit else { continue };
        if br.verts.len() >= cfg.max_bounces {
            continue;
        }
        let n = if br.ray.dir.dot(&hit.normal) > 0.0 {
            -hit.normal
        } else {
            hit.normal
        };
        let unfolded = br.ray.unfolded + hit.t;
        if br.diffuse < cfg.max_diffuse && cfg.n_scatter > 0 {
            let centre = index.center(hit.point_id);
            let nc = normals[hit.point_id];
            let nc = if br.ray.dir.dot(&nc) > 0.0 { -nc } else { nc };
            let depth = br.verts.len() as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, &[ray_idx as u64, depth, hit.point_id as u64]));
            for _ in 0..cfg.n_scatter {
                let mut verts = br.verts.clone();
                verts.push(RawVertex::Scatter {
                    point_id: hit.point_id,
                });
                stack.push(Branch {
                    ray: RayState {
                        origin: centre,
                        dir: lambertian_sample(&nc, &mut rng),
                        unfolded,
                        t_max: f64::INFINITY,
                    },
                    verts,
                    diffuse: br.diffuse + 1,
                });
            }
        }
        let Ok(out) = reflect_dir(&br.ray.dir, &n) else {
            continue;
        };
        br.verts.push(RawVertex::Reflect {
            point_id: hit.point_id,
            position: hit.position,
            normal: n,
        });
        stack.push(Branch {
            ray: RayState {
                origin: hit.position,
                dir: out,
                unfolded,
                t_max: f64::INFINITY,
            },
            verts: br.verts,
            diffuse: br.diffuse,
        });
    }
    found
}

fn same_path(a: &TracedPath, b: &TracedPath, tol: f64) -> bool {
    a.hops.len() == b.hops.len()
        && a.hops
            .iter()
            .zip(&b.hops)
            .all(|(x, y)| x.kind == y.kind && (x.position - y.position).norm() <= tol)
}

/// Merge paths whose hop sequences agree within `tol` per hop, keeping the
/// strongest. The input must be canonically sorted.
pub(crate) fn dedup(paths: Vec<TracedPath>, tol: f64) -> Vec<TracedPath> {
    let mut kept: Vec<TracedPath> = Vec::with_capacity(paths.len());
    for p in paths {
        // Hop positions within tol bound the delay difference.
        let window = (p.hops.len() as f64 + 1.0) * 2.0 * tol / crate::em::C0;
        let dup = kept
            .iter_mut()
            .rev()
            .take_while(|k| p.gain.tau - k.gain.tau <= window)
            .find(|k| same_path(k, &p, tol));
        match dup {
            Some(k) => {
                if p.gain.power() > k.gain.power() {
                    *k = p;
                }
            }
            None => kept.push(p),
        }
    }
    kept
}

pub(crate) fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// Launch, refine, evaluate and deduplicate all reflected and scattered paths.
pub(crate) fn shoot_all(scene: &Scene, cfg: &TraceConfig) -> Result<Vec<TracedPath>> {
    if scene.geometry.index.is_none() {
        return Ok(Vec::new());
    }
    let dirs = fibonacci_directions(cfg.n_rays);
    let pool = pool(cfg.threads)?;
    let raw: Vec<Vec<RawVertex>> = pool.install(|| {
        dirs.par_iter()
            .enumerate()
            .flat_map_iter(|(i, d)| shoot_one(scene, cfg, i, *d))
            .collect()
    });
    let mut seen = HashSet::new();
    let unique: Vec<Vec<RawVertex>> = raw
        .into_iter()
        .filter(|c| seen.insert(c.iter().map(RawVertex::key).collect::<Vec<_>>()))
        .collect();
    let evaluated: Vec<Option<TracedPath>> = pool.install(|| {
        unique
            .par_iter()
            .map(|c| refine(scene, c).and_then(|v| evaluate_path(scene, &v).ok()))
            .collect()
    });
    let mut paths: Vec<TracedPath> = evaluated
        .into_iter()
        .flatten()
        .filter(|p| {
            p.bounce_count() <= cfg.max_bounces
                && p.hops.iter().filter(|h| h.kind == HopKind::Scatter).count() <= cfg.max_diffuse
        })
        .collect();
    sort_canonical(&mut paths);
    Ok(dedup(paths, scene.geometry.cloud.point_radius))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambertian_samples_in_hemisphere() {
        let n = Vec3::new(0.3, -0.2, 0.9).normalize();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mean_cos = 0.0;
        let m = 20_000;
        for _ in 0..m {
            let d = lambertian_sample(&n, &mut rng);
            assert!((d.norm() - 1.0).abs() < 1e-12);
            assert!(d.dot(&n) >= 0.0);
            mean_cos += d.dot(&n);
        }
        // E[cos] under a cosine-weighted lobe is 2/3.
        assert!((mean_cos / m as f64 - 2.0 / 3.0).abs() < 0.01);
    }
}
