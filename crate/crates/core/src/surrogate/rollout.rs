use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{material_input, SurrogateModel};
use super::{crop_plan, leaves_surface, Mechanism};
use crate::em::PolAmp;
use crate::error::{Error, Result};
use crate::geometry::{fibonacci_directions, Hit, Vec3};
use crate::seed::mix;
use crate::tracer::sbr::{closest_approach, lambertian_sample, pool, RayState};
use crate::tracer::{
    evaluate_path, evaluate_path_with, power_filter, reception_radius, sort_canonical, ChannelRealization,
    HopKind, Scene, SceneGeometry, TraceConfig, TracedPath, Vertex,
};

/// Counters of one rollout.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutDiagnostics {
    pub launched: usize,
    pub hits: usize,
    /// Predicted directions pointing into the surface; the branch ends.
    pub rejected_hops: usize,
    /// Ray segments that passed the reception sphere.
    pub candidates: usize,
    /// Candidates whose last segment to the receiver is blocked.
    pub occluded: usize,
    pub paths: usize,
}

#[derive(Debug, Clone, Copy)]
struct RVert {
    kind: HopKind,
    point_id: usize,
    position: Vec3,
    normal: Vec3,
}

#[derive(Debug, Clone)]
struct Ray {
    idx: usize,
    origin: Vec3,
    dir: Vec3,
    unfolded: f64,
    verts: Vec<RVert>,
    diffuse: usize,
}

struct Candidate {
    verts: Vec<RVert>,
    miss: f64,
    length: f64,
}

/// Rolls out both networks in one scene, caching per-point scene features
/// across links.
pub struct Rollouter<'a> {
    geometry: Arc<SceneGeometry>,
    det: &'a SurrogateModel,
    non: &'a SurrogateModel,
    /// Amplitude networks replacing those of `det` and `non`.
    amp: Option<[&'a SurrogateModel; 2]>,
    /// Slots 0 and 1 serve the direction models, 2 and 3 the amplitude
    /// overrides.
    feats: [HashMap<usize, Vec<f64>>; 4],
}

impl<'a> Rollouter<'a> {
    pub fn new(geometry: Arc<SceneGeometry>, det: &'a SurrogateModel, non: &'a SurrogateModel) -> Result<Self> {
        if det.mechanism != Mechanism::Deterministic || non.mechanism != Mechanism::NonDeterministic {
            return Err(Error::invalid("rollout needs a deterministic and a non-deterministic model"));
        }
        Ok(Rollouter {
            geometry,
            det,
            non,
            amp: None,
            feats: Default::default(),
        })
    }

    /// Predict interaction matrices with `det` and `non` instead, keeping
    /// the path geometry of the direction models.
    pub fn with_amplitude(mut self, det: &'a SurrogateModel, non: &'a SurrogateModel) -> Result<Self> {
        if det.mechanism != Mechanism::Deterministic || non.mechanism != Mechanism::NonDeterministic {
            return Err(Error::invalid("amplitude override needs a deterministic and a non-deterministic model"));
        }
        self.amp = Some([det, non]);
        self.feats[2].clear();
        self.feats[3].clear();
        Ok(self)
    }

    fn model(&self, m: Mechanism) -> &'a SurrogateModel {
        match m {
            Mechanism::Deterministic => self.det,
            Mechanism::NonDeterministic => self.non,
        }
    }

    /// Feature slot and model that predict amplitudes for `m`.
    fn amp_slot(&self, m: Mechanism) -> (usize, &'a SurrogateModel) {
        match self.amp {
            Some(a) => (2 + m as usize, a[m as usize]),
            None => (m as usize, self.model(m)),
        }
    }

    fn ensure(&mut self, m: Mechanism, ids: &[usize], threads: usize) -> Result<()> {
        let model = self.model(m);
        self.ensure_slot(m as usize, model, ids, threads)
    }

    fn ensure_slot(&mut self, slot: usize, model: &SurrogateModel, ids: &[usize], threads: usize) -> Result<()> {
        let mut missing: Vec<usize> = ids.iter().copied().filter(|i| !self.feats[slot].contains_key(i)).collect();
        missing.sort_unstable();
        missing.dedup();
        if missing.is_empty() {
            return Ok(());
        }
        let geo = &self.geometry;
        let plans = pool(threads)?.install(|| {
            missing
                .par_iter()
                .map(|&id| crop_plan(geo, id, &model.config))
                .collect::<Result<Vec<_>>>()
        })?;
        let refs: Vec<_> = plans.iter().collect();
        let feats = model.features(&refs)?;
        self.feats[slot].extend(missing.into_iter().zip(feats));
        Ok(())
    }

    fn feat(&self, m: Mechanism, id: usize) -> &[f64] {
        &self.feats[m as usize][&id]
    }

    /// Predicted channel of one link.
    pub fn run(&mut self, scene: &Scene, cfg: &TraceConfig) -> Result<(ChannelRealization, RolloutDiagnostics)> {
        cfg.validate()?;
        if !Arc::ptr_eq(&scene.geometry, &self.geometry) {
            return Err(Error::invalid("scene geometry differs from the rollout geometry"));
        }
        let mut diag = RolloutDiagnostics::default();
        let los = if scene.geometry.occluded(&scene.tx, &scene.rx) {
            None
        } else {
            Some(evaluate_path(scene, &[])?)
        };
        let mut nlos = Vec::new();
        if self.geometry.index.is_some() {
            let cands = self.shoot(scene, cfg, &mut diag)?;
            let kept = dedup(cands, cfg);
            nlos = self.evaluate(scene, kept, cfg.threads, &mut diag)?;
        }
        sort_canonical(&mut nlos);
        diag.paths = nlos.len();
        let real = ChannelRealization {
            los,
            nlos,
            freq: scene.freq,
        };
        Ok((power_filter(&real, cfg.power_floor_db), diag))
    }

    fn shoot(&mut self, scene: &Scene, cfg: &TraceConfig, diag: &mut RolloutDiagnostics) -> Result<Vec<Candidate>> {
        let geo = self.geometry.clone();
        let index = geo.index.as_ref().expect("checked by caller");
        let normals = geo.cloud.normals.as_ref().expect("scene clouds carry normals");
        let workers = pool(cfg.threads)?;
        let mut active: Vec<Ray> = fibonacci_directions(cfg.n_rays)
            .into_iter()
            .enumerate()
            .map(|(idx, dir)| Ray {
                idx,
                origin: scene.tx,
                dir,
                unfolded: 0.0,
                verts: Vec::new(),
                diffuse: 0,
            })
            .collect();
        diag.launched = active.len();
        let mut cands = Vec::new();
        for depth in 0..=cfg.max_bounces {
            if active.is_empty() {
                break;
            }
            let hits: Vec<Option<Hit>> =
                workers.install(|| active.par_iter().map(|r| index.intersect(&r.origin, &r.dir)).collect());
            let mut live: Vec<(Ray, Hit, Vec3)> = Vec::new();
            for (ray, hit) in active.into_iter().zip(hits) {
                let state = RayState {
                    origin: ray.origin,
                    dir: ray.dir,
                    unfolded: ray.unfolded,
                    t_max: hit.as_ref().map_or(f64::INFINITY, |h| h.t),
                };
                if !ray.verts.is_empty() {
                    if let Some((t, _)) = closest_approach(&state, &scene.rx, cfg) {
                        let p = state.origin + state.dir * t;
                        diag.candidates += 1;
                        let length = ray.unfolded + (scene.rx - ray.origin).norm();
                        cands.push(Candidate {
                            verts: ray.verts.clone(),
                            miss: (p - scene.rx).norm(),
                            length,
                        });
                    }
                }
                let Some(hit) = hit else { continue };
                if ray.verts.len() >= cfg.max_bounces || depth == cfg.max_bounces {
                    continue;
                }
                let n = normals[hit.point_id];
                let n = if ray.dir.dot(&n) > 0.0 { -n } else { n };
                live.push((ray, hit, n));
            }
            diag.hits += live.len();
            let ids: Vec<usize> = live.iter().map(|(_, h, _)| h.point_id).collect();
            self.ensure(Mechanism::Deterministic, &ids, cfg.threads)?;
            let scatter: Vec<usize> = (0..live.len())
                .filter(|&i| live[i].0.diffuse < cfg.max_diffuse && cfg.n_scatter > 0)
                .collect();
            let sids: Vec<usize> = scatter.iter().map(|&i| ids[i]).collect();
            self.ensure(Mechanism::NonDeterministic, &sids, cfg.threads)?;
            let det_dirs = {
                let f: Vec<&[f64]> = ids.iter().map(|&i| self.feat(Mechanism::Deterministic, i)).collect();
                let d_in: Vec<Vec3> = live.iter().map(|(r, _, _)| r.dir).collect();
                let b: Vec<usize> = live.iter().map(|(r, _, _)| r.verts.len()).collect();
                predict_chunked(self.det, &f, &d_in, &b)?
            };
            let lobes = {
                let f: Vec<&[f64]> = sids.iter().map(|&i| self.feat(Mechanism::NonDeterministic, i)).collect();
                let d_in: Vec<Vec3> = scatter.iter().map(|&i| live[i].0.dir).collect();
                let b: Vec<usize> = scatter.iter().map(|&i| live[i].0.verts.len()).collect();
                predict_chunked(self.non, &f, &d_in, &b)?
            };
            let mut lobe_of = vec![None; live.len()];
            for (k, &i) in scatter.iter().enumerate() {
                lobe_of[i] = Some(lobes[k]);
            }
            let mut next = Vec::new();
            for (i, (ray, hit, n)) in live.into_iter().enumerate() {
                let unfolded = ray.unfolded + hit.t;
                if let Some(lobe) = lobe_of[i] {
                    let centre = index.center(hit.point_id);
                    let mut rng = ChaCha8Rng::seed_from_u64(mix(
                        cfg.seed,
                        &[ray.idx as u64, depth as u64, hit.point_id as u64],
                    ));
                    for _ in 0..cfg.n_scatter {
                        let d = lambertian_sample(&lobe, &mut rng);
                        if !leaves_surface(&d, &n) {
                            diag.rejected_hops += 1;
                            continue;
                        }
                        let mut verts = ray.verts.clone();
                        verts.push(RVert {
                            kind: HopKind::Scatter,
                            point_id: hit.point_id,
                            position: centre,
                            normal: n,
                        });
                        next.push(Ray {
                            idx: ray.idx,
                            origin: centre,
                            dir: d,
                            unfolded,
                            verts,
                            diffuse: ray.diffuse + 1,
                        });
                    }
                }
                let d = det_dirs[i];
                if !leaves_surface(&d, &n) {
                    diag.rejected_hops += 1;
                    continue;
                }
                let mut verts = ray.verts;
                verts.push(RVert {
                    kind: HopKind::Reflect,
                    point_id: hit.point_id,
                    position: hit.position,
                    normal: n,
                });
                next.push(Ray {
                    idx: ray.idx,
                    origin: hit.position,
                    dir: d,
                    unfolded,
                    verts,
                    diffuse: ray.diffuse,
                });
            }
            active = next;
        }
        Ok(cands)
    }

    fn evaluate(&mut self, scene: &Scene, kept: Vec<Candidate>, threads: usize, diag: &mut RolloutDiagnostics) -> Result<Vec<TracedPath>> {
        let geo = &self.geometry;
        // Per hop: (candidate, hop, mechanism, d_in, d_out).
        let mut jobs: Vec<Vec<(Mechanism, Vec3, Vec3)>> = Vec::with_capacity(kept.len());
        let mut ok = Vec::with_capacity(kept.len());
        for c in &kept {
            let last = c.verts.last().expect("candidates have hops").position;
            if geo.occluded(&last, &scene.rx) {
                diag.occluded += 1;
                ok.push(false);
                jobs.push(Vec::new());
                continue;
            }
            let mut pts = vec![scene.tx];
            pts.extend(c.verts.iter().map(|v| v.position));
            pts.push(scene.rx);
            let dirs: Vec<Vec3> = pts.windows(2).map(|w| (w[1] - w[0]).normalize()).collect();
            let valid = dirs.iter().all(|d| d.iter().all(|v| v.is_finite()))
                && c.verts.iter().enumerate().all(|(i, v)| leaves_surface(&dirs[i + 1], &v.normal));
            ok.push(valid);
            jobs.push(
                c.verts
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (Mechanism::of(v.kind), dirs[i], dirs[i + 1]))
                    .collect(),
            );
        }
        for m in [Mechanism::Deterministic, Mechanism::NonDeterministic] {
            let (slot, model) = self.amp_slot(m);
            if slot >= 2 {
                let ids: Vec<usize> = jobs
                    .iter()
                    .enumerate()
                    .filter(|(ci, _)| ok[*ci])
                    .flat_map(|(ci, hops)| {
                        hops.iter()
                            .enumerate()
                            .filter(|(_, h)| h.0 == m)
                            .map(|(hi, _)| kept[ci].verts[hi].point_id)
                            .collect::<Vec<_>>()
                    })
                    .collect();
                self.ensure_slot(slot, model, &ids, threads)?;
            }
        }
        let geo = &self.geometry;
        let mut locals: Vec<Vec<PolAmp>> = kept.iter().map(|c| vec![PolAmp::zero(); c.verts.len()]).collect();
        for m in [Mechanism::Deterministic, Mechanism::NonDeterministic] {
            let mut slots = Vec::new();
            let mut f = Vec::new();
            let mut din = Vec::new();
            let mut dout = Vec::new();
            let mut mats = Vec::new();
            let (slot, model) = self.amp_slot(m);
            for (ci, hops) in jobs.iter().enumerate() {
                if !ok[ci] {
                    continue;
                }
                for (hi, (mm, a, b)) in hops.iter().enumerate() {
                    if *mm != m {
                        continue;
                    }
                    let pid = kept[ci].verts[hi].point_id;
                    slots.push((ci, hi));
                    f.push(self.feats[slot][&pid].as_slice());
                    din.push(*a);
                    dout.push(*b);
                    mats.push(material_input(geo.material_of(pid)));
                }
            }
            let mut out = Vec::with_capacity(slots.len());
            for s in (0..slots.len()).step_by(1024) {
                let e = (s + 1024).min(slots.len());
                out.extend(model.predict_amplitude(&f[s..e], &din[s..e], &dout[s..e], &mats[s..e])?);
            }
            for ((ci, hi), a) in slots.into_iter().zip(out) {
                locals[ci][hi] = a;
            }
        }
        let mut paths = Vec::new();
        for (ci, c) in kept.iter().enumerate() {
            if !ok[ci] {
                continue;
            }
            let verts: Vec<Vertex> = c
                .verts
                .iter()
                .map(|v| match v.kind {
                    HopKind::Reflect => Vertex::Reflect {
                        position: v.position,
                        normal: v.normal,
                        point_id: v.point_id,
                    },
                    _ => Vertex::Scatter {
                        position: v.position,
                        normal: v.normal,
                        point_id: v.point_id,
                    },
                })
                .collect();
            if let Ok(p) = evaluate_path_with(scene, &verts, Some(&locals[ci])) {
                if p.gain.power().is_finite() {
                    paths.push(p);
                }
            }
        }
        Ok(paths)
    }
}

fn predict_chunked(model: &SurrogateModel, f: &[&[f64]], d_in: &[Vec3], b: &[usize]) -> Result<Vec<Vec3>> {
    let mut out = Vec::with_capacity(f.len());
    for s in (0..f.len()).step_by(1024) {
        let e = (s + 1024).min(f.len());
        out.extend(model.predict_direction(&f[s..e], &d_in[s..e], &b[s..e])?);
    }
    Ok(out)
}

fn same(a: &Candidate, b: &Candidate, tol: f64) -> bool {
    a.verts.len() == b.verts.len()
        && a.verts.iter().zip(&b.verts).all(|(x, y)| {
            x.kind == y.kind
                && match x.kind {
                    HopKind::Reflect => (x.position - y.position).norm() <= tol,
                    _ => x.point_id == y.point_id,
                }
        })
}

/// Neighbouring launch rays that reach the receiver through the same
/// interactions collapse to the one passing closest to it.
fn dedup(mut cands: Vec<Candidate>, cfg: &TraceConfig) -> Vec<Candidate> {
    cands.sort_by(|a, b| {
        a.verts
            .iter()
            .map(|v| v.kind)
            .cmp(b.verts.iter().map(|v| v.kind))
            .then(a.length.total_cmp(&b.length))
            .then(a.miss.total_cmp(&b.miss))
    });
    let mut kept: Vec<Candidate> = Vec::new();
    let mut group_start = 0;
    for c in cands {
        if kept
            .last()
            .is_some_and(|k| !k.verts.iter().map(|v| v.kind).eq(c.verts.iter().map(|v| v.kind)))
        {
            group_start = kept.len();
        }
        let tol = 2.0 * reception_radius(c.length, cfg);
        let dup = kept[group_start..]
            .iter_mut()
            .rev()
            .take_while(|k| c.length - k.length <= 2.0 * tol * (c.verts.len() as f64 + 1.0))
            .find(|k| same(k, &c, tol));
        match dup {
            Some(k) => {
                if c.miss < k.miss {
                    *k = c;
                }
            }
            None => kept.push(c),
        }
    }
    kept
}

/// Predicted channel of one link with fresh feature caches.
pub fn rollout(
    scene: &Scene,
    det: &SurrogateModel,
    non: &SurrogateModel,
    cfg: &TraceConfig,
) -> Result<(ChannelRealization, RolloutDiagnostics)> {
    Rollouter::new(scene.geometry.clone(), det, non)?.run(scene, cfg)
}
