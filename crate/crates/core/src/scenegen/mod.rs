//! Procedural rooms sampled into oriented point clouds, ray-level datasets
//! traced from them, and the evaluation-room suite.

mod dataset;
mod planar;
mod suite;

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::em::MaterialTable;
use crate::error::{Error, Result};
use crate::geometry::{EdgeSegment, PointCloud, Vec3};
use crate::seed::{mix, named};
use crate::tracer::SceneGeometry;

pub use dataset::{gen_dataset, place_links, Dataset, DatasetConfig, DatasetManifest, Link, LinkEntry, LinkSamples, Split};
pub use planar::{planar_samples, PlanarConfig, PlanarSet};
pub use suite::{make_eval_suite, room_a, room_b, room_c, EvalRoom, EvalSuite};

/// Largest in-plane jitter as a fraction of the spacing.
pub const JITTER: f64 = 0.3;
/// Disc radius over spacing; covers the worst jittered gap.
pub const RADIUS_FACTOR: f64 = 1.15;

/// Square column standing on the floor; `radius` is its half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub center: [f64; 2],
    pub radius: f64,
    pub height: f64,
    pub material: u32,
}

/// Rectangle left unsampled on wall `wall` (0: x=0, 1: x=max, 2: y=0,
/// 3: y=max), in wall coordinates `u` (along the wall) and `v` (height).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Opening {
    pub wall: usize,
    pub u: [f64; 2],
    pub v: [f64; 2],
}

fn default_spacing() -> f64 {
    0.08
}

/// Parametric box room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub extents: [f64; 3],
    /// Materials of walls x=0, x=max, y=0, y=max.
    pub wall_materials: [u32; 4],
    pub floor_material: u32,
    pub ceiling_material: u32,
    #[serde(default)]
    pub columns: Vec<Column>,
    #[serde(default)]
    pub openings: Vec<Opening>,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
}

impl RoomSpec {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| src[..s.start.min(src.len())].matches('\n').count() + 1);
            Error::Parse {
                line,
                msg: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        RoomSpec::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("room spec serialises")
    }

    pub fn validate(&self, materials: &MaterialTable) -> Result<()> {
        let [dx, dy, dz] = self.extents;
        if !(dx > 0.0 && dy > 0.0 && dz > 0.0) {
            return Err(Error::invalid("room extents must be positive"));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::invalid("spacing must be positive"));
        }
        let mut smallest = dx.min(dy).min(dz);
        for c in &self.columns {
            let [cx, cy] = c.center;
            let inside = c.radius > 0.0
                && cx - c.radius > 0.0
                && cx + c.radius < dx
                && cy - c.radius > 0.0
                && cy + c.radius < dy
                && c.height > 0.0
                && c.height <= dz;
            if !inside {
                return Err(Error::invalid(format!("column at {:?} leaves the room", c.center)));
            }
            smallest = smallest.min(2.0 * c.radius).min(c.height);
            materials.get(c.material)?;
        }
        if self.spacing > smallest {
            return Err(Error::invalid(format!(
                "spacing {} exceeds the smallest surface dimension {smallest}",
                self.spacing
            )));
        }
        for o in &self.openings {
            if o.wall > 3 || !(o.u[0] < o.u[1] && o.v[0] < o.v[1]) {
                return Err(Error::invalid(format!("bad opening {o:?}")));
            }
        }
        for id in self.wall_materials.iter().chain([&self.floor_material, &self.ceiling_material]) {
            materials.get(*id)?;
        }
        Ok(())
    }
}

/// Generated room: cloud, edge metadata and material table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomScene {
    pub spec: RoomSpec,
    pub cloud: PointCloud,
    pub edges: Vec<EdgeSegment>,
    pub materials: MaterialTable,
}

impl RoomScene {
    pub fn geometry(&self) -> Result<Arc<SceneGeometry>> {
        Ok(Arc::new(SceneGeometry::new(
            self.cloud.clone(),
            self.edges.clone(),
            self.materials.clone(),
        )?))
    }

    /// Distance from `p` to the nearest wall, floor, ceiling or column face.
    pub fn clearance(&self, p: &Vec3) -> f64 {
        let [dx, dy, dz] = self.spec.extents;
        let mut d = p.x.min(dx - p.x).min(p.y).min(dy - p.y).min(p.z).min(dz - p.z);
        for c in &self.spec.columns {
            let ox = ((p.x - c.center[0]).abs() - c.radius).max(0.0);
            let oy = ((p.y - c.center[1]).abs() - c.radius).max(0.0);
            let oz = (p.z - c.height).max(0.0);
            d = d.min((ox * ox + oy * oy + oz * oz).sqrt());
        }
        d
    }
}

/// Planar rectangle `origin + a u + b v`, `a in [0, lu]`, `b in [0, lv]`.
pub(crate) struct Rect {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub lu: f64,
    pub lv: f64,
    pub normal: Vec3,
    pub material: u32,
}

/// Jittered-grid samples of `rect`; cells whose jittered sample satisfies
/// `skip(a, b)` are dropped.
pub(crate) fn sample_rect(
    rect: &Rect,
    spacing: f64,
    rng: &mut ChaCha8Rng,
    skip: &dyn Fn(f64, f64) -> bool,
    out: &mut (Vec<Vec3>, Vec<Vec3>, Vec<u32>),
) {
    let nu = (rect.lu / spacing).round().max(1.0) as usize;
    let nv = (rect.lv / spacing).round().max(1.0) as usize;
    let (hu, hv) = (rect.lu / nu as f64, rect.lv / nv as f64);
    let j = JITTER * spacing;
    for i in 0..nu {
        for k in 0..nv {
            let a = ((i as f64 + 0.5) * hu + rng.gen_range(-j..=j)).clamp(0.0, rect.lu);
            let b = ((k as f64 + 0.5) * hv + rng.gen_range(-j..=j)).clamp(0.0, rect.lv);
            if skip(a, b) {
                continue;
            }
            out.0.push(rect.origin + rect.u * a + rect.v * b);
            out.1.push(rect.normal);
            out.2.push(rect.material);
        }
    }
}

fn edge(a: Vec3, b: Vec3, faces: [Vec3; 2], interior: f64, mats: [u32; 2]) -> Result<EdgeSegment> {
    EdgeSegment::new([a, b], faces, interior, mats)
}

/// Sample `spec` into a scene. Surfaces are jittered grids at the spec
/// spacing with exact inward normals (outward on columns); every room
/// corner, column corner and column foot is emitted as an edge.
pub fn gen_room(spec: &RoomSpec, seed: u64) -> Result<RoomScene> {
    gen_room_with(spec, MaterialTable::bundled(), seed)
}

pub fn gen_room_with(spec: &RoomSpec, materials: MaterialTable, seed: u64) -> Result<RoomScene> {
    spec.validate(&materials)?;
    let [dx, dy, dz] = spec.extents;
    let (x, y, z) = (Vec3::x(), Vec3::y(), Vec3::z());
    let o = Vec3::zeros();
    let s = spec.spacing;
    let root = named(seed, "scene");
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    let wm = spec.wall_materials;
    let walls = [
        Rect { origin: o, u: y, v: z, lu: dy, lv: dz, normal: x, material: wm[0] },
        Rect { origin: Vec3::new(dx, 0.0, 0.0), u: y, v: z, lu: dy, lv: dz, normal: -x, material: wm[1] },
        Rect { origin: o, u: x, v: z, lu: dx, lv: dz, normal: y, material: wm[2] },
        Rect { origin: Vec3::new(0.0, dy, 0.0), u: x, v: z, lu: dx, lv: dz, normal: -y, material: wm[3] },
    ];
    let mut surface = 0u64;
    let rng_for = |surface: &mut u64| {
        *surface += 1;
        ChaCha8Rng::seed_from_u64(mix(root, &[*surface]))
    };
    for (w, rect) in walls.iter().enumerate() {
        let holes: Vec<&Opening> = spec.openings.iter().filter(|o| o.wall == w).collect();
        let skip = |a: f64, b: f64| holes.iter().any(|o| a > o.u[0] && a < o.u[1] && b > o.v[0] && b < o.v[1]);
        sample_rect(rect, s, &mut rng_for(&mut surface), &skip, &mut out);
    }
    let in_column = |px: f64, py: f64, top: bool| {
        spec.columns.iter().any(|c| {
            (!top || c.height >= dz)
                && (px - c.center[0]).abs() < c.radius
                && (py - c.center[1]).abs() < c.radius
        })
    };
    let floor = Rect { origin: o, u: x, v: y, lu: dx, lv: dy, normal: z, material: spec.floor_material };
    sample_rect(&floor, s, &mut rng_for(&mut surface), &|a, b| in_column(a, b, false), &mut out);
    let ceiling = Rect {
        origin: Vec3::new(0.0, 0.0, dz),
        u: x,
        v: y,
        lu: dx,
        lv: dy,
        normal: -z,
        material: spec.ceiling_material,
    };
    sample_rect(&ceiling, s, &mut rng_for(&mut surface), &|a, b| in_column(a, b, true), &mut out);

    let concave = 1.5 * PI;
    let convex = 0.5 * PI;
    let mut edges = Vec::new();
    let corners = [(0.0, 0.0), (dx, 0.0), (dx, dy), (0.0, dy)];
    // Wall index of the x-wall and y-wall meeting at each corner.
    let corner_walls = [(0, 2), (1, 2), (1, 3), (0, 3)];
    for (&(cx, cy), &(wx, wy)) in corners.iter().zip(&corner_walls) {
        edges.push(edge(
            Vec3::new(cx, cy, 0.0),
            Vec3::new(cx, cy, dz),
            [walls[wx].normal, walls[wy].normal],
            concave,
            [wm[wx], wm[wy]],
        )?);
    }
    for (w, rect) in walls.iter().enumerate() {
        let a = rect.origin;
        let b = rect.origin + rect.u * rect.lu;
        edges.push(edge(a, b, [z, rect.normal], concave, [spec.floor_material, wm[w]])?);
        let up = z * dz;
        edges.push(edge(a + up, b + up, [-z, rect.normal], concave, [spec.ceiling_material, wm[w]])?);
    }

    for c in &spec.columns {
        let [cx, cy] = c.center;
        let r = c.radius;
        let h = c.height;
        let m = c.material;
        // Faces: -x, +x, -y, +y with outward normals.
        let faces = [
            Rect { origin: Vec3::new(cx - r, cy - r, 0.0), u: y, v: z, lu: 2.0 * r, lv: h, normal: -x, material: m },
            Rect { origin: Vec3::new(cx + r, cy - r, 0.0), u: y, v: z, lu: 2.0 * r, lv: h, normal: x, material: m },
            Rect { origin: Vec3::new(cx - r, cy - r, 0.0), u: x, v: z, lu: 2.0 * r, lv: h, normal: -y, material: m },
            Rect { origin: Vec3::new(cx - r, cy + r, 0.0), u: x, v: z, lu: 2.0 * r, lv: h, normal: y, material: m },
        ];
        for f in &faces {
            sample_rect(f, s, &mut rng_for(&mut surface), &|_, _| false, &mut out);
            let a = f.origin;
            let b = f.origin + f.u * f.lu;
            edges.push(edge(a, b, [z, f.normal], concave, [spec.floor_material, m])?);
            if h < dz {
                let up = z * h;
                edges.push(edge(a + up, b + up, [z, f.normal], convex, [m, m])?);
            } else {
                let up = z * dz;
                edges.push(edge(a + up, b + up, [-z, f.normal], concave, [spec.ceiling_material, m])?);
            }
        }
        if h < dz {
            let top = Rect {
                origin: Vec3::new(cx - r, cy - r, h),
                u: x,
                v: y,
                lu: 2.0 * r,
                lv: 2.0 * r,
                normal: z,
                material: m,
            };
            sample_rect(&top, s, &mut rng_for(&mut surface), &|_, _| false, &mut out);
        }
        let pairs = [(0, 2), (1, 2), (1, 3), (0, 3)];
        let cs = [(cx - r, cy - r), (cx + r, cy - r), (cx + r, cy + r), (cx - r, cy + r)];
        for (&(px, py), &(fa, fb)) in cs.iter().zip(&pairs) {
            edges.push(edge(
                Vec3::new(px, py, 0.0),
                Vec3::new(px, py, h),
                [faces[fa].normal, faces[fb].normal],
                convex,
                [m, m],
            )?);
        }
    }
    let (pos, nrm, mat) = out;
    let cloud = PointCloud::new(pos, Some(nrm), mat, RADIUS_FACTOR * s)?;
    Ok(RoomScene {
        spec: spec.clone(),
        cloud,
        edges,
        materials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_spec() -> RoomSpec {
        RoomSpec {
            extents: [4.0, 4.0, 3.0],
            wall_materials: [0; 4],
            floor_material: 5,
            ceiling_material: 3,
            columns: vec![],
            openings: vec![],
            spacing: 0.08,
        }
    }

    #[test]
    fn box_room_counts_normals_edges() {
        let spec = box_spec();
        let room = gen_room(&spec, 1).unwrap();
        let area = 2.0 * (16.0 + 12.0 + 12.0);
        let expect = area / (0.08 * 0.08);
        let n = room.cloud.len() as f64;
        assert!((n - expect).abs() / expect < 0.05, "{n} vs {expect}");
        assert_eq!(room.edges.len(), 12);
        let normals = room.cloud.normals.as_ref().unwrap();
        let mid = Vec3::new(2.0, 2.0, 1.5);
        for (p, nm) in room.cloud.positions.iter().zip(normals) {
            assert!((nm.norm() - 1.0).abs() < 1e-12);
            assert!((mid - p).dot(nm) > 0.0, "normal {nm:?} at {p:?} faces away");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = gen_room(&box_spec(), 3).unwrap();
        let b = gen_room(&box_spec(), 3).unwrap();
        assert_eq!(a, b);
        let c = gen_room(&box_spec(), 4).unwrap();
        assert_ne!(a.cloud.positions, c.cloud.positions);
    }

    #[test]
    fn spacing_larger_than_surface_is_rejected() {
        let mut s = box_spec();
        s.columns.push(Column { center: [2.0, 2.0], radius: 0.02, height: 3.0, material: 0 });
        assert!(gen_room(&s, 0).is_err());
    }

    #[test]
    fn unknown_material_is_named() {
        let mut s = box_spec();
        s.floor_material = 42;
        let e = gen_room(&s, 0).unwrap_err();
        assert!(matches!(e, Error::UnknownMaterial(42)), "{e}");
    }

    #[test]
    fn spec_parse_error_has_line() {
        let e = RoomSpec::from_toml_str("extents = [1.0, 2.0, 3.0]\nwall_materials = \"x\"\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
    }
}
