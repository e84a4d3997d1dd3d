use super::{Scene, Vertex};
use crate::geometry::Vec3;

/// Interaction recorded by a launched ray before refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum RawVertex {
    /// Specular hit on disc `point_id`; `normal` faces the incoming ray.
    Reflect { point_id: usize, position: Vec3, normal: Vec3 },
    /// Diffuse event, anchored at the centre of disc `point_id`.
    Scatter { point_id: usize },
}

impl RawVertex {
    pub(crate) fn key(&self) -> (u8, usize) {
        match self {
            RawVertex::Reflect { point_id, .. } => (0, *point_id),
            RawVertex::Scatter { point_id } => (1, *point_id),
        }
    }
}

fn mirror(p: &Vec3, q: &Vec3, n: &Vec3) -> Vec3 {
    p - n * (2.0 * (p - q).dot(n))
}

/// Exact specular vertices between anchors `a` and `b` over the planes
/// `(point, normal)`, by successive images of `a`.
pub(crate) fn image_chain(a: &Vec3, b: &Vec3, planes: &[(Vec3, Vec3)]) -> Option<Vec<Vec3>> {
    let mut images = Vec::with_capacity(planes.len());
    let mut cur = *a;
    for (q, n) in planes {
        cur = mirror(&cur, q, n);
        images.push(cur);
    }
    let mut out = vec![Vec3::zeros(); planes.len()];
    let mut target = *b;
    for k in (0..planes.len()).rev() {
        let (q, n) = &planes[k];
        let img = images[k];
        let den = (img - target).dot(n);
        if den.abs() < 1e-12 {
            return None;
        }
        let t = (q - target).dot(n) / den;
        if !(t > 1e-9 && t < 1.0 - 1e-9) {
            return None;
        }
        let v = target + (img - target) * t;
        out[k] = v;
        target = v;
    }
    Some(out)
}

/// Turn a raw interaction sequence into exact, visible vertices.
pub(crate) fn refine(scene: &Scene, raw: &[RawVertex]) -> Option<Vec<Vertex>> {
    let geo = &scene.geometry;
    let cloud = &geo.cloud;
    let normals = cloud.normals.as_ref()?;
    let mut out: Vec<Vertex> = Vec::with_capacity(raw.len());
    let mut anchor = scene.tx;
    let mut pending: Vec<(usize, Vec3, Vec3)> = Vec::new();
    let flush = |anchor: &Vec3, b: &Vec3, pending: &mut Vec<(usize, Vec3, Vec3)>, out: &mut Vec<Vertex>| -> Option<()> {
        if pending.is_empty() {
            return Some(());
        }
        let planes: Vec<(Vec3, Vec3)> = pending.iter().map(|&(_, q, n)| (q, n)).collect();
        let pts = image_chain(anchor, b, &planes)?;
        for (&(id, _, n), p) in pending.iter().zip(pts) {
            out.push(Vertex::Reflect {
                position: p,
                normal: n,
                point_id: id,
            });
        }
        pending.clear();
        Some(())
    };
    for rv in raw {
        match *rv {
            RawVertex::Reflect {
                point_id,
                position,
                normal,
            } => pending.push((point_id, position, normal)),
            RawVertex::Scatter { point_id } => {
                let c = cloud.positions[point_id];
                flush(&anchor, &c, &mut pending, &mut out)?;
                out.push(Vertex::Scatter {
                    position: c,
                    normal: normals[point_id],
                    point_id,
                });
                anchor = c;
            }
        }
    }
    flush(&anchor, &scene.rx, &mut pending, &mut out)?;
    validate(scene, &out).then_some(out)
}

/// Every vertex lies on the surface it claims, with the ray arriving and
/// leaving on the same side, and every segment is unobstructed.
fn validate(scene: &Scene, verts: &[Vertex]) -> bool {
    let geo = &scene.geometry;
    let Some(index) = geo.index.as_ref() else {
        return verts.is_empty();
    };
    let r = index.radius();
    let mut prev = scene.tx;
    for (i, v) in verts.iter().enumerate() {
        let p = v.position();
        let next = verts.get(i + 1).map_or(scene.rx, Vertex::position);
        let d_in = p - prev;
        let d_out = next - p;
        let len = d_in.norm();
        if len < 1e-9 || d_out.norm() < 1e-9 {
            return false;
        }
        let dir = d_in / len;
        let normal = match v {
            Vertex::Reflect { normal, .. } | Vertex::Scatter { normal, .. } => *normal,
            Vertex::Diffract { .. } => return false,
        };
        if d_in.dot(&normal).signum() == d_out.dot(&normal).signum() {
            return false;
        }
        let Some(hit) = index.intersect_within(&prev, &dir, len + 3.0 * r) else {
            return false;
        };
        if (hit.position - p).norm() > 3.0 * r || hit.normal.dot(&normal).abs() < 0.8 {
            return false;
        }
        prev = p;
    }
    !index.occluded(&prev, &scene.rx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_plane_image() {
        let a = Vec3::new(0.0, 0.0, 1.0);
        let b = Vec3::new(2.0, 0.0, 1.0);
        let v = image_chain(&a, &b, &[(Vec3::zeros(), Vec3::z())]).unwrap();
        assert!((v[0] - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn two_parallel_walls() {
        // Walls y = 0 and y = 2, source and receiver at y = 1.
        let a = Vec3::new(0.0, 1.0, 0.0);
        let b = Vec3::new(4.0, 1.0, 0.0);
        let planes = [
            (Vec3::zeros(), Vec3::y()),
            (Vec3::new(0.0, 2.0, 0.0), -Vec3::y()),
        ];
        let v = image_chain(&a, &b, &planes).unwrap();
        assert!((v[0] - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((v[1] - Vec3::new(3.0, 2.0, 0.0)).norm() < 1e-12);
        // Unfolded length equals the image distance.
        let len = (v[0] - a).norm() + (v[1] - v[0]).norm() + (b - v[1]).norm();
        let img = Vec3::new(0.0, 5.0, 0.0);
        assert!((len - (img - b).norm()).abs() < 1e-12);
    }

    #[test]
    fn same_side_fails() {
        let a = Vec3::new(0.0, 0.0, 1.0);
        let b = Vec3::new(2.0, 0.0, -1.0);
        assert!(image_chain(&a, &b, &[(Vec3::zeros(), Vec3::z())]).is_none());
    }
}
