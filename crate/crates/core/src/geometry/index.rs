//! Bounding-volume hierarchy over point discs.
//!
//! One tree answers ray casts (nearest disc hit), ball queries and k-nearest
//! neighbour queries. The tree is immutable once built, so it can be shared
//! between worker threads without locking.

use std::cmp::Ordering;

use super::{Hit, PointCloud, Vec3, EPS_SELF};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 6;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    fn dist2(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.min[a] {
                self.min[a] - p[a]
            } else if p[a] > self.max[a] {
                p[a] - self.max[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Slab test; returns the entry distance if the ray overlaps `[0, t_max]`.
    fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for a in 0..3 {
            let mut ta = (self.min[a] - origin[a]) * inv_dir[a];
            let mut tb = (self.max[a] - origin[a]) * inv_dir[a];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            // NaN from 0 * inf means the origin sits on the slab plane.
            if ta.is_nan() || tb.is_nan() {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Spatial acceleration structure over the discs of a [`PointCloud`].
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    centers: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    radius: f64,
    /// Point ids in tree order.
    order: Vec<usize>,
    /// Points that take part in ray casts.
    active: Vec<bool>,
    nodes: Vec<Node>,
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyScene);
        }
        let radius = cloud.point_radius;
        let boxes: Vec<Aabb> = (0..cloud.len())
            .map(|i| disc_bounds(&cloud.positions[i], cloud.normal(i).as_ref(), radius))
            .collect();
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        let mut nodes = Vec::with_capacity(2 * cloud.len() / LEAF_SIZE + 1);
        build_node(&mut nodes, &mut order, 0, cloud.len(), &boxes, &cloud.positions);
        Ok(SpatialIndex {
            centers: cloud.positions.clone(),
            normals: cloud.normals.clone(),
            radius,
            order,
            active: cloud.excluded.iter().map(|e| !e).collect(),
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self, id: usize) -> Vec3 {
        self.centers[id]
    }

    /// Nearest disc pierced by the ray with `t > EPS_SELF`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        self.intersect_within(origin, dir, f64::INFINITY)
    }

    /// Nearest disc pierced with `EPS_SELF < t < t_max`.
    pub fn intersect_within(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<Hit> {
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<(f64, usize)> = None;
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            let limit = best.map_or(t_max, |b| b.0);
            match &self.nodes[ni] {
                Node::Leaf { bounds, start, end } => {
                    if bounds.ray_entry(origin, &inv, limit).is_none() {
                        continue;
                    }
                    for &id in &self.order[*start..*end] {
                        if !self.active[id] {
                            continue;
                        }
                        if let Some(t) = self.disc_t(id, origin, dir) {
                            if t >= t_max {
                                continue;
                            }
                            let better = match best {
                                None => true,
                                Some((bt, bid)) => t < bt || (t == bt && id < bid),
                            };
                            if better {
                                best = Some((t, id));
                            }
                        }
                    }
                }
                Node::Inner { bounds, left, right } => {
                    if bounds.ray_entry(origin, &inv, limit).is_none() {
                        continue;
                    }
                    let tl = self.nodes[*left].bounds().ray_entry(origin, &inv, limit);
                    let tr = self.nodes[*right].bounds().ray_entry(origin, &inv, limit);
                    match (tl, tr) {
                        (Some(a), Some(b)) => {
                            // Push the farther child first so the nearer is visited first.
                            if a <= b {
                                stack.push(*right);
                                stack.push(*left);
                            } else {
                                stack.push(*left);
                                stack.push(*right);
                            }
                        }
                        (Some(_), None) => stack.push(*left),
                        (None, Some(_)) => stack.push(*right),
                        (None, None) => {}
                    }
                }
            }
        }
        best.map(|(t, id)| Hit {
            point_id: id,
            position: origin + dir * t,
            t,
            normal: self
                .normals
                .as_ref()
                .map_or_else(|| -dir, |n| n[id]),
        })
    }

    /// Whether anything blocks the open segment `a -> b`.
    pub fn occluded(&self, a: &Vec3, b: &Vec3) -> bool {
        let d = b - a;
        let len = d.norm();
        if len <= EPS_SELF {
            return false;
        }
        self.intersect_within(a, &(d / len), len - EPS_SELF).is_some()
    }

    /// Ray parameter at which the ray pierces disc `id`.
    pub fn disc_t(&self, id: usize, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        disc_hit(&self.centers[id], self.normals.as_ref().map(|n| &n[id]), self.radius, origin, dir)
    }

    /// All point ids within `radius` of `center`, ascending.
    pub fn range(&self, center: &Vec3, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            // Node bounds contain every centre, so this never drops a member.
            if node.bounds().dist2(center) > r2 {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &id in &self.order[*start..*end] {
                        if (self.centers[id] - center).norm_squared() <= r2 {
                            out.push(id);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest point ids with their distances, by distance then id.
    pub fn knn(&self, center: &Vec3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        // Max-heap of the current best k, keyed by (dist2, id).
        let mut best: std::collections::BinaryHeap<Cand> = std::collections::BinaryHeap::new();
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if best.len() == k && node.bounds().dist2(center) > best.peek().unwrap().d2 {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &id in &self.order[*start..*end] {
                        let c = Cand {
                            d2: (self.centers[id] - center).norm_squared(),
                            id,
                        };
                        if best.len() < k {
                            best.push(c);
                        } else if c < *best.peek().unwrap() {
                            best.pop();
                            best.push(c);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().dist2(center);
                    let dr = self.nodes[*right].bounds().dist2(center);
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        let mut v: Vec<Cand> = best.into_vec();
        v.sort();
        v.into_iter().map(|c| (c.id, c.d2.sqrt())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    d2: f64,
    id: usize,
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.id.cmp(&other.id))
    }
}

/// Ray parameter for a disc (or, without a normal, a view-facing disc).
pub(crate) fn disc_hit(
    center: &Vec3,
    normal: Option<&Vec3>,
    radius: f64,
    origin: &Vec3,
    dir: &Vec3,
) -> Option<f64> {
    let oc = center - origin;
    let t = match normal {
        Some(n) => {
            let denom = dir.dot(n);
            if denom.abs() < 1e-12 {
                return None;
            }
            let t = oc.dot(n) / denom;
            if t <= EPS_SELF {
                return None;
            }
            let p = origin + dir * t;
            if (p - center).norm_squared() > radius * radius {
                return None;
            }
            t
        }
        None => {
            let t = oc.dot(dir);
            if t <= EPS_SELF {
                return None;
            }
            if oc.norm_squared() - t * t > radius * radius {
                return None;
            }
            t
        }
    };
    Some(t)
}

fn disc_bounds(center: &Vec3, normal: Option<&Vec3>, r: f64) -> Aabb {
    let ext = match normal {
        Some(n) => Vec3::new(
            r * (1.0 - n.x * n.x).max(0.0).sqrt(),
            r * (1.0 - n.y * n.y).max(0.0).sqrt(),
            r * (1.0 - n.z * n.z).max(0.0).sqrt(),
        ),
        None => Vec3::repeat(r),
    };
    let pad = Vec3::repeat(1e-9);
    Aabb {
        min: center - ext - pad,
        max: center + ext + pad,
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    centers: &[Vec3],
) -> usize {
    let mut bounds = Aabb::empty();
    for &id in &order[start..end] {
        bounds.grow(&boxes[id]);
    }
    let idx = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return idx;
    }
    // Split on the longest axis of the centre bounds at the median.
    let mut cmin = Vec3::repeat(f64::INFINITY);
    let mut cmax = Vec3::repeat(f64::NEG_INFINITY);
    for &id in &order[start..end] {
        cmin = cmin.inf(&centers[id]);
        cmax = cmax.sup(&centers[id]);
    }
    let ext = cmax - cmin;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centers[a][axis]
            .total_cmp(&centers[b][axis])
            .then_with(|| a.cmp(&b))
    });
    nodes.push(Node::Leaf {
        bounds,
        start,
        end,
    });
    let left = build_node(nodes, order, start, mid, boxes, centers);
    let right = build_node(nodes, order, mid, end, boxes, centers);
    nodes[idx] = Node::Inner {
        bounds,
        left,
        right,
    };
    idx
}
