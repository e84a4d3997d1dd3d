use std::f64::consts::PI;

use rayon::prelude::*;

use super::{evaluate_path, Scene, TraceConfig, TracedPath, Vertex};
use crate::error::{Error, Result};
use crate::geometry::{EdgeSegment, Vec3};

/// Point on the edge minimizing `|tx - p| + |p - rx|`, and whether it lies
/// strictly inside the segment (otherwise it is clamped to an endpoint).
pub fn fermat_point(edge: &EdgeSegment, tx: &Vec3, rx: &Vec3) -> (Vec3, bool) {
    let o = edge.endpoints[0];
    let len = edge.length();
    let e = (edge.endpoints[1] - o) / len;
    let ua = (tx - o).dot(&e);
    let ub = (rx - o).dot(&e);
    let a = (tx - o - e * ua).norm();
    let b = (rx - o - e * ub).norm();
    let u = if a + b < 1e-15 {
        0.5 * (ua + ub)
    } else {
        ua + (ub - ua) * a / (a + b)
    };
    let interior = u > 0.0 && u < len;
    (o + e * u.clamp(0.0, len), interior)
}

fn in_free_space(edge: &EdgeSegment, v: &Vec3) -> bool {
    let az = edge.azimuth(v);
    az > 1e-9 && az < edge.wedge_n() * PI - 1e-9
}

/// First-order diffraction paths over all scene edges.
pub fn enumerate_diffraction(scene: &Scene, cfg: &TraceConfig) -> Result<Vec<TracedPath>> {
    cfg.validate()?;
    let geo = &scene.geometry;
    let margin = 2.5 * geo.cloud.point_radius;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let found: Vec<Option<TracedPath>> = pool.install(|| {
        geo.edges
            .par_iter()
            .enumerate()
            .map(|(id, edge)| {
                // Concave corners are exact image configurations; no wedge term.
                if edge.wedge_n() <= 1.0 {
                    return None;
                }
                let (p, interior) = fermat_point(edge, &scene.tx, &scene.rx);
                if !interior {
                    return None;
                }
                let to_tx = scene.tx - p;
                let to_rx = scene.rx - p;
                if !in_free_space(edge, &to_tx) || !in_free_space(edge, &to_rx) {
                    return None;
                }
                let (a, b) = (to_tx.norm(), to_rx.norm());
                if a <= margin || b <= margin {
                    return None;
                }
                let near_tx = p + to_tx * (margin / a);
                let near_rx = p + to_rx * (margin / b);
                if geo.occluded(&scene.tx, &near_tx) || geo.occluded(&near_rx, &scene.rx) {
                    return None;
                }
                evaluate_path(scene, &[Vertex::Diffract { position: p, edge_id: id }]).ok()
            })
            .collect()
    });
    Ok(found.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_foot() {
        let edge = EdgeSegment::new(
            [Vec3::new(0.0, 0.0, -2.0), Vec3::new(0.0, 0.0, 2.0)],
            [Vec3::y(), Vec3::x()],
            PI / 2.0,
            [0, 0],
        )
        .unwrap();
        let tx = Vec3::new(3.0, -1.0, 0.7);
        let rx = Vec3::new(-1.0, 3.0, 0.7);
        let (p, inside) = fermat_point(&edge, &tx, &rx);
        assert!(inside);
        assert!((p - Vec3::new(0.0, 0.0, 0.7)).norm() < 1e-12);
    }
}
