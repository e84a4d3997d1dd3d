#![allow(dead_code)]

use std::sync::Arc;

use cloudray::em::MaterialTable;
use cloudray::geometry::{EdgeSegment, PointCloud, Vec3};
use cloudray::tracer::SceneGeometry;

/// Grid samples of the rectangle `origin + a*u + b*v`, `a in [0, lu]`,
/// `b in [0, lv]`, at cell centres.
pub fn rect(origin: Vec3, u: Vec3, v: Vec3, lu: f64, lv: f64, h: f64, normal: Vec3, mat: u32) -> PointCloud {
    let nu = (lu / h).round().max(1.0) as usize;
    let nv = (lv / h).round().max(1.0) as usize;
    let (hu, hv) = (lu / nu as f64, lv / nv as f64);
    let mut pos = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            pos.push(origin + u * ((i as f64 + 0.5) * hu) + v * ((j as f64 + 0.5) * hv));
        }
    }
    let n = pos.len();
    PointCloud::new(pos, Some(vec![normal; n]), vec![mat; n], 0.75 * h.max(hu).max(hv)).unwrap()
}

/// Closed box `[0, dx] x [0, dy] x [0, dz]` with inward normals; walls are
/// ordered x=0, x=dx, y=0, y=dy, z=0, z=dz.
pub fn box_cloud(d: [f64; 3], h: f64, mat: u32) -> PointCloud {
    let [dx, dy, dz] = d;
    let (x, y, z) = (Vec3::x(), Vec3::y(), Vec3::z());
    let parts = [
        rect(Vec3::zeros(), y, z, dy, dz, h, x, mat),
        rect(Vec3::new(dx, 0.0, 0.0), y, z, dy, dz, h, -x, mat),
        rect(Vec3::zeros(), x, z, dx, dz, h, y, mat),
        rect(Vec3::new(0.0, dy, 0.0), x, z, dx, dz, h, -y, mat),
        rect(Vec3::zeros(), x, y, dx, dy, h, z, mat),
        rect(Vec3::new(0.0, 0.0, dz), x, y, dx, dy, h, -z, mat),
    ];
    let r = parts.iter().map(|p| p.point_radius).fold(0.0, f64::max);
    let mut c = PointCloud::concat(&parts);
    c.point_radius = r;
    c
}

/// Wall planes of [`box_cloud`] as `(point, inward normal)`.
pub fn box_planes(d: [f64; 3]) -> Vec<(Vec3, Vec3)> {
    let [dx, dy, dz] = d;
    vec![
        (Vec3::zeros(), Vec3::x()),
        (Vec3::new(dx, 0.0, 0.0), -Vec3::x()),
        (Vec3::zeros(), Vec3::y()),
        (Vec3::new(0.0, dy, 0.0), -Vec3::y()),
        (Vec3::zeros(), Vec3::z()),
        (Vec3::new(0.0, 0.0, dz), -Vec3::z()),
    ]
}

pub fn geometry(cloud: PointCloud, edges: Vec<EdgeSegment>) -> Arc<SceneGeometry> {
    Arc::new(SceneGeometry::new(cloud, edges, MaterialTable::bundled()).unwrap())
}
