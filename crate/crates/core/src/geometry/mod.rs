//! Point-cloud geometry: clouds, the disc index, normals, sampling and
//! grouping primitives, and launch directions.

mod cloud;
mod index;
mod normals;
mod sampling;

pub use cloud::PointCloud;
pub use index::SpatialIndex;
pub use normals::{average_spacing, estimate_normals};
pub use sampling::{crop, crop_indices, fibonacci_directions, fps, group, GroupFlag, Grouped};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Minimum ray parameter accepted by intersection queries (meters).
pub const EPS_SELF: f64 = 1e-4;

/// Default disc radius relative to the mean nearest-neighbour spacing.
pub const DEFAULT_RADIUS_FACTOR: f64 = 0.75;

/// A ray/disc intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point_id: usize,
    pub position: Vec3,
    pub t: f64,
    pub normal: Vec3,
}

/// A straight wedge edge, supplied as scene metadata.
///
/// `wedge_faces` are the outward (free-space facing) normals of face 0 and
/// face n. `interior_angle` is the angle occupied by material: below pi for
/// a convex corner, above pi for a concave room corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSegment {
    pub endpoints: [Vec3; 2],
    pub wedge_faces: [Vec3; 2],
    pub interior_angle: f64,
    #[serde(default)]
    pub materials: [u32; 2],
}

impl EdgeSegment {
    pub fn new(
        endpoints: [Vec3; 2],
        wedge_faces: [Vec3; 2],
        interior_angle: f64,
        materials: [u32; 2],
    ) -> Result<Self> {
        if (endpoints[0] - endpoints[1]).norm() <= 1e-12 {
            return Err(Error::invalid("edge endpoints coincide"));
        }
        if !(interior_angle > 0.0 && interior_angle < 2.0 * std::f64::consts::PI) {
            return Err(Error::invalid(format!(
                "interior angle {interior_angle} outside (0, 2pi)"
            )));
        }
        Ok(EdgeSegment {
            endpoints,
            wedge_faces: [wedge_faces[0].normalize(), wedge_faces[1].normalize()],
            interior_angle,
            materials,
        })
    }

    pub fn length(&self) -> f64 {
        (self.endpoints[1] - self.endpoints[0]).norm()
    }

    /// Exterior wedge factor `n` (free-space angle over pi).
    pub fn wedge_n(&self) -> f64 {
        (2.0 * std::f64::consts::PI - self.interior_angle) / std::f64::consts::PI
    }

    /// Edge-fixed frame `(t0, n0, e)`: `t0` runs along face 0 away from the
    /// edge, `n0` is face 0's outward normal and `e = t0 x n0` is the edge
    /// direction, so azimuth is measured from face 0 towards free space.
    pub fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let axis = (self.endpoints[1] - self.endpoints[0]).normalize();
        let n0 = self.wedge_faces[0];
        let n1 = self.wedge_faces[1];
        let mut t0 = axis.cross(&n0).normalize();
        let convex = self.interior_angle < std::f64::consts::PI;
        // Face 0 lies behind face n for a convex wedge, in front for a concave one.
        let d = t0.dot(&n1);
        if (convex && d > 0.0) || (!convex && d < 0.0) {
            t0 = -t0;
        }
        let e = t0.cross(&n0);
        (t0, n0, e)
    }

    /// Azimuth of `v` (component normal to the edge) measured from face 0.
    pub fn azimuth(&self, v: &Vec3) -> f64 {
        let (t0, n0, _) = self.frame();
        let a = v.dot(&n0).atan2(v.dot(&t0));
        if a < 0.0 {
            a + 2.0 * std::f64::consts::PI
        } else {
            a
        }
    }

    /// Closest point on the segment to `p`, with its parameter in `[0, 1]`.
    pub fn closest_point(&self, p: &Vec3) -> (Vec3, f64) {
        let d = self.endpoints[1] - self.endpoints[0];
        let s = ((p - self.endpoints[0]).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        (self.endpoints[0] + d * s, s)
    }

    pub fn point_at(&self, s: f64) -> Vec3 {
        self.endpoints[0] + (self.endpoints[1] - self.endpoints[0]) * s
    }
}

/// Unit vector helper that rejects zero-length input.
pub fn unit(v: &Vec3) -> Result<Vec3> {
    let n = v.norm();
    if n <= 1e-300 || !n.is_finite() {
        return Err(Error::invalid("zero-length direction"));
    }
    Ok(v / n)
}
