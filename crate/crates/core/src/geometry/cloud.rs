use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// A scene sampled as oriented points.
///
/// Each point acts as a small disc of radius `point_radius` centred on its
/// position and oriented by its normal. Points whose normal could not be
/// estimated are flagged in `excluded` and never take part in interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub material_id: Vec<u32>,
    pub point_radius: f64,
    #[serde(default)]
    pub excluded: Vec<bool>,
}

impl PointCloud {
    pub fn new(
        positions: Vec<Vec3>,
        normals: Option<Vec<Vec3>>,
        material_id: Vec<u32>,
        point_radius: f64,
    ) -> Result<Self> {
        let excluded = vec![false; positions.len()];
        let cloud = PointCloud {
            positions,
            normals,
            material_id,
            point_radius,
            excluded,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    /// An empty cloud, used for free-space scenes.
    pub fn empty(point_radius: f64) -> Self {
        PointCloud {
            positions: Vec::new(),
            normals: Some(Vec::new()),
            material_id: Vec::new(),
            point_radius,
            excluded: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if !(self.point_radius > 0.0 && self.point_radius.is_finite()) {
            return Err(Error::invalid(format!(
                "point_radius must be positive, got {}",
                self.point_radius
            )));
        }
        if self.material_id.len() != n || self.excluded.len() != n {
            return Err(Error::invalid("per-point arrays differ in length"));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::invalid("normals length differs from positions"));
            }
            for (i, nrm) in normals.iter().enumerate() {
                if self.excluded[i] {
                    continue;
                }
                if (nrm.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!("normal {i} is not unit length")));
                }
            }
        }
        if let Some(i) = self
            .positions
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::invalid(format!("position {i} is not finite")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn normal(&self, i: usize) -> Option<Vec3> {
        self.normals.as_ref().map(|n| n[i])
    }

    /// Copy of the points at `ids`, in the given order.
    pub fn subset(&self, ids: &[usize]) -> PointCloud {
        PointCloud {
            positions: ids.iter().map(|&i| self.positions[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| ids.iter().map(|&i| n[i]).collect()),
            material_id: ids.iter().map(|&i| self.material_id[i]).collect(),
            point_radius: self.point_radius,
            excluded: ids.iter().map(|&i| self.excluded[i]).collect(),
        }
    }

    /// Concatenate clouds; the radius of the first cloud wins.
    pub fn concat(parts: &[PointCloud]) -> PointCloud {
        let point_radius = parts.first().map(|p| p.point_radius).unwrap_or(0.05);
        let all_normals = parts.iter().all(|p| p.normals.is_some());
        let mut out = PointCloud {
            positions: Vec::new(),
            normals: if all_normals { Some(Vec::new()) } else { None },
            material_id: Vec::new(),
            point_radius,
            excluded: Vec::new(),
        };
        for p in parts {
            out.positions.extend_from_slice(&p.positions);
            out.material_id.extend_from_slice(&p.material_id);
            out.excluded.extend_from_slice(&p.excluded);
            if let (Some(dst), Some(src)) = (out.normals.as_mut(), p.normals.as_ref()) {
                dst.extend_from_slice(src);
            }
        }
        out
    }

    pub fn translated(&self, offset: &Vec3) -> PointCloud {
        let mut out = self.clone();
        for p in &mut out.positions {
            *p += offset;
        }
        out
    }
}
