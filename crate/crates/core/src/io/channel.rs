use std::path::Path;

use serde::{Deserialize, Serialize};

use nalgebra::Matrix2;

use crate::em::{Complex, PathGain, PolAmp};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::tracer::{Angles, ChannelRealization, HopKind};

pub const CHANNEL_SCHEMA: &str = "cloudray-channel";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub kind: HopKind,
    pub position: Vec3,
    pub dir_out: Vec3,
}

/// One path as exported: complex amplitude, delay, bounce count, angles,
/// vertices and the 2x2 transfer matrix (row-major, `[re, im]` entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub los: bool,
    pub a: [f64; 2],
    pub tau: f64,
    /// Unfolded length (m).
    pub length: f64,
    pub power_db: f64,
    pub bounces: usize,
    pub aod: Angles,
    pub aoa: Angles,
    pub hops: Vec<HopRecord>,
    pub t: [[f64; 2]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFile {
    pub schema: String,
    pub link: String,
    pub freq: f64,
    pub paths: Vec<PathRecord>,
}

impl ChannelFile {
    pub fn of(link: &str, real: &ChannelRealization) -> Self {
        let c = |z: Complex| [z.re, z.im];
        let paths = real
            .paths()
            .map(|p| PathRecord {
                los: p.is_los(),
                a: c(p.gain.a),
                tau: p.gain.tau,
                length: p.gain.length,
                power_db: p.power_db(),
                bounces: p.bounce_count(),
                aod: p.aod,
                aoa: p.aoa,
                hops: p
                    .hops
                    .iter()
                    .map(|h| HopRecord {
                        kind: h.kind,
                        position: h.position,
                        dir_out: h.dir_out,
                    })
                    .collect(),
                t: [
                    c(p.gain.t.entry(0, 0)),
                    c(p.gain.t.entry(0, 1)),
                    c(p.gain.t.entry(1, 0)),
                    c(p.gain.t.entry(1, 1)),
                ],
            })
            .collect();
        ChannelFile {
            schema: CHANNEL_SCHEMA.into(),
            link: link.into(),
            freq: real.freq,
            paths,
        }
    }

    /// Path gains as traced, for the metrics functions.
    pub fn gains(&self) -> Vec<PathGain> {
        let z = |v: [f64; 2]| Complex::new(v[0], v[1]);
        self.paths
            .iter()
            .map(|r| PathGain {
                t: PolAmp(Matrix2::new(z(r.t[0]), z(r.t[1]), z(r.t[2]), z(r.t[3]))),
                tau: r.tau,
                a: z(r.a),
                length: r.length,
            })
            .collect()
    }
}

pub fn write_channel(path: &Path, file: &ChannelFile) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(file)?)?;
    Ok(())
}

pub fn read_channel(path: &Path) -> Result<ChannelFile> {
    let f: ChannelFile = serde_json::from_slice(&std::fs::read(path)?)?;
    if f.schema != CHANNEL_SCHEMA {
        return Err(Error::Schema(format!("expected {CHANNEL_SCHEMA}, found {}", f.schema)));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::MaterialTable;
    use crate::geometry::PointCloud;
    use crate::tracer::{trace, Scene, SceneGeometry, TraceConfig};
    use std::sync::Arc;

    #[test]
    fn gains_survive_export() {
        let cloud = PointCloud::new(vec![Vec3::zeros()], Some(vec![Vec3::z()]), vec![0], 0.05).unwrap();
        let geo = Arc::new(SceneGeometry::new(cloud, vec![], MaterialTable::bundled()).unwrap());
        let scene = Scene::new(geo, Vec3::new(0.0, 0.0, 1.0), Vec3::new(3.0, 0.0, 1.0), 28e9).unwrap();
        let real = trace(&scene, &TraceConfig::default()).unwrap();
        let f = ChannelFile::of("l0", &real);
        let back: ChannelFile = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back.gains(), real.gains());
    }
}
