use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::points::{read_points, write_points};
use crate::em::MaterialTable;
use crate::error::{Error, Result};
use crate::geometry::{EdgeSegment, Vec3};
use crate::tracer::{Scene, SceneGeometry};

/// Scene description (TOML). Relative paths resolve against the scene
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    /// Point-cloud text file.
    pub cloud: PathBuf,
    /// Material table; the bundled table when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub materials: Option<PathBuf>,
    /// Terminals and carrier (Hz); a geometry-only file omits them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq: Option<f64>,
    #[serde(default)]
    pub edges: Vec<EdgeSegment>,
}

/// A scene file with its referenced files read.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub file: SceneFile,
    pub geometry: Arc<SceneGeometry>,
}

impl LoadedScene {
    pub fn scene(&self) -> Result<Scene> {
        let f = &self.file;
        match (f.tx, f.rx, f.freq) {
            (Some(t), Some(r), Some(freq)) => {
                let v = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
                Scene::new(self.geometry.clone(), v(t), v(r), freq)
            }
            _ => Err(Error::Schema("scene file lacks tx, rx or freq".into())),
        }
    }
}

impl SceneFile {
    /// File for `geometry` without terminals, with cloud and materials
    /// stored beside it.
    pub fn geometry_only(geometry: &SceneGeometry) -> Self {
        SceneFile {
            cloud: "cloud.pts".into(),
            materials: Some("materials.toml".into()),
            tx: None,
            rx: None,
            freq: None,
            edges: geometry.edges.clone(),
        }
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Parse {
            line: e
                .span()
                .map_or(0, |s| src[..s.start.min(src.len())].matches('\n').count() + 1),
            msg: e.message().to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene file serialises")
    }

    /// Write `cloud` next to the scene file and the scene file itself.
    pub fn write_with(&self, path: &Path, geometry: &SceneGeometry) -> Result<()> {
        let dir = path.parent().unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(&self.cloud), write_points(&geometry.cloud))?;
        if let Some(m) = &self.materials {
            std::fs::write(dir.join(m), geometry.materials.to_toml_string())?;
        }
        self.save(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LoadedScene> {
        let file = SceneFile::from_toml_str(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let cloud = read_points(&dir.join(&file.cloud))?;
        let materials = match &file.materials {
            Some(m) => MaterialTable::load(&dir.join(m))?,
            None => MaterialTable::bundled(),
        };
        let geometry = Arc::new(SceneGeometry::new(cloud, file.edges.clone(), materials)?);
        Ok(LoadedScene { file, geometry })
    }
}
