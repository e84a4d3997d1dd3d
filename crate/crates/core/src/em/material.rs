use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bundled material table; also the source of named presets.
pub const DEFAULT_TABLE: &str = include_str!("../../data/materials.toml");

/// Electromagnetic surface parameters.
///
/// `s` is the scattering coefficient; the specular reduction factor is
/// `R = sqrt(1 - s^2)` so that `R^2 + S^2 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    #[serde(default)]
    pub name: String,
    /// Conductivity (S/m).
    pub sigma: f64,
    /// Relative permittivity, real part.
    pub eps_r: f64,
    pub s: f64,
    /// Cross-polarization discrimination in `[0, 1]`.
    #[serde(default)]
    pub k_x: f64,
}

impl Material {
    pub fn new(name: &str, sigma: f64, eps_r: f64, s: f64, k_x: f64) -> Result<Self> {
        let m = Material {
            name: name.to_string(),
            sigma,
            eps_r,
            s,
            k_x,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma >= 0.0
            && self.eps_r >= 1.0
            && (0.0..=1.0).contains(&self.s)
            && (0.0..=1.0).contains(&self.k_x)
            && self.sigma.is_finite()
            && self.eps_r.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid material {self:?}")))
        }
    }

    pub fn r(&self) -> f64 {
        (1.0 - self.s * self.s).max(0.0).sqrt()
    }

    /// Material features fed to the surrogate: `(sigma, eps_r, S, K_x)`.
    pub fn features(&self) -> [f64; 4] {
        [self.sigma, self.eps_r, self.s, self.k_x]
    }

    /// Named preset from the bundled table.
    pub fn preset(name: &str) -> Result<Self> {
        let file: TableFile = toml::from_str(DEFAULT_TABLE).expect("bundled material table");
        resolve_preset(&file.preset, name)
    }
}

/// Material id to parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaterialTable {
    pub materials: BTreeMap<u32, Material>,
}

#[derive(Deserialize)]
struct TableFile {
    #[serde(default)]
    preset: BTreeMap<String, Params>,
    #[serde(default)]
    material: Vec<Entry>,
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct Params {
    sigma: f64,
    eps_r: f64,
    s: f64,
    #[serde(default)]
    k_x: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    id: u32,
    preset: Option<String>,
    name: Option<String>,
    sigma: Option<f64>,
    eps_r: Option<f64>,
    s: Option<f64>,
    k_x: Option<f64>,
}

fn resolve_preset(local: &BTreeMap<String, Params>, name: &str) -> Result<Material> {
    let p = match local.get(name) {
        Some(p) => p.clone(),
        None => {
            let bundled: TableFile = toml::from_str(DEFAULT_TABLE).expect("bundled material table");
            bundled
                .preset
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Schema(format!("unknown material preset {name:?}")))?
        }
    };
    Material::new(name, p.sigma, p.eps_r, p.s, p.k_x)
}

impl MaterialTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u32, m: Material) {
        self.materials.insert(id, m);
    }

    pub fn get(&self, id: u32) -> Result<&Material> {
        self.materials.get(&id).ok_or(Error::UnknownMaterial(id))
    }

    pub fn ids(&self) -> Vec<u32> {
        self.materials.keys().copied().collect()
    }

    /// The bundled table.
    pub fn bundled() -> Self {
        Self::from_toml_str(DEFAULT_TABLE).expect("bundled material table")
    }

    /// Parse a TOML material table.
    ///
    /// `[preset.<name>]` sections define named parameter sets; each
    /// `[[material]]` entry has an `id` and either a `preset` (looked up in
    /// the file, then in the bundled table) or explicit `sigma`, `eps_r`,
    /// `s`. Explicit fields override preset values.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let file: TableFile =
            toml::from_str(src).map_err(|e| Error::Schema(format!("material table: {e}")))?;
        let mut t = Self::new();
        for e in file.material {
            let base = match &e.preset {
                Some(p) => resolve_preset(&file.preset, p)?,
                None => {
                    if e.sigma.is_none() || e.eps_r.is_none() || e.s.is_none() {
                        return Err(Error::Schema(format!(
                            "material {} needs a preset or sigma, eps_r and s",
                            e.id
                        )));
                    }
                    Material {
                        name: String::new(),
                        sigma: 0.0,
                        eps_r: 1.0,
                        s: 0.0,
                        k_x: 0.0,
                    }
                }
            };
            let m = Material {
                name: e.name.unwrap_or(base.name),
                sigma: e.sigma.unwrap_or(base.sigma),
                eps_r: e.eps_r.unwrap_or(base.eps_r),
                s: e.s.unwrap_or(base.s),
                k_x: e.k_x.unwrap_or(base.k_x),
            };
            m.validate()?;
            if t.materials.insert(e.id, m).is_some() {
                return Err(Error::Schema(format!("duplicate material id {}", e.id)));
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        for (id, m) in &self.materials {
            out.push_str(&format!(
                "[[material]]\nid = {id}\nname = {:?}\nsigma = {:?}\neps_r = {:?}\ns = {:?}\nk_x = {:?}\n\n",
                m.name, m.sigma, m.eps_r, m.s, m.k_x
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip() {
        let t = MaterialTable::bundled();
        assert!(t.materials.len() >= 5);
        let back = MaterialTable::from_toml_str(&t.to_toml_string()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn preset_with_override() {
        let t = MaterialTable::from_toml_str(
            "[preset.mine]\nsigma = 0.1\neps_r = 3.0\ns = 0.2\n\n\
             [[material]]\nid = 3\npreset = \"itu_wood\"\ns = 0.6\n\n\
             [[material]]\nid = 7\npreset = \"mine\"\n",
        )
        .unwrap();
        let m = t.get(3).unwrap();
        assert_eq!(m.eps_r, Material::preset("itu_wood").unwrap().eps_r);
        assert_eq!(m.s, 0.6);
        assert_eq!(t.get(7).unwrap().eps_r, 3.0);
        assert!(matches!(t.get(0), Err(Error::UnknownMaterial(0))));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Material::new("x", -1.0, 2.0, 0.1, 0.0).is_err());
        assert!(Material::new("x", 0.0, 0.5, 0.1, 0.0).is_err());
        assert!(Material::new("x", 0.0, 2.0, 1.1, 0.0).is_err());
        assert!(MaterialTable::from_toml_str("[[material]]\nid = 1\n").is_err());
        assert!(MaterialTable::from_toml_str("[[material]]\nid = 1\npreset = \"nope\"\n").is_err());
    }
}
