//! Learned hop-by-hop propagation: a point-set scene encoder, an outgoing
//! direction predictor and an interaction-matrix predictor, trained on
//! single interactions and rolled out into multi-bounce paths.

mod encoder;
mod model;
mod rollout;
mod score;
mod train;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::em::{Material, PolAmp};
use crate::error::{Error, Result};
use crate::geometry::{crop_indices, Vec3};
use crate::tracer::{HopKind, SceneGeometry};

pub use encoder::{plan_crop, CropPlan, LevelPlan};
pub use model::{material_input, Batch, SurrogateModel};
pub use rollout::{rollout, RolloutDiagnostics, Rollouter};
pub use score::{median, score_items, HopScores};
pub use train::{batch_loss, loss_grad_check, train, EpochLoss, TrainConfig, TrainItem, TrainReport};

/// Which network handles an interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Specular reflection.
    Deterministic,
    /// Diffuse scattering and edge diffraction.
    NonDeterministic,
}

impl Mechanism {
    pub fn of(kind: HopKind) -> Self {
        if kind.is_deterministic() {
            Mechanism::Deterministic
        } else {
            Mechanism::NonDeterministic
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Deterministic => "det",
            Mechanism::NonDeterministic => "non",
        }
    }
}

/// One set-abstraction level: `n` centroids, ball radius `r` (m), `k`
/// members per group, shared-MLP width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaLevel {
    pub n: usize,
    pub r: f64,
    pub k: usize,
    pub width: usize,
}

/// Architecture of one surrogate network pair member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Positional-encoding octaves.
    pub posenc_k: usize,
    pub crop_radius: f64,
    pub crop_points: usize,
    pub sa: Vec<SaLevel>,
    pub d_env: usize,
    /// Width of the learned direction embedding.
    pub dir_emb: usize,
    pub n_layers: usize,
    pub heads: usize,
    /// Number of bounce-position embeddings.
    pub max_bounces: usize,
    pub amp_widths: Vec<usize>,
    pub mat_emb: usize,
    /// Feed material parameters to the amplitude network.
    pub use_material: bool,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            posenc_k: 4,
            crop_radius: 1.0,
            crop_points: 512,
            sa: vec![
                SaLevel { n: 256, r: 0.2, k: 32, width: 64 },
                SaLevel { n: 64, r: 0.4, k: 32, width: 128 },
                SaLevel { n: 16, r: 0.8, k: 32, width: 256 },
            ],
            d_env: 256,
            dir_emb: 32,
            n_layers: 2,
            heads: 4,
            max_bounces: 3,
            amp_widths: vec![128, 256, 68, 8],
            mat_emb: 16,
            use_material: true,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    /// Reduced widths and crop sizes that train in minutes on one core.
    pub fn desk() -> Self {
        SurrogateConfig {
            crop_points: 64,
            sa: vec![
                SaLevel { n: 16, r: 0.4, k: 8, width: 32 },
                SaLevel { n: 4, r: 0.8, k: 8, width: 64 },
                SaLevel { n: 2, r: 1.6, k: 4, width: 64 },
            ],
            d_env: 32,
            dir_emb: 16,
            ..SurrogateConfig::default()
        }
    }

    /// Token width of the direction transformer.
    pub fn width(&self) -> usize {
        self.dir_emb + self.d_env
    }

    pub fn validate(&self) -> Result<()> {
        if self.posenc_k == 0 {
            return Err(Error::invalid("posenc_k must be at least 1"));
        }
        if self.sa.is_empty() || self.sa.iter().any(|l| l.n == 0 || l.k == 0 || l.width == 0 || !(l.r > 0.0)) {
            return Err(Error::invalid("every SA level needs n, k, width >= 1 and r > 0"));
        }
        if self.sa.windows(2).any(|w| w[1].n > w[0].n) {
            return Err(Error::invalid("SA centroid counts must not increase"));
        }
        if self.heads == 0 || self.width() % self.heads != 0 {
            return Err(Error::invalid(format!(
                "transformer width {} not divisible by {} heads",
                self.width(),
                self.heads
            )));
        }
        if self.amp_widths.last() != Some(&8) {
            return Err(Error::invalid("amplitude network must end in 8 outputs"));
        }
        if !(self.crop_radius > 0.0) || self.crop_points == 0 || self.max_bounces == 0 {
            return Err(Error::invalid("crop radius, crop points and max_bounces must be positive"));
        }
        Ok(())
    }
}

/// `[sin(2 pi d), cos(2 pi d), ..., sin(2^K pi d), cos(2^K pi d)]`, each
/// block holding the three components; length `6K`.
pub fn posenc(d: &Vec3, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * k);
    for o in 1..=k {
        let f = (1u64 << o) as f64 * PI;
        out.extend(d.iter().map(|v| (f * v).sin()));
        out.extend(d.iter().map(|v| (f * v).cos()));
    }
    out
}

/// One interaction of a traced path, the unit of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub tx: Vec3,
    pub rx: Vec3,
    /// Interaction point.
    pub position: Vec3,
    /// Cloud point whose neighbourhood is the encoder crop.
    pub point_id: usize,
    pub d_in: Vec3,
    pub d_out: Vec3,
    /// Interaction matrix in the ray-fixed frame of `(d_in, d_out)`.
    pub amp: PolAmp,
    pub material: Material,
    pub kind: HopKind,
    /// Hop index within the parent path.
    pub bounce: usize,
    /// Index of the parent path within its link.
    #[serde(default)]
    pub path: usize,
}

impl RaySample {
    pub fn mechanism(&self) -> Mechanism {
        Mechanism::of(self.kind)
    }
}

/// Loss weights `(lambda_1, lambda_2)` for direction and amplitude terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub dir: f64,
    pub att: f64,
}

impl LossWeights {
    pub fn default_for(m: Mechanism) -> Self {
        match m {
            Mechanism::Deterministic => LossWeights { dir: 1.0, att: 5.0 },
            Mechanism::NonDeterministic => LossWeights { dir: 1.0, att: 0.001 },
        }
    }
}

/// Mean of `1 - cos` between paired directions.
pub fn loss_dir(pred: &[Vec3], truth: &[Vec3]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::invalid("loss_dir needs equal, non-empty lists"));
    }
    let mut s = 0.0;
    for (a, b) in pred.iter().zip(truth) {
        let (na, nb) = (a.norm(), b.norm());
        if !(na > 0.0 && nb > 0.0) {
            return Err(Error::invalid("loss_dir of a zero-length vector"));
        }
        s += 1.0 - a.dot(b) / (na * nb);
    }
    Ok(s / pred.len() as f64)
}

/// Amplitude loss and the number of samples excluded for zero truth power.
///
/// Deterministic: mean squared error over the 8 real components.
/// Non-deterministic: mean squared difference of `10 log10 |I|_F^2`.
pub fn loss_att(pred: &[PolAmp], truth: &[PolAmp], mechanism: Mechanism) -> Result<(f64, usize)> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::invalid("loss_att needs equal, non-empty lists"));
    }
    match mechanism {
        Mechanism::Deterministic => {
            let s: f64 = pred
                .iter()
                .zip(truth)
                .map(|(a, b)| {
                    let (a, b) = (a.to_reals(), b.to_reals());
                    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 8.0
                })
                .sum();
            Ok((s / pred.len() as f64, 0))
        }
        Mechanism::NonDeterministic => {
            let mut s = 0.0;
            let mut used = 0;
            for (a, b) in pred.iter().zip(truth) {
                let (pa, pb) = (a.power(), b.power());
                if !(pb > 0.0) {
                    continue;
                }
                s += (10.0 * pa.max(f64::MIN_POSITIVE).log10() - 10.0 * pb.log10()).powi(2);
                used += 1;
            }
            let excluded = pred.len() - used;
            if used == 0 {
                return Err(Error::invalid("every sample has zero truth power"));
            }
            Ok((s / used as f64, excluded))
        }
    }
}

/// `lambda_1 * dir + lambda_2 * att`.
pub fn total_loss(dir: f64, att: f64, w: LossWeights) -> Result<f64> {
    if !(dir.is_finite() && att.is_finite()) {
        return Err(Error::invalid("non-finite loss term"));
    }
    Ok(w.dir * dir + w.att * att)
}

/// Subsampling seed of encoder crops; fixed so training and rollout see
/// the same neighbourhood of a point.
pub const CROP_SEED: u64 = 0x00c0_ffee;

/// Planned encoder crop around cloud point `point_id`, re-centred on it.
pub fn crop_plan(geometry: &SceneGeometry, point_id: usize, config: &SurrogateConfig) -> Result<CropPlan> {
    let index = geometry.index.as_ref().ok_or(Error::EmptyScene)?;
    let c = index.center(point_id);
    let ids = crop_indices(index, &c, config.crop_radius, config.crop_points, CROP_SEED)?;
    let pts: Vec<Vec3> = ids.iter().map(|&i| index.center(i) - c).collect();
    plan_crop(&pts, &config.sa)
}

/// Facing-side check for a predicted outgoing direction.
pub(crate) fn leaves_surface(d_out: &Vec3, facing_normal: &Vec3) -> bool {
    d_out.dot(facing_normal) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::Complex;

    #[test]
    fn posenc_examples() {
        let z = posenc(&Vec3::zeros(), 3);
        assert_eq!(z.len(), 18);
        for o in 0..3 {
            assert!(z[6 * o..6 * o + 3].iter().all(|v| *v == 0.0));
            assert!(z[6 * o + 3..6 * o + 6].iter().all(|v| *v == 1.0));
        }
        let e = posenc(&Vec3::new(0.25, 0.0, 0.0), 1);
        assert!((e[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loss_dir_examples() {
        let x = Vec3::x();
        assert_eq!(loss_dir(&[x], &[x]).unwrap(), 0.0);
        assert!((loss_dir(&[x], &[Vec3::y()]).unwrap() - 1.0).abs() < 1e-15);
        assert!((loss_dir(&[x], &[-x]).unwrap() - 2.0).abs() < 1e-15);
        assert!(loss_dir(&[Vec3::zeros()], &[x]).is_err());
    }

    #[test]
    fn loss_att_examples() {
        let i = PolAmp::diag(Complex::new(0.3, 0.1), Complex::new(-0.2, 0.05));
        for m in [Mechanism::Deterministic, Mechanism::NonDeterministic] {
            assert_eq!(loss_att(&[i], &[i], m).unwrap().0, 0.0);
        }
        let doubled = i.scale_re(2f64.sqrt());
        let (l, _) = loss_att(&[doubled], &[i], Mechanism::NonDeterministic).unwrap();
        assert!((l - (10.0 * 2f64.log10()).powi(2)).abs() < 1e-9);
        let mut r = i.to_reals();
        r[3] += 0.1;
        let (l, _) = loss_att(&[PolAmp::from_reals(&r)], &[i], Mechanism::Deterministic).unwrap();
        assert!((l - 0.01 / 8.0).abs() < 1e-15);
        let (_, excluded) =
            loss_att(&[i, i], &[i, PolAmp::zero()], Mechanism::NonDeterministic).unwrap();
        assert_eq!(excluded, 1);
    }

    #[test]
    fn total_loss_examples() {
        let det = LossWeights::default_for(Mechanism::Deterministic);
        let non = LossWeights::default_for(Mechanism::NonDeterministic);
        assert!((total_loss(0.1, 0.2, det).unwrap() - 1.1).abs() < 1e-12);
        assert!((total_loss(0.1, 100.0, non).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(total_loss(0.0, 0.0, det).unwrap(), 0.0);
    }

    #[test]
    fn default_config_is_valid() {
        SurrogateConfig::default().validate().unwrap();
        SurrogateConfig::desk().validate().unwrap();
    }
}
