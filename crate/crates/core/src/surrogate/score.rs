use super::model::SurrogateModel;
use super::train::TrainItem;
use crate::em::PolAmp;
use crate::error::Result;
use crate::geometry::Vec3;

/// Per-item angular error (degrees) and power error (dB) of a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HopScores {
    pub angle_deg: Vec<f64>,
    pub power_db: Vec<f64>,
}

impl HopScores {
    pub fn mean_angle(&self) -> f64 {
        self.angle_deg.iter().sum::<f64>() / self.angle_deg.len().max(1) as f64
    }

    /// Median of the absolute power errors; NaN when empty.
    pub fn median_power(&self) -> f64 {
        median(&self.power_db)
    }
}

/// Scores against the labels of `items`. Direction is predicted from the
/// true incoming direction; amplitude from the true incoming and outgoing
/// directions, so each head is scored in isolation.
pub fn score_items(model: &SurrogateModel, items: &[TrainItem]) -> Result<HopScores> {
    let mut out = HopScores::default();
    for chunk in items.chunks(256) {
        let plans: Vec<_> = chunk.iter().map(|i| i.plan.as_ref()).collect();
        let feats = model.features(&plans)?;
        let f: Vec<&[f64]> = feats.iter().map(|v| v.as_slice()).collect();
        let d_in: Vec<Vec3> = chunk.iter().map(|i| i.d_in).collect();
        let d_out: Vec<Vec3> = chunk.iter().map(|i| i.d_out).collect();
        let bounce: Vec<usize> = chunk.iter().map(|i| i.bounce).collect();
        let mats: Vec<[f64; 4]> = chunk.iter().map(|i| i.material).collect();
        let dirs = model.predict_direction(&f, &d_in, &bounce)?;
        let amps = model.predict_amplitude(&f, &d_in, &d_out, &mats)?;
        for ((item, d), a) in chunk.iter().zip(&dirs).zip(&amps) {
            let c = d.dot(&item.d_out) / item.d_out.norm();
            out.angle_deg.push(c.clamp(-1.0, 1.0).acos().to_degrees());
            let truth = PolAmp::from_reals(&item.amp).power();
            if truth > 0.0 {
                out.power_db
                    .push((10.0 * (a.power().max(f64::MIN_POSITIVE) / truth).log10()).abs());
            }
        }
    }
    Ok(out)
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}
