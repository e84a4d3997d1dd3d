use serde::{Deserialize, Serialize};

use super::SaLevel;
use crate::error::{Error, Result};
use crate::geometry::{fps, group, GroupFlag, Vec3};

/// Grouping of one set-abstraction level. Rows of the level input are the
/// points (level 0) or the previous level's centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPlan {
    pub n: usize,
    pub k: usize,
    /// `n * k` row indices into the level input.
    pub members: Vec<usize>,
    /// `n * k * 3` member offsets from their centroid, divided by the ball radius.
    pub offsets: Vec<f64>,
}

/// Precomputed sampling and grouping of a re-centred crop. Grouping depends
/// only on coordinates, so it is fixed per crop and independent of weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropPlan {
    pub levels: Vec<LevelPlan>,
    /// Some level had fewer inputs than centroids and repeated them.
    pub padded: bool,
}

/// Farthest-point order over all inputs, cycled to length `n` when short.
fn centroids(points: &[Vec3], n: usize) -> Result<(Vec<usize>, bool)> {
    if points.len() >= n {
        return Ok((fps(points, n)?, false));
    }
    let order = fps(points, points.len())?;
    Ok(((0..n).map(|i| order[i % order.len()]).collect(), true))
}

/// Sample, group and record offsets for every level of `sa`.
pub fn plan_crop(points: &[Vec3], sa: &[SaLevel]) -> Result<CropPlan> {
    if points.is_empty() {
        return Err(Error::invalid("empty crop"));
    }
    let mut cur = points.to_vec();
    let mut levels = Vec::with_capacity(sa.len());
    let mut padded = false;
    for lvl in sa {
        let (ids, pad) = centroids(&cur, lvl.n)?;
        padded |= pad;
        let cents: Vec<Vec3> = ids.iter().map(|&i| cur[i]).collect();
        let grp = group(&cur, &cents, lvl.r, lvl.k)?;
        let mut members = Vec::with_capacity(lvl.n * lvl.k);
        let mut offsets = Vec::with_capacity(lvl.n * lvl.k * 3);
        for (j, flag) in grp.flags.iter().enumerate() {
            if *flag == GroupFlag::Empty {
                // The centroid is an input row; it stands in for itself.
                members.extend(std::iter::repeat(ids[j]).take(lvl.k));
                offsets.extend(std::iter::repeat(0.0).take(lvl.k * 3));
                continue;
            }
            members.extend_from_slice(&grp.members[j]);
            for o in &grp.offsets[j] {
                offsets.extend(o.iter().map(|v| v / lvl.r));
            }
        }
        levels.push(LevelPlan {
            n: lvl.n,
            k: lvl.k,
            members,
            offsets,
        });
        cur = cents;
    }
    Ok(CropPlan { levels, padded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sa() -> Vec<SaLevel> {
        vec![
            SaLevel { n: 4, r: 0.5, k: 3, width: 4 },
            SaLevel { n: 2, r: 1.0, k: 2, width: 4 },
        ]
    }

    #[test]
    fn short_crop_is_padded() {
        let pts = vec![Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0)];
        let p = plan_crop(&pts, &sa()).unwrap();
        assert!(p.padded);
        assert_eq!(p.levels[0].members.len(), 12);
        assert!(p.levels[0].members.iter().all(|&m| m < 2));
    }

    #[test]
    fn plan_shapes() {
        let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64 * 0.05, (i % 3) as f64 * 0.1, 0.0)).collect();
        let p = plan_crop(&pts, &sa()).unwrap();
        assert!(!p.padded);
        assert_eq!(p.levels[1].members.len(), 4);
        assert!(p.levels[1].members.iter().all(|&m| m < 4));
        assert_eq!(p.levels[0].offsets.len(), 4 * 3 * 3);
    }
}
