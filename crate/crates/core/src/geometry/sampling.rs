use std::cmp::Ordering;

use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PointCloud, SpatialIndex, Vec3};
use crate::error::{Error, Result};
use crate::seed::mix;

/// Ids of the points within `radius` of `center`, subsampled to at most
/// `max_points`. The subsample depends only on `seed` and `center`.
pub fn crop_indices(
    index: &SpatialIndex,
    center: &Vec3,
    radius: f64,
    max_points: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("crop radius must be positive, got {radius}")));
    }
    let mut ids = index.range(center, radius);
    if ids.is_empty() {
        return Err(Error::IsolatedPoint);
    }
    if max_points > 0 && ids.len() > max_points {
        let key = mix(
            seed,
            &[center.x.to_bits(), center.y.to_bits(), center.z.to_bits()],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let mut picked: Vec<usize> = sample(&mut rng, ids.len(), max_points)
            .into_iter()
            .map(|k| ids[k])
            .collect();
        picked.sort_unstable();
        ids = picked;
    }
    Ok(ids)
}

/// Local cloud around `center`, re-centred so that `center` maps to the origin.
pub fn crop(
    cloud: &PointCloud,
    index: &SpatialIndex,
    center: &Vec3,
    radius: f64,
    max_points: usize,
    seed: u64,
) -> Result<PointCloud> {
    let ids = crop_indices(index, center, radius, max_points, seed)?;
    Ok(cloud.subset(&ids).translated(&-center))
}

/// Lexicographic order on coordinates, used to break distance ties without
/// depending on the input order.
fn lex(a: &Vec3, b: &Vec3) -> Ordering {
    a.x.total_cmp(&b.x)
        .then_with(|| a.y.total_cmp(&b.y))
        .then_with(|| a.z.total_cmp(&b.z))
}

/// Greedy farthest point sampling.
///
/// The first pick is the point nearest the set centroid; each later pick
/// maximises the distance to the picks so far.
pub fn fps(points: &[Vec3], n_prime: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if n_prime == 0 || n_prime > n {
        return Err(Error::invalid(format!(
            "fps needs 1 <= n' <= {n}, got {n_prime}"
        )));
    }
    let centroid = points.iter().fold(Vec3::zeros(), |a, p| a + p) / n as f64;
    let better = |i: usize, di: f64, j: usize, dj: f64, larger: bool| -> bool {
        let o = if larger { di.total_cmp(&dj) } else { dj.total_cmp(&di) };
        match o {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => match lex(&points[i], &points[j]) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => i < j,
            },
        }
    };
    let mut start = 0;
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = (p - centroid).norm_squared();
        if i == 0 || better(i, d, start, best, false) {
            start = i;
            best = d;
        }
    }
    let mut picks = Vec::with_capacity(n_prime);
    picks.push(start);
    let mut mind: Vec<f64> = points
        .iter()
        .map(|p| (p - points[start]).norm_squared())
        .collect();
    while picks.len() < n_prime {
        let mut far = usize::MAX;
        let mut fd = -1.0;
        for i in 0..n {
            if far == usize::MAX || better(i, mind[i], far, fd, true) {
                far = i;
                fd = mind[i];
            }
        }
        picks.push(far);
        for i in 0..n {
            let d = (points[i] - points[far]).norm_squared();
            if d < mind[i] {
                mind[i] = d;
            }
        }
    }
    Ok(picks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupFlag {
    Full,
    /// Fewer than `K` neighbours; padded by repeating the nearest.
    Padded,
    /// No neighbour within `r`; the centroid itself stands in.
    Empty,
}

/// Ball-query groups, `K` members each, with offsets relative to the centroid.
#[derive(Debug, Clone)]
pub struct Grouped {
    pub members: Vec<Vec<usize>>,
    pub offsets: Vec<Vec<Vec3>>,
    pub flags: Vec<GroupFlag>,
}

/// Up to `k` nearest points within `r` of each centroid.
pub fn group(points: &[Vec3], centroids: &[Vec3], r: f64, k: usize) -> Result<Grouped> {
    if !(r > 0.0) || k == 0 {
        return Err(Error::invalid(format!("group needs r > 0 and K >= 1, got r={r}, K={k}")));
    }
    let r2 = r * r;
    let mut out = Grouped {
        members: Vec::with_capacity(centroids.len()),
        offsets: Vec::with_capacity(centroids.len()),
        flags: Vec::with_capacity(centroids.len()),
    };
    for c in centroids {
        let mut inside: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let d = (p - c).norm_squared();
                (d <= r2).then_some((d, i))
            })
            .collect();
        inside.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| lex(&points[a.1], &points[b.1]))
                .then_with(|| a.1.cmp(&b.1))
        });
        inside.truncate(k);
        if inside.is_empty() {
            out.members.push(Vec::new());
            out.offsets.push(vec![Vec3::zeros(); k]);
            out.flags.push(GroupFlag::Empty);
            continue;
        }
        let flag = if inside.len() < k {
            GroupFlag::Padded
        } else {
            GroupFlag::Full
        };
        let mut ids: Vec<usize> = inside.iter().map(|&(_, i)| i).collect();
        while ids.len() < k {
            ids.push(ids[0]);
        }
        out.offsets.push(ids.iter().map(|&i| points[i] - c).collect());
        out.members.push(ids);
        out.flags.push(flag);
    }
    Ok(out)
}

/// `L` launch directions on a Fibonacci lattice:
/// `z_l = 1 - 2l/L`, azimuth `2 pi l Phi` with `Phi = (sqrt 5 - 1)/2`.
pub fn fibonacci_directions(count: usize) -> Vec<Vec3> {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let l_total = count as f64;
    (1..=count)
        .map(|l| {
            let lf = l as f64;
            let z = 1.0 - 2.0 * lf / l_total;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let az = 2.0 * std::f64::consts::PI * lf * phi;
            Vec3::new(rho * az.cos(), rho * az.sin(), z)
        })
        .collect()
}
