use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};

/// First token of the header line.
pub const POINTS_MAGIC: &str = "pointcloud";

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Text form of `cloud`:
///
/// ```text
/// # optional comments
/// pointcloud count=2 normals=true point_radius=0.092
/// x y z nx ny nz material_id
/// ```
///
/// Floats are written in shortest round-trip form, so reading back is exact.
pub fn write_points(cloud: &PointCloud) -> String {
    let normals = cloud.normals.as_ref();
    let mut s = format!(
        "{POINTS_MAGIC} count={} normals={} point_radius={}\n",
        cloud.len(),
        normals.is_some(),
        cloud.point_radius
    );
    for (i, p) in cloud.positions.iter().enumerate() {
        write!(s, "{} {} {}", p.x, p.y, p.z).expect("string write");
        if let Some(n) = normals {
            write!(s, " {} {} {}", n[i].x, n[i].y, n[i].z).expect("string write");
        }
        writeln!(s, " {}", cloud.material_id[i]).expect("string write");
    }
    s
}

pub fn parse_points(src: &str) -> Result<PointCloud> {
    let mut lines = src
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let mut tok = header.split_whitespace();
    if tok.next() != Some(POINTS_MAGIC) {
        return Err(parse_err(hl, format!("header must start with `{POINTS_MAGIC}`")));
    }
    let (mut count, mut normals, mut radius) = (None, None, None);
    for kv in tok {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| parse_err(hl, format!("expected key=value, got `{kv}`")))?;
        let bad = |_| parse_err(hl, format!("bad value for {k}: `{v}`"));
        match k {
            "count" => count = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "normals" => normals = Some(v.parse::<bool>().map_err(|e| bad(e.to_string()))?),
            "point_radius" => radius = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(parse_err(hl, format!("unknown header field `{k}`"))),
        }
    }
    let count = count.ok_or_else(|| parse_err(hl, "header lacks count"))?;
    let has_n = normals.ok_or_else(|| parse_err(hl, "header lacks normals"))?;
    let radius = radius.ok_or_else(|| parse_err(hl, "header lacks point_radius"))?;
    let width = if has_n { 7 } else { 4 };
    let mut pos = Vec::with_capacity(count);
    let mut nrm = Vec::with_capacity(if has_n { count } else { 0 });
    let mut mat = Vec::with_capacity(count);
    for (ln, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != width {
            return Err(parse_err(ln, format!("expected {width} fields, found {}", f.len())));
        }
        let num = |i: usize| {
            f[i].parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(ln, format!("bad number `{}`", f[i])))
        };
        pos.push(Vec3::new(num(0)?, num(1)?, num(2)?));
        if has_n {
            nrm.push(Vec3::new(num(3)?, num(4)?, num(5)?));
        }
        let m = f[width - 1];
        mat.push(m.parse::<u32>().map_err(|_| parse_err(ln, format!("bad material id `{m}`")))?);
    }
    if pos.len() != count {
        return Err(parse_err(hl, format!("header declares {count} points, found {}", pos.len())));
    }
    PointCloud::new(pos, has_n.then_some(nrm), mat, radius)
}

pub fn read_points(path: &Path) -> Result<PointCloud> {
    parse_points(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let c = PointCloud::new(
            vec![Vec3::new(0.1, 1.0 / 3.0, -2.5), Vec3::new(1e-9, 0.0, 7.0)],
            Some(vec![Vec3::z(), Vec3::new(0.6, 0.8, 0.0)]),
            vec![3, 0],
            0.092,
        )
        .unwrap();
        assert_eq!(parse_points(&write_points(&c)).unwrap(), c);
        let mut bare = c.clone();
        bare.normals = None;
        assert_eq!(parse_points(&write_points(&bare)).unwrap(), bare);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let src = "# a cloud\npointcloud count=2 normals=false point_radius=0.1\n0 0 0 1\n0 0 x 1\n";
        match parse_points(src).unwrap_err() {
            Error::Parse { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains('x'));
            }
            e => panic!("{e}"),
        }
        let short = "pointcloud count=3 normals=false point_radius=0.1\n0 0 0 1\n";
        assert!(matches!(parse_points(short), Err(Error::Parse { line: 1, .. })));
        let wide = "pointcloud count=1 normals=false point_radius=0.1\n0 0 0 0 1\n";
        assert!(matches!(parse_points(wide), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn comments_are_ignored() {
        let src = "pointcloud count=1 normals=true point_radius=0.1 # trailing\n# between\n1 2 3 0 0 1 2 # tail\n";
        let c = parse_points(src).unwrap();
        assert_eq!(c.positions[0], Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(c.material_id, vec![2]);
    }
}
