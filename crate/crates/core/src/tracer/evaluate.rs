use std::f64::consts::PI;

use super::{Angles, Hop, HopKind, Scene, TracedPath};
use crate::em::{
    basis_transform, chain, diffraction_local, diffraction_spreading, fresnel, launch_amplitude,
    phase, polarization_basis, scatter_local, spherical_continuation, spreading_factor, ChainLink,
    InteractionFrame, PolAmp, Spreading,
};
use crate::error::{Error, Result};
use crate::geometry::{unit, Vec3};

/// Exact interaction vertex of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Vertex {
    Reflect { position: Vec3, normal: Vec3, point_id: usize },
    Scatter { position: Vec3, normal: Vec3, point_id: usize },
    Diffract { position: Vec3, edge_id: usize },
}

impl Vertex {
    pub fn position(&self) -> Vec3 {
        match self {
            Vertex::Reflect { position, .. }
            | Vertex::Scatter { position, .. }
            | Vertex::Diffract { position, .. } => *position,
        }
    }

    pub fn kind(&self) -> HopKind {
        match self {
            Vertex::Reflect { .. } => HopKind::Reflect,
            Vertex::Scatter { .. } => HopKind::Scatter,
            Vertex::Diffract { .. } => HopKind::Diffract,
        }
    }
}

/// Re-express an interaction matrix given in the `from` frame in the `to`
/// frame; both frames share the incoming and outgoing directions.
pub(crate) fn reframe(local: &PolAmp, from: &InteractionFrame, to: &InteractionFrame) -> PolAmp {
    let into = basis_transform(&to.incoming, &from.incoming);
    let out = basis_transform(&from.outgoing, &to.outgoing);
    out * *local * into
}

/// Field model of a path through `vertices` from the scene's transmitter
/// to its receiver. An empty vertex list is the line-of-sight path.
pub fn evaluate_path(scene: &Scene, vertices: &[Vertex]) -> Result<TracedPath> {
    evaluate_path_with(scene, vertices, None)
}

/// As [`evaluate_path`], with the interaction matrices (ray-fixed frame)
/// supplied by the caller instead of the physical models. Geometry,
/// spreading and phase are still computed from the vertices.
pub fn evaluate_path_with(scene: &Scene, vertices: &[Vertex], locals: Option<&[PolAmp]>) -> Result<TracedPath> {
    if locals.is_some_and(|l| l.len() != vertices.len()) {
        return Err(Error::invalid("one interaction matrix per vertex required"));
    }
    let geo = &scene.geometry;
    let lambda = scene.lambda();
    let mut pts = Vec::with_capacity(vertices.len() + 2);
    pts.push(scene.tx);
    pts.extend(vertices.iter().map(Vertex::position));
    pts.push(scene.rx);
    let mut dirs = Vec::with_capacity(pts.len() - 1);
    let mut lens = Vec::with_capacity(pts.len() - 1);
    for w in pts.windows(2) {
        let v = w[1] - w[0];
        lens.push(v.norm());
        dirs.push(unit(&v)?);
    }
    let mut links = vec![ChainLink {
        amp: launch_amplitude(lens[0], lambda)?,
        length: lens[0],
    }];
    let mut hops = Vec::with_capacity(vertices.len());
    let mut s_src = lens[0];
    let mut gamma = 1.0;
    for (i, v) in vertices.iter().enumerate() {
        let d_in = dirs[i];
        let d_out = dirs[i + 1];
        let d = lens[i + 1];
        let (local, spreading, normal, point_id, edge_id, material, hint) = match *v {
            Vertex::Reflect {
                normal, point_id, ..
            } => {
                let n = if d_in.dot(&normal) > 0.0 { -normal } else { normal };
                let mat = geo.material_of(point_id).clone();
                let local = match locals {
                    Some(l) => l[i],
                    None => {
                        let (r_perp, r_par) = fresnel(-d_in.dot(&n), &mat, scene.freq)?;
                        PolAmp::diag(r_perp * mat.r(), r_par * mat.r())
                    }
                };
                let a = spherical_continuation(s_src, d)?;
                s_src += d;
                (local, a, n, Some(point_id), None, mat, n)
            }
            Vertex::Scatter {
                normal, point_id, ..
            } => {
                let n = if d_in.dot(&normal) > 0.0 { -normal } else { normal };
                let mat = geo.material_of(point_id).clone();
                let area = PI * geo.cloud.point_radius.powi(2);
                let local = match locals {
                    Some(l) => l[i],
                    None => scatter_local(&d_in, &d_out, &n, &mat, area, gamma)?.1,
                };
                let a = spreading_factor(Spreading::Spherical, d)?;
                s_src = d;
                (local, a, n, Some(point_id), None, mat, n)
            }
            Vertex::Diffract { edge_id, .. } => {
                let edge = geo
                    .edges
                    .get(edge_id)
                    .ok_or_else(|| Error::invalid(format!("unknown edge {edge_id}")))?;
                let m0 = geo.materials.get(edge.materials[0])?;
                let m1 = geo.materials.get(edge.materials[1])?;
                let (eframe, t) = diffraction_local(edge, &d_in, &d_out, [m0, m1], d, s_src, lambda)?;
                let (_, _, axis) = edge.frame();
                let net = InteractionFrame::new(&d_in, &d_out, Some(&axis));
                let local = match locals {
                    Some(l) => l[i],
                    None => reframe(&t, &eframe, &net),
                };
                let a = diffraction_spreading(d, s_src);
                s_src = d;
                (local, a, edge.wedge_faces[0], None, Some(edge_id), m0.clone(), axis)
            }
        };
        let frame = InteractionFrame::new(&d_in, &d_out, Some(&hint));
        let amp = frame
            .to_global(&local, &polarization_basis(&d_in), &polarization_basis(&d_out))
            .scale(phase(d, lambda) * spreading);
        // Scatter and edge factors carry patch and spreading units, so only
        // specular factors count towards the incoming power fraction.
        if v.kind() == HopKind::Reflect {
            gamma *= local.max_singular();
        }
        links.push(ChainLink { amp, length: d });
        hops.push(Hop {
            kind: v.kind(),
            position: v.position(),
            dir_in: d_in,
            dir_out: d_out,
            normal,
            point_id,
            edge_id,
            material,
            local,
            spreading,
            amp,
            length: d,
        });
    }
    let gain = chain(&links, lambda)?;
    Ok(TracedPath {
        launch_length: lens[0],
        launch_dir: dirs[0],
        hops,
        gain,
        aod: Angles::of(&dirs[0]),
        aoa: Angles::of(&-dirs[dirs.len() - 1]),
    })
}
