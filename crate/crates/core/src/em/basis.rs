use nalgebra::Matrix2;

use super::{Complex, PolAmp};
use crate::geometry::Vec3;

/// Pair of orthonormal vectors transverse to a propagation direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolBasis {
    pub e_p: Vec3,
    pub e_q: Vec3,
}

/// Global polarization basis of a propagation direction.
///
/// `e_p = normalize(z x k)` (horizontal), `e_q = k x e_p`, so `{e_p, e_q, k}`
/// is right-handed. Within 1e-9 of the poles `e_p` falls back to `x`.
pub fn polarization_basis(k: &Vec3) -> PolBasis {
    let e_p = if k.z.abs() > 1.0 - 1e-9 {
        Vec3::x()
    } else {
        Vec3::z().cross(k).normalize()
    };
    let e_q = k.cross(&e_p).normalize();
    PolBasis { e_p, e_q }
}

/// Change of basis from `out_basis` (field leaving the previous point) to
/// `in_basis` (field arriving at the next one): entry `(i, j)` is the dot
/// product of the `i`-th `in_basis` vector with the `j`-th `out_basis` vector.
pub fn basis_transform(out_basis: &PolBasis, in_basis: &PolBasis) -> PolAmp {
    let o = [out_basis.e_p, out_basis.e_q];
    let i = [in_basis.e_p, in_basis.e_q];
    let c = |a: &Vec3, b: &Vec3| Complex::new(a.dot(b), 0.0);
    PolAmp(Matrix2::new(
        c(&i[0], &o[0]),
        c(&i[0], &o[1]),
        c(&i[1], &o[0]),
        c(&i[1], &o[1]),
    ))
}

/// Ray-fixed bases of one interaction, defined from the incoming and
/// outgoing directions alone.
///
/// The shared vector `s` is normal to the plane of `(d_in, d_out)`; the
/// second vectors are `s x d_in` before and `d_out x s` after the
/// interaction. For a specular reflection these are the perpendicular and
/// parallel directions, and a perfect conductor maps to `-identity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionFrame {
    pub incoming: PolBasis,
    pub outgoing: PolBasis,
}

impl InteractionFrame {
    /// `hint` is used when `d_in` and `d_out` are (anti)parallel; it is
    /// usually the surface normal.
    pub fn new(d_in: &Vec3, d_out: &Vec3, hint: Option<&Vec3>) -> Self {
        let mut s = d_in.cross(d_out);
        if s.norm() < 1e-9 {
            s = hint.map_or(Vec3::zeros(), |h| d_in.cross(h));
            if s.norm() < 1e-9 {
                s = polarization_basis(d_in).e_p;
            }
        }
        let s = s.normalize();
        InteractionFrame {
            incoming: PolBasis {
                e_p: s,
                e_q: s.cross(d_in).normalize(),
            },
            outgoing: PolBasis {
                e_p: s,
                e_q: d_out.cross(&s).normalize(),
            },
        }
    }

    /// Express a frame-local interaction matrix between two global bases.
    pub fn to_global(&self, local: &PolAmp, before: &PolBasis, after: &PolBasis) -> PolAmp {
        let into = basis_transform(before, &self.incoming);
        let out = basis_transform(&self.outgoing, after);
        out * *local * into
    }
}
