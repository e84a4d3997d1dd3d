use std::f64::consts::PI;

use super::utd::{wedge_coefficients, WedgeParams};
use super::{fresnel, phase, polarization_basis, Complex, InteractionFrame, Material, PolAmp, PolBasis, C0};
use crate::error::{Error, Result};
use crate::geometry::{EdgeSegment, Vec3};

const KELLER_TOL: f64 = 1e-6;

/// Outgoing directions on the Keller cone of `edge` for incidence `k_i`.
///
/// The `n_dirs` directions share the incident cone angle and are spread
/// uniformly over the free-space azimuth range `(0, n pi)`.
pub fn keller_cone_dirs(edge: &EdgeSegment, k_i: &Vec3, n_dirs: usize) -> Result<Vec<Vec3>> {
    let (t0, n0, e) = edge.frame();
    let cb = k_i.dot(&e);
    let sb = (1.0 - cb * cb).max(0.0).sqrt();
    if sb < 1e-9 {
        return Err(Error::DegenerateCone);
    }
    let span = edge.wedge_n() * PI;
    Ok((0..n_dirs)
        .map(|j| {
            let psi = span * (j as f64 + 0.5) / n_dirs as f64;
            e * cb + (t0 * psi.cos() + n0 * psi.sin()) * sb
        })
        .collect())
}

/// Edge-fixed angles and ray-fixed bases of one diffraction event.
#[derive(Debug, Clone, Copy)]
pub struct EdgeGeometry {
    pub phi: f64,
    pub phi_p: f64,
    pub sin_beta0: f64,
    /// Incoming `(beta0', phi')` and outgoing `(beta0, phi)` unit vectors.
    pub frame: InteractionFrame,
}

impl EdgeGeometry {
    pub fn new(edge: &EdgeSegment, k_i: &Vec3, k_d: &Vec3) -> Result<Self> {
        let (_, _, e) = edge.frame();
        if (k_i.dot(&e) - k_d.dot(&e)).abs() > KELLER_TOL {
            return Err(Error::invalid("diffracted direction is off the Keller cone"));
        }
        let ei = e.cross(k_i);
        let ed = e.cross(k_d);
        let sin_beta0 = ei.norm();
        if sin_beta0 < 1e-9 || ed.norm() < 1e-9 {
            return Err(Error::DegenerateCone);
        }
        let phi_hat_i = -ei / sin_beta0;
        let phi_hat_d = ed / ed.norm();
        let frame = InteractionFrame {
            incoming: PolBasis {
                e_p: k_i.cross(&phi_hat_i),
                e_q: phi_hat_i,
            },
            outgoing: PolBasis {
                e_p: k_d.cross(&phi_hat_d),
                e_q: phi_hat_d,
            },
        };
        Ok(EdgeGeometry {
            phi: edge.azimuth(k_d),
            phi_p: edge.azimuth(&-k_i),
            sin_beta0,
            frame,
        })
    }
}

fn face_reflection(cos_i: f64, mat: &Material, freq: f64) -> Result<(Complex, Complex)> {
    let (r_perp, r_par) = fresnel(cos_i.abs().max(1e-9), mat, freq)?;
    Ok((r_perp, -r_par))
}

/// Edge-fixed diffraction matrix `diag(-D_s, -D_h)` in the
/// `(beta0, phi)` ray-fixed bases. `s_prime` is the distance from the
/// source to the edge, `s` from the edge to the observer.
pub fn diffraction_local(
    edge: &EdgeSegment,
    k_i: &Vec3,
    k_d: &Vec3,
    mats: [&Material; 2],
    s: f64,
    s_prime: f64,
    lambda: f64,
) -> Result<(InteractionFrame, PolAmp)> {
    if !(s > 0.0 && s_prime > 0.0) {
        return Err(Error::invalid(format!("diffraction distances must be positive, got {s}, {s_prime}")));
    }
    let g = EdgeGeometry::new(edge, k_i, k_d)?;
    let n = edge.wedge_n();
    let freq = C0 / lambda;
    let r0 = face_reflection(k_i.dot(&edge.wedge_faces[0]), mats[0], freq)?;
    let rn = face_reflection(k_d.dot(&edge.wedge_faces[1]), mats[1], freq)?;
    let l = if s_prime.is_finite() {
        s * s_prime / (s + s_prime)
    } else {
        s
    } * g.sin_beta0.powi(2);
    let p = WedgeParams {
        n,
        phi: g.phi,
        phi_p: g.phi_p,
        sin_beta0: g.sin_beta0,
        k: 2.0 * PI / lambda,
        l,
    };
    let (ds, dh) = wedge_coefficients(&p, r0, rn);
    Ok((g.frame, PolAmp::diag(-ds, -dh)))
}

/// Spherical-wave diffraction spreading `sqrt(s' / (s (s + s')))`.
pub fn diffraction_spreading(s: f64, s_prime: f64) -> f64 {
    if s_prime.is_infinite() {
        return 1.0 / s.sqrt();
    }
    (s_prime / (s * (s + s_prime))).sqrt()
}

/// Diffraction hop expressed in `polarization_basis(k_d)`.
#[allow(clippy::too_many_arguments)]
pub fn diffraction_amplitude(
    edge: &EdgeSegment,
    k_i: &Vec3,
    k_d: &Vec3,
    mats: [&Material; 2],
    s: f64,
    s_prime: f64,
    lambda: f64,
    prev_out_basis: &PolBasis,
) -> Result<PolAmp> {
    let (frame, local) = diffraction_local(edge, k_i, k_d, mats, s, s_prime, lambda)?;
    let g = frame.to_global(&local, prev_out_basis, &polarization_basis(k_d));
    Ok(g.scale(phase(s, lambda) * diffraction_spreading(s, s_prime)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convex_edge() -> EdgeSegment {
        // Material fills x <= 0, y <= 0; edge along z.
        EdgeSegment::new(
            [Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, 0.0, 1.0)],
            [Vec3::y(), Vec3::x()],
            PI / 2.0,
            [0, 0],
        )
        .unwrap()
    }

    fn pec() -> Material {
        Material::new("pec", 1e12, 1.0, 0.0, 0.0).unwrap()
    }

    fn dir_at(edge: &EdgeSegment, az: f64, z: f64) -> Vec3 {
        let (t0, n0, e) = edge.frame();
        let s = (1.0 - z * z).sqrt();
        e * z + (t0 * az.cos() + n0 * az.sin()) * s
    }

    #[test]
    fn cone_examples() {
        let edge = convex_edge();
        let k = Vec3::new(1.0, 1.0, 0.0).normalize();
        let k = -k;
        for d in keller_cone_dirs(&edge, &k, 12).unwrap() {
            assert!(d.z.abs() < 1e-12);
            let az = edge.azimuth(&d);
            assert!(az > 0.0 && az < 1.5 * PI);
        }
        let k45 = Vec3::new(-0.5, -0.5, -(0.5f64).sqrt()).normalize();
        for d in keller_cone_dirs(&edge, &k45, 7).unwrap() {
            assert!((d.z.abs() - (PI / 4.0).cos()).abs() < 1e-12);
        }
        assert!(matches!(
            keller_cone_dirs(&edge, &Vec3::z(), 4),
            Err(Error::DegenerateCone)
        ));
    }

    #[test]
    fn spreading_plane_wave_limit() {
        let s = 2.5;
        assert!((diffraction_spreading(s, 1e12) - 1.0 / s.sqrt()).abs() < 1e-9);
        assert_eq!(diffraction_spreading(s, f64::INFINITY), 1.0 / s.sqrt());
    }

    #[test]
    fn pec_soft_and_hard_differ_in_reflection_terms() {
        let edge = convex_edge();
        let m = pec();
        let lam = 0.01;
        // Symmetric incidence: source and observer mirror each other about the bisector.
        let phi_p = 0.5 * PI;
        let phi = 1.0 * PI;
        let k_i = -dir_at(&edge, phi_p, 0.0);
        let k_d = dir_at(&edge, phi, 0.0);
        let (_, t) = diffraction_local(&edge, &k_i, &k_d, [&m, &m], 3.0, 2.0, lam).unwrap();
        // Independent evaluation of the PEC formula.
        let n = 1.5;
        let k = 2.0 * PI / lam;
        let l = 3.0 * 2.0 / 5.0;
        let term = |sign: f64, beta: f64| {
            let nn = ((beta + sign * PI) / (2.0 * PI * n)).round();
            let a = 2.0 * ((2.0 * PI * n * nn - beta) / 2.0).cos().powi(2);
            super::super::utd::transition(k * l * a) / ((PI + sign * beta) / (2.0 * n)).tan()
        };
        let pre = -Complex::from_polar(1.0, -PI / 4.0) / (2.0 * n * (2.0 * PI * k).sqrt());
        let inc = term(1.0, phi - phi_p) + term(-1.0, phi - phi_p);
        let refl = term(-1.0, phi + phi_p) + term(1.0, phi + phi_p);
        let ds = pre * (inc - refl);
        let dh = pre * (inc + refl);
        // sigma = 1e12 leaves |r| - 1 of order 1e-6.
        assert!((t.entry(0, 0) + ds).norm() < 1e-4 * ds.norm());
        assert!((t.entry(1, 1) + dh).norm() < 1e-4 * dh.norm());
        assert!(t.entry(0, 1).norm() == 0.0);
        // The reflection terms enter with opposite signs.
        let soft_minus_hard = dh - ds;
        assert!((soft_minus_hard - pre * refl * 2.0).norm() < 1e-4 * soft_minus_hard.norm());
    }

    #[test]
    fn deep_shadow_decays_monotonically() {
        let edge = convex_edge();
        let m = Material::preset("itu_concrete").unwrap();
        let lam = 0.0107;
        let phi_p = 0.25 * PI;
        let k_i = -dir_at(&edge, phi_p, 0.0);
        // Shadow boundary at phi = pi + phi'; sweep deeper towards face n.
        let mut prev = f64::INFINITY;
        let mut az = PI + phi_p + 0.05;
        while az < 1.5 * PI - 0.01 {
            let k_d = dir_at(&edge, az, 0.0);
            let (_, t) = diffraction_local(&edge, &k_i, &k_d, [&m, &m], 2.0, 2.0, lam).unwrap();
            let mag = t.max_singular();
            assert!(mag < prev, "not decaying at az = {az}");
            prev = mag;
            az += 0.02;
        }
    }

    #[test]
    fn boundary_is_finite() {
        let edge = convex_edge();
        let m = Material::preset("itu_concrete").unwrap();
        let phi_p = 0.25 * PI;
        let k_i = -dir_at(&edge, phi_p, 0.0);
        for az in [PI + phi_p, PI - phi_p] {
            let k_d = dir_at(&edge, az, 0.0);
            let (_, t) = diffraction_local(&edge, &k_i, &k_d, [&m, &m], 1.0, 1.0, 0.01).unwrap();
            assert!(t.is_finite());
        }
    }
}
