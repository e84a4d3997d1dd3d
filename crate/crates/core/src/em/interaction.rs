use std::f64::consts::PI;

use super::{fresnel, phase, polarization_basis, InteractionFrame, Material, PolAmp, PolBasis, C0};
use crate::error::{Error, Result};
use crate::geometry::{Hit, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spreading {
    Spherical,
}

/// Spreading factor of a wave emitted from a point source, `1/d`.
pub fn spreading_factor(kind: Spreading, d: f64) -> Result<f64> {
    match kind {
        Spreading::Spherical if d > 0.0 => Ok(1.0 / d),
        _ => Err(Error::invalid(format!("spreading distance must be positive, got {d}"))),
    }
}

/// Spreading of a specularly continued spherical wave whose virtual source
/// lies `s_prev` behind the interaction point: `s_prev / (s_prev + d)`.
/// Along a specular chain the factors multiply to one over the unfolded length.
pub fn spherical_continuation(s_prev: f64, d: f64) -> Result<f64> {
    if !(s_prev > 0.0) || d < 0.0 {
        return Err(Error::invalid(format!(
            "continuation needs s_prev > 0 and d >= 0, got {s_prev}, {d}"
        )));
    }
    Ok(s_prev / (s_prev + d))
}

/// Mirror direction `k_i - 2 (k_i . n) n`.
pub fn reflect_dir(k_i: &Vec3, n: &Vec3) -> Result<Vec3> {
    let c = k_i.dot(n);
    if c >= 0.0 {
        return Err(Error::RayLeavesSurface);
    }
    Ok((k_i - n * (2.0 * c)).normalize())
}

/// Frame-local specular factor `diag(R r_perp, R r_par)` with its frame.
pub fn reflection_local(
    k_i: &Vec3,
    n: &Vec3,
    mat: &Material,
    freq: f64,
) -> Result<(InteractionFrame, PolAmp)> {
    let k_r = reflect_dir(k_i, n)?;
    let (r_perp, r_par) = fresnel(-k_i.dot(n), mat, freq)?;
    let r = mat.r();
    let frame = InteractionFrame::new(k_i, &k_r, Some(n));
    Ok((frame, PolAmp::diag(r_perp * r, r_par * r)))
}

/// Specular hop: field leaving the previous point in `prev_out_basis`,
/// reflected at `hit` and propagated `d` meters along `k_r`, expressed in
/// `polarization_basis(k_r)`. `s_prev` is the unfolded distance from the
/// last source (transmitter, scatterer or edge) to the hit.
#[allow(clippy::too_many_arguments)]
pub fn reflection_amplitude(
    hit: &Hit,
    k_i: &Vec3,
    k_r: &Vec3,
    mat: &Material,
    d: f64,
    s_prev: f64,
    lambda: f64,
    prev_out_basis: &PolBasis,
) -> Result<PolAmp> {
    let (frame, local) = reflection_local(k_i, &hit.normal, mat, C0 / lambda)?;
    if (reflect_dir(k_i, &hit.normal)? - k_r).norm() > 1e-6 {
        return Err(Error::invalid("k_r is not the mirror direction of k_i"));
    }
    let g = frame.to_global(&local, prev_out_basis, &polarization_basis(k_r));
    let a = spherical_continuation(s_prev, d)?;
    Ok(g.scale(phase(d, lambda) * a))
}

/// Lambertian scattering pattern `cos(theta_s) / pi`; it integrates to one
/// over the outgoing hemisphere.
pub fn lambertian(k_s: &Vec3, n: &Vec3) -> f64 {
    k_s.dot(n).max(0.0) / PI
}

/// Frame-local diffuse factor
/// `S Gamma sqrt(f_s cos(theta_i) dA) [[sqrt(1-K_x), sqrt(K_x)], [sqrt(K_x), sqrt(1-K_x)]]`.
pub fn scatter_local(
    k_i: &Vec3,
    k_s: &Vec3,
    n: &Vec3,
    mat: &Material,
    patch_area: f64,
    gamma: f64,
) -> Result<(InteractionFrame, PolAmp)> {
    let cos_i = -k_i.dot(n);
    if cos_i <= 0.0 {
        return Err(Error::RayLeavesSurface);
    }
    if k_s.dot(n) <= 0.0 {
        return Err(Error::ScatterIntoSurface);
    }
    if !(patch_area > 0.0) {
        return Err(Error::invalid(format!("patch area must be positive, got {patch_area}")));
    }
    let mag = mat.s * gamma * (lambertian(k_s, n) * cos_i * patch_area).sqrt();
    let co = (1.0 - mat.k_x).sqrt() * mag;
    let cross = mat.k_x.sqrt() * mag;
    let frame = InteractionFrame::new(k_i, k_s, Some(n));
    Ok((frame, PolAmp::from_real([[co, cross], [cross, co]])))
}

/// Diffuse hop: the scatterer acts as a new point source, so the outgoing
/// segment spreads as `1/d`.
#[allow(clippy::too_many_arguments)]
pub fn scatter_amplitude(
    hit: &Hit,
    k_i: &Vec3,
    k_s: &Vec3,
    mat: &Material,
    d: f64,
    lambda: f64,
    patch_area: f64,
    gamma: f64,
    prev_out_basis: &PolBasis,
) -> Result<PolAmp> {
    let (frame, local) = scatter_local(k_i, k_s, &hit.normal, mat, patch_area, gamma)?;
    let g = frame.to_global(&local, prev_out_basis, &polarization_basis(k_s));
    let a = spreading_factor(Spreading::Spherical, d)?;
    Ok(g.scale(phase(d, lambda) * a))
}

/// Launch hop from an isotropic source along `k`: `exp(-j k d) / d` in
/// `polarization_basis(k)`.
pub(crate) fn launch_amplitude(d: f64, lambda: f64) -> Result<PolAmp> {
    let a = spreading_factor(Spreading::Spherical, d)?;
    Ok(PolAmp::identity().scale(phase(d, lambda) * a))
}
