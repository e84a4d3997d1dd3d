use super::{Complex, Material, EPS0};
use crate::error::{Error, Result};

/// Complex relative permittivity `eps_r - j sigma / (2 pi f eps0)`.
pub(crate) fn eta(mat: &Material, f: f64) -> Complex {
    Complex::new(
        mat.eps_r,
        -mat.sigma / (2.0 * std::f64::consts::PI * f * EPS0),
    )
}

/// Fresnel reflection coefficients `(r_perp, r_par)` of a half space.
///
/// Both coefficients equal `(1 - sqrt(eta)) / (1 + sqrt(eta))` at normal
/// incidence and tend to `-1` for a perfect conductor.
pub fn fresnel(cos_theta_i: f64, mat: &Material, f: f64) -> Result<(Complex, Complex)> {
    if !(cos_theta_i > 0.0) {
        return Err(Error::NonIncident(cos_theta_i));
    }
    if !(f > 0.0) {
        return Err(Error::invalid(format!("frequency must be positive, got {f}")));
    }
    let c = cos_theta_i.min(1.0);
    let sin2 = 1.0 - c * c;
    let eta = eta(mat, f);
    let root = (eta - sin2).sqrt();
    let r_perp = (c - root) / (c + root);
    let r_par = (root - eta * c) / (root + eta * c);
    Ok((r_perp, r_par))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(sigma: f64, eps_r: f64) -> Material {
        Material::new("t", sigma, eps_r, 0.0, 0.0).unwrap()
    }

    #[test]
    fn no_contrast_no_reflection() {
        for c in [0.1, 0.5, 1.0] {
            let (a, b) = fresnel(c, &mat(0.0, 1.0), 28e9).unwrap();
            assert!(a.norm() < 1e-15 && b.norm() < 1e-15);
        }
    }

    #[test]
    fn normal_incidence_eps5() {
        let want = (1.0 - 5f64.sqrt()) / (1.0 + 5f64.sqrt());
        let (a, b) = fresnel(1.0, &mat(0.0, 5.0), 28e9).unwrap();
        assert!((a.re - want).abs() < 1e-12 && a.im.abs() < 1e-15);
        assert!((b.re - want).abs() < 1e-12 && b.im.abs() < 1e-15);
        assert!((want + 0.3820).abs() < 1e-4);
    }

    #[test]
    fn grazing_and_pec_limits() {
        let (a, _) = fresnel(1e-9, &mat(0.1, 4.0), 28e9).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-6);
        let (a, b) = fresnel(1.0, &mat(1e7, 1.0), 28e9).unwrap();
        assert!((a + 1.0).norm() < 1e-3 && (b + 1.0).norm() < 1e-3);
    }

    #[test]
    fn rejects_non_incident() {
        assert!(matches!(
            fresnel(0.0, &mat(0.0, 2.0), 1e9),
            Err(Error::NonIncident(_))
        ));
        assert!(fresnel(-0.5, &mat(0.0, 2.0), 1e9).is_err());
    }

    #[test]
    fn brewster_zero_for_lossless_dielectric() {
        let eps: f64 = 4.0;
        let theta_b = eps.sqrt().atan();
        let (_, b) = fresnel(theta_b.cos(), &mat(0.0, eps), 1e9).unwrap();
        assert!(b.norm() < 1e-12);
    }
}
