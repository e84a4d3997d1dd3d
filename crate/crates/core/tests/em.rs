use std::f64::consts::PI;

use cloudray::em::{
    basis_transform, cfr, chain, fresnel, lambertian, polarization_basis, reflect_dir,
    reflection_local, ChainLink, Complex, Material, PathGain, PolAmp,
};
use cloudray::geometry::Vec3;
use proptest::prelude::*;

fn unit_vec() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, 0.0f64..2.0 * PI).prop_map(|(z, a)| {
        let r = (1.0 - z * z).sqrt();
        Vec3::new(r * a.cos(), r * a.sin(), z)
    })
}

fn material() -> impl Strategy<Value = Material> {
    (0.0f64..10.0, 1.0f64..12.0, 0.0f64..1.0, 0.0f64..1.0)
        .prop_map(|(sig, eps, s, kx)| Material::new("m", sig, eps, s, kx).unwrap())
}

#[test]
fn lambertian_integrates_to_one() {
    let n = Vec3::new(0.2, -0.4, 0.9).normalize();
    let t = n.cross(&Vec3::x()).normalize();
    let b = n.cross(&t);
    // Midpoint quadrature of f_s dOmega in (theta, phi).
    let (m, k) = (400, 400);
    let mut sum = 0.0;
    for i in 0..m {
        let th = (i as f64 + 0.5) * 0.5 * PI / m as f64;
        for j in 0..k {
            let ph = (j as f64 + 0.5) * 2.0 * PI / k as f64;
            let d = n * th.cos() + (t * ph.cos() + b * ph.sin()) * th.sin();
            sum += lambertian(&d, &n) * th.sin();
        }
    }
    let integral = sum * (0.5 * PI / m as f64) * (2.0 * PI / k as f64);
    assert!((0.99..=1.01).contains(&integral), "{integral}");
}

#[test]
fn friis_within_hundredth_db() {
    let lambda = 0.0107;
    for d in [0.5, 3.0, 40.0] {
        let links = [ChainLink {
            amp: PolAmp::identity().scale(Complex::from_polar(1.0 / d, -2.0 * PI * d / lambda)),
            length: d,
        }];
        let g = chain(&links, lambda).unwrap();
        let friis = -20.0 * (4.0 * PI * d / lambda).log10();
        assert!((g.power_db() - friis).abs() < 0.01);
    }
}

#[test]
fn cfr_equals_direct_sum() {
    let paths: Vec<PathGain> = (0..5)
        .map(|i| PathGain {
            t: PolAmp::identity(),
            tau: 1e-9 * (i as f64 * 3.7 + 1.0),
            a: Complex::from_polar(0.1 / (i as f64 + 1.0), i as f64),
            length: 0.0,
        })
        .collect();
    let freqs: Vec<f64> = (0..16).map(|i| 28e9 + i as f64 * 25e6).collect();
    let h = cfr(&paths, &freqs).unwrap();
    for (f, hv) in freqs.iter().zip(&h) {
        let mut s = Complex::new(0.0, 0.0);
        for p in &paths {
            s += p.a * Complex::from_polar(1.0, -2.0 * PI * f * p.tau);
        }
        assert!((s - hv).norm() < 1e-12);
    }
}

proptest! {
    #[test]
    fn energy_split_is_exact(m in material()) {
        prop_assert!((m.r().powi(2) + m.s.powi(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn specular_factor_is_contractive(m in material(), cos_i in 1e-6f64..1.0, f in 1e9f64..1e11) {
        let (rp, rl) = fresnel(cos_i, &m, f).unwrap();
        prop_assert!(rp.norm() <= 1.0 + 1e-12);
        prop_assert!(rl.norm() <= 1.0 + 1e-12);
        let n = Vec3::z();
        let k_i = Vec3::new((1.0 - cos_i * cos_i).sqrt(), 0.0, -cos_i);
        let (_, local) = reflection_local(&k_i, &n, &m, f).unwrap();
        prop_assert!(local.max_singular() <= 1.0 + 1e-12);
    }

    #[test]
    fn basis_change_is_orthogonal(k in unit_vec(), angle in 0.0f64..2.0 * PI) {
        let a = polarization_basis(&k);
        let (c, s) = (angle.cos(), angle.sin());
        let b = cloudray::em::PolBasis { e_p: a.e_p * c + a.e_q * s, e_q: a.e_q * c - a.e_p * s };
        let d = basis_transform(&a, &b).0;
        let dtd = d.adjoint() * d;
        prop_assert!((dtd[(0, 0)].re - 1.0).abs() < 1e-12 && (dtd[(1, 1)].re - 1.0).abs() < 1e-12);
        prop_assert!(dtd[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn reflection_law(k in unit_vec(), n in unit_vec()) {
        prop_assume!(k.dot(&n) < -1e-3);
        let r = reflect_dir(&k, &n).unwrap();
        prop_assert!((r.dot(&n) + k.dot(&n)).abs() < 1e-12);
        prop_assert!((k.cross(&n).dot(&r)).abs() < 1e-12);
    }
}
