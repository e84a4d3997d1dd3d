mod common;

use cloudray::em::{Complex, PathGain, PolAmp, C0};
use cloudray::geometry::{PointCloud, Vec3};
use cloudray::metrics::{angular_error, path_loss, path_loss_of, pdp_of, rms_ds_of};
use cloudray::tracer::{trace, Scene, TraceConfig};
use proptest::prelude::*;

fn gains() -> impl Strategy<Value = Vec<PathGain>> {
    proptest::collection::vec((1e-4f64..1.0, 0.0f64..2.0 * std::f64::consts::PI, 0.0f64..200e-9), 1..40).prop_map(|v| {
        v.into_iter()
            .map(|(m, ph, tau)| PathGain {
                t: PolAmp::identity(),
                tau,
                a: Complex::from_polar(m, ph),
                length: tau * C0,
            })
            .collect()
    })
}

#[test]
fn free_space_path_loss_at_one_meter() {
    let g = common::geometry(PointCloud::empty(0.05), vec![]);
    let scene = Scene::new(g, Vec3::zeros(), Vec3::new(0.0, 0.6, 0.8), 28e9).unwrap();
    let real = trace(&scene, &TraceConfig::default()).unwrap();
    // 20 log10(4 pi / lambda) with lambda = c / 28 GHz.
    assert!((path_loss(&real).unwrap() - 61.390_944).abs() < 1e-5);
}

#[test]
fn angular_error_examples() {
    let g = common::geometry(common::box_cloud([4.0, 3.0, 2.5], 0.08, 0), vec![]);
    let scene = Scene::new(g, Vec3::new(1.0, 1.0, 1.2), Vec3::new(3.0, 2.0, 1.4), 28e9).unwrap();
    let cfg = TraceConfig { n_rays: 20_000, max_diffuse: 0, n_scatter: 0, ..TraceConfig::default() };
    let real = trace(&scene, &cfg).unwrap();
    let one = real.nlos.iter().find(|p| p.bounce_count() == 1).unwrap();
    let two = real.nlos.iter().find(|p| p.bounce_count() == 2).unwrap();
    assert_eq!(angular_error(one, one).unwrap(), 0.0);
    let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), 5f64.to_radians());
    let mut p = one.clone();
    let mut q = one.clone();
    p.hops[0].dir_out = Vec3::x();
    q.hops[0].dir_out = rot * Vec3::x();
    assert!((angular_error(&p, &q).unwrap() - 5.0).abs() < 1e-9);
    let mut r = two.clone();
    let mut s = two.clone();
    r.hops[1].dir_out = Vec3::x();
    s.hops[1].dir_out = rot * Vec3::x();
    assert!((angular_error(&r, &s).unwrap() - 2.5).abs() < 1e-9);
    assert!(angular_error(one, two).is_err());
}

proptest! {
    #[test]
    fn pdp_conserves_power(gs in gains(), bw in 0.1e-9f64..5e-9) {
        let p = pdp_of(&gs, bw).unwrap();
        let total: f64 = gs.iter().map(PathGain::power).sum();
        prop_assert!((p.total_power() - total).abs() <= 1e-12 * total);
        prop_assert!(p.bins.windows(2).all(|w| w[0].0 < w[1].0));
        // Brute-force accumulation per bin.
        for (d, pw) in &p.bins {
            let k = (d / bw).round();
            let s: f64 = gs.iter().filter(|g| (g.tau / bw).floor() == k).map(PathGain::power).sum();
            prop_assert!((s - pw).abs() <= 1e-12 * total);
        }
    }

    #[test]
    fn ds_shift_and_scale_invariant(gs in gains(), shift in 0.0f64..1e-6, k in 1e-3f64..1e3) {
        let base = rms_ds_of(&gs).unwrap();
        let moved: Vec<PathGain> = gs.iter().map(|g| PathGain { tau: g.tau + shift, a: g.a * k.sqrt(), ..*g }).collect();
        prop_assert!((rms_ds_of(&moved).unwrap() - base).abs() < 1e-6 * base.max(1e-12) + 1e-15);
        // Brute-force moments.
        let p: f64 = gs.iter().map(PathGain::power).sum();
        let m1 = gs.iter().map(|g| g.power() * g.tau).sum::<f64>() / p;
        let m2 = gs.iter().map(|g| g.power() * g.tau * g.tau).sum::<f64>() / p;
        prop_assert!((base - (m2 - m1 * m1).max(0.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pl_scales_with_power(gs in gains(), k in 1e-3f64..1e3) {
        let scaled: Vec<PathGain> = gs.iter().map(|g| PathGain { a: g.a * k.sqrt(), ..*g }).collect();
        let d = path_loss_of(&gs).unwrap() - path_loss_of(&scaled).unwrap();
        prop_assert!((d - 10.0 * k.log10()).abs() < 1e-9);
    }
}
