use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Complex, PolAmp, C0};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Taps closer than this are merged in the impulse response (seconds).
pub const TAP_MERGE: f64 = 1e-12;

/// One hop of a path: its field-transfer matrix (propagation phase
/// included) and the length of its outgoing segment.
#[derive(Debug, Clone, Copy)]
pub struct ChainLink {
    pub amp: PolAmp,
    pub length: f64,
}

/// Antenna polarization pattern: the complex 2-vector in
/// `polarization_basis(dir)` that the antenna radiates or receives along `dir`.
pub trait AntennaPattern {
    fn vector(&self, dir: &Vec3) -> [Complex; 2];
}

/// Isotropic antenna with a fixed `[1, 0]` polarization.
#[derive(Debug, Clone, Copy, Default)]
pub struct Isotropic;

impl AntennaPattern for Isotropic {
    fn vector(&self, _dir: &Vec3) -> [Complex; 2] {
        [Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]
    }
}

/// Chained path response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGain {
    /// Path transfer matrix without the propagation phase.
    pub t: PolAmp,
    /// Propagation delay (seconds).
    pub tau: f64,
    /// Complex path amplitude without the propagation phase; `|a|^2` is the
    /// linear power gain.
    pub a: Complex,
    /// Unfolded path length (meters).
    pub length: f64,
}

impl PathGain {
    pub fn power(&self) -> f64 {
        self.a.norm_sqr()
    }

    pub fn power_db(&self) -> f64 {
        10.0 * self.power().log10()
    }

    /// Propagation phase factor at wavelength `lambda`.
    pub fn phase_factor(&self, lambda: f64) -> Complex {
        Complex::from_polar(1.0, -2.0 * PI * self.length / lambda)
    }
}

/// Multiply hops (last hop leftmost) and project on isotropic antennas.
pub fn chain(links: &[ChainLink], lambda: f64) -> Result<PathGain> {
    chain_with(links, lambda, &Isotropic, &Isotropic, &Vec3::z(), &Vec3::z())
}

/// [`chain`] with explicit antenna patterns, departure direction `aod` and
/// arrival direction `aoa` (both along propagation).
pub fn chain_with(
    links: &[ChainLink],
    lambda: f64,
    tx: &dyn AntennaPattern,
    rx: &dyn AntennaPattern,
    aod: &Vec3,
    aoa: &Vec3,
) -> Result<PathGain> {
    if links.is_empty() {
        return Err(Error::invalid("chain needs at least one hop"));
    }
    let mut t = PolAmp::identity();
    let mut length = 0.0;
    for l in links {
        t = l.amp * t;
        length += l.length;
    }
    let t = t.scale(Complex::from_polar(1.0, 2.0 * PI * length / lambda));
    let gt = tx.vector(aod);
    let gr = rx.vector(aoa);
    let mut a = Complex::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            a += gr[i] * t.entry(i, j) * gt[j];
        }
    }
    Ok(PathGain {
        t,
        tau: length / C0,
        a: a * (lambda / (4.0 * PI)),
        length,
    })
}

/// One impulse-response tap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub tau: f64,
    pub amp: Complex,
}

/// Baseband impulse response at carrier `f`: taps `a_l exp(-j 2 pi f tau_l)`
/// sorted by delay, with taps within 1 ps of a tap group's first delay merged.
pub fn cir(paths: &[PathGain], f: f64) -> Result<Vec<Tap>> {
    if !(f > 0.0) {
        return Err(Error::invalid(format!("carrier frequency must be positive, got {f}")));
    }
    let mut taps: Vec<Tap> = paths
        .iter()
        .map(|p| Tap {
            tau: p.tau,
            amp: p.a * Complex::from_polar(1.0, -2.0 * PI * f * p.tau),
        })
        .collect();
    taps.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    let mut out: Vec<Tap> = Vec::with_capacity(taps.len());
    let mut head = f64::NEG_INFINITY;
    for t in taps {
        match out.last_mut() {
            Some(last) if t.tau - head <= TAP_MERGE => last.amp += t.amp,
            _ => {
                head = t.tau;
                out.push(t);
            }
        }
    }
    Ok(out)
}

/// Frequency response `H(f) = sum_l a_l exp(-j 2 pi f tau_l)`.
pub fn cfr(paths: &[PathGain], freqs: &[f64]) -> Result<Vec<Complex>> {
    if freqs.is_empty() {
        return Err(Error::invalid("empty frequency grid"));
    }
    Ok(freqs
        .iter()
        .map(|&f| {
            paths
                .iter()
                .map(|p| p.a * Complex::from_polar(1.0, -2.0 * PI * f * p.tau))
                .sum()
        })
        .collect())
}
