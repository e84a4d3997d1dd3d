//! Uniform wedge diffraction coefficients and their special functions.

use std::f64::consts::PI;

use super::Complex;

const SERIES_LIMIT: f64 = 1.5;

/// Fresnel integrals `C(x) = int_0^x cos(pi t^2 / 2) dt` and the matching `S(x)`.
pub fn fresnel_cs(x: f64) -> (f64, f64) {
    let ax = x.abs();
    let (c, s) = if ax < SERIES_LIMIT {
        series(ax)
    } else {
        let tail = tail_cf(ax);
        (0.5 - tail.re, 0.5 - tail.im)
    };
    if x < 0.0 {
        (-c, -s)
    } else {
        (c, s)
    }
}

fn series(x: f64) -> (f64, f64) {
    let w = PI * x * x / 2.0;
    let (mut c, mut s) = (0.0, 0.0);
    let mut pow = x;
    for k in 0..200usize {
        if k > 0 {
            pow *= w / k as f64;
        }
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let term = sign * pow / (2 * k + 1) as f64;
        if k % 2 == 0 {
            c += term;
        } else {
            s += term;
        }
        if pow < 1e-18 * (c.abs() + s.abs()) {
            break;
        }
    }
    (c, s)
}

/// `(1/2 - C(x)) + i (1/2 - S(x))` for `x >= 1.5`, by a continued fraction
/// evaluated with the modified Lentz method.
fn tail_cf(x: f64) -> Complex {
    let one = Complex::new(1.0, 0.0);
    let tiny = 1e-300;
    let pix2 = PI * x * x;
    let mut b = Complex::new(1.0, -pix2);
    let mut cc = Complex::new(1.0 / tiny, 0.0);
    let mut d = one / b;
    let mut h = d;
    let mut n = -1.0;
    for _ in 2..500 {
        n += 2.0;
        let a = -n * (n + 1.0);
        b += Complex::new(4.0, 0.0);
        d = one / (d * a + b);
        cc = b + Complex::new(a, 0.0) / cc;
        let del = cc * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < 1e-16 {
            break;
        }
    }
    let h = Complex::new(x, -x) * h;
    Complex::new(0.5, 0.5) * Complex::from_polar(1.0, pix2 / 2.0) * h
}

/// `int_u^inf exp(-j t^2) dt` for `u >= 0`.
pub fn fresnel_tail(u: f64) -> Complex {
    let scale = (PI / 2.0).sqrt();
    let z = u / scale;
    let t = if z < SERIES_LIMIT {
        let (c, s) = series(z);
        Complex::new(0.5 - c, 0.5 - s)
    } else {
        tail_cf(z)
    };
    t.conj() * scale
}

/// Transition function `F(x) = 2 j sqrt(x) exp(j x) int_sqrt(x)^inf exp(-j t^2) dt`.
///
/// `F(0) = 0` and `F(x) -> 1` as `x -> inf`.
pub fn transition(x: f64) -> Complex {
    if x <= 0.0 {
        return Complex::new(0.0, 0.0);
    }
    let r = x.sqrt();
    Complex::new(0.0, 2.0 * r) * Complex::from_polar(1.0, x) * fresnel_tail(r)
}

/// One `cot((pi + sign*beta) / 2n) F(k L a(beta))` term. Within `1e-7` of its
/// shadow or reflection boundary the product is replaced by its finite limit.
fn cot_term(sign: f64, beta: f64, n: f64, kl: f64) -> Complex {
    let nn = ((beta + sign * PI) / (2.0 * PI * n)).round();
    let eps = PI + sign * beta - sign * 2.0 * PI * n * nn;
    let j4 = Complex::from_polar(1.0, PI / 4.0);
    if eps.abs() < 1e-7 {
        let sgn = if eps < 0.0 { -1.0 } else { 1.0 };
        return (Complex::new((2.0 * PI * kl).sqrt() * sgn, 0.0) - j4 * (2.0 * kl * eps)) * j4 * n;
    }
    let a = 2.0 * ((2.0 * PI * n * nn - beta) / 2.0).cos().powi(2);
    let cot = 1.0 / ((PI + sign * beta) / (2.0 * n)).tan();
    transition(kl * a) * cot
}

/// Inputs of a wedge diffraction coefficient evaluation.
#[derive(Debug, Clone, Copy)]
pub struct WedgeParams {
    /// Exterior wedge factor.
    pub n: f64,
    /// Observation azimuth from face 0.
    pub phi: f64,
    /// Source azimuth from face 0.
    pub phi_p: f64,
    pub sin_beta0: f64,
    /// Wavenumber.
    pub k: f64,
    /// Distance parameter.
    pub l: f64,
}

/// Soft and hard diffraction coefficients `(D_s, D_h)`.
///
/// `r0` and `rn` are the `(soft, hard)` reflection factors of face 0 and
/// face n; a perfect conductor has `(-1, +1)` on both faces.
pub fn wedge_coefficients(p: &WedgeParams, r0: (Complex, Complex), rn: (Complex, Complex)) -> (Complex, Complex) {
    let kl = p.k * p.l;
    let bm = p.phi - p.phi_p;
    let bp = p.phi + p.phi_p;
    let t1 = cot_term(1.0, bm, p.n, kl);
    let t2 = cot_term(-1.0, bm, p.n, kl);
    let t3 = cot_term(-1.0, bp, p.n, kl);
    let t4 = cot_term(1.0, bp, p.n, kl);
    let pre = -Complex::from_polar(1.0, -PI / 4.0)
        / (2.0 * p.n * (2.0 * PI * p.k).sqrt() * p.sin_beta0);
    let ds = pre * (t1 + t2 + r0.0 * t3 + rn.0 * t4);
    let dh = pre * (t1 + t2 + r0.1 * t3 + rn.1 * t4);
    (ds, dh)
}
