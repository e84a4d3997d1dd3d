use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

pub type Complex = num_complex::Complex64;

/// 2x2 complex field-transfer matrix of one hop (or of a whole path).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolAmp(pub Matrix2<Complex>);

impl PolAmp {
    pub fn identity() -> Self {
        PolAmp(Matrix2::identity())
    }

    pub fn zero() -> Self {
        PolAmp(Matrix2::zeros())
    }

    pub fn diag(a: Complex, b: Complex) -> Self {
        PolAmp(Matrix2::new(a, Complex::new(0.0, 0.0), Complex::new(0.0, 0.0), b))
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        PolAmp(Matrix2::new(
            Complex::new(m[0][0], 0.0),
            Complex::new(m[0][1], 0.0),
            Complex::new(m[1][0], 0.0),
            Complex::new(m[1][1], 0.0),
        ))
    }

    pub fn scale(&self, s: Complex) -> Self {
        PolAmp(self.0 * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        PolAmp(self.0 * Complex::new(s, 0.0))
    }

    /// `self * rhs`, i.e. `rhs` acts first.
    pub fn then_after(&self, rhs: &PolAmp) -> Self {
        PolAmp(self.0 * rhs.0)
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex {
        self.0[(r, c)]
    }

    /// Squared Frobenius norm, used as the scalar power of a hop.
    pub fn power(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest singular value.
    pub fn max_singular(&self) -> f64 {
        let fro2 = self.power();
        let det = self.0[(0, 0)] * self.0[(1, 1)] - self.0[(0, 1)] * self.0[(1, 0)];
        let disc = (fro2 * fro2 - 4.0 * det.norm_sqr()).max(0.0);
        ((fro2 + disc.sqrt()) / 2.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Row-major real/imaginary layout `(r11, i11, r12, i12, r21, i21, r22, i22)`.
    pub fn to_reals(&self) -> [f64; 8] {
        let m = &self.0;
        [
            m[(0, 0)].re,
            m[(0, 0)].im,
            m[(0, 1)].re,
            m[(0, 1)].im,
            m[(1, 0)].re,
            m[(1, 0)].im,
            m[(1, 1)].re,
            m[(1, 1)].im,
        ]
    }

    pub fn from_reals(v: &[f64]) -> Self {
        PolAmp(Matrix2::new(
            Complex::new(v[0], v[1]),
            Complex::new(v[2], v[3]),
            Complex::new(v[4], v[5]),
            Complex::new(v[6], v[7]),
        ))
    }
}

impl std::ops::Mul for PolAmp {
    type Output = PolAmp;
    fn mul(self, rhs: PolAmp) -> PolAmp {
        PolAmp(self.0 * rhs.0)
    }
}

impl Serialize for PolAmp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_reals().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolAmp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[f64; 8]>::deserialize(d)?;
        Ok(PolAmp::from_reals(&v))
    }
}
