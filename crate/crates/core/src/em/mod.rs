//! Polarimetric field computations.
//!
//! Each propagation hop is described by a 2x2 complex matrix ([`PolAmp`])
//! acting on the two transverse field components expressed in a polarization
//! basis attached to the propagation direction. Hops are chained by matrix
//! products into a path transfer matrix, from which the complex path
//! amplitude, the impulse response and the frequency response follow.

mod basis;
mod chain;
mod diffraction;
mod fresnel;
mod interaction;
mod material;
mod polamp;
pub mod utd;

pub use basis::{basis_transform, polarization_basis, InteractionFrame, PolBasis};
pub use chain::{cfr, chain, chain_with, cir, AntennaPattern, ChainLink, Isotropic, PathGain, Tap, TAP_MERGE};
pub use diffraction::{
    diffraction_amplitude, diffraction_local, diffraction_spreading, keller_cone_dirs, EdgeGeometry,
};
pub use fresnel::fresnel;
pub use interaction::{
    lambertian, reflect_dir, reflection_amplitude, reflection_local, scatter_amplitude,
    scatter_local, spherical_continuation, spreading_factor, Spreading,
};
pub(crate) use interaction::launch_amplitude;
pub use material::{Material, MaterialTable, DEFAULT_TABLE};
pub use polamp::{Complex, PolAmp};

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;

pub fn wavelength(freq: f64) -> f64 {
    C0 / freq
}

/// Propagation phase factor `exp(-j 2 pi d / lambda)`.
pub fn phase(d: f64, lambda: f64) -> Complex {
    Complex::from_polar(1.0, -2.0 * std::f64::consts::PI * d / lambda)
}
