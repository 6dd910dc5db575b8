//! Verification of multimode bosonic states from homodyne and heterodyne data.
//!
//! States live in a truncated Fock space (row-major multi-index, mode 0
//! slowest). Conventions: ħ = 1, q = (a + a†)/√2, X_θ = q cos θ + p sin θ.
//!
//! The crate is organised bottom-up:
//! - [`special`]: Hermite functions, oscillator series, Laguerre polynomials
//! - [`fock`]: core states, density operators, partial traces, fidelities
//! - [`gaussian`]: displacement, squeezing, passive lifts, loss
//! - [`measure`]: homodyne/heterodyne densities and samplers
//! - [`estimators`]: pattern functions and regularized P-function estimators
//! - [`witness`]: k-mode fidelity witnesses
//! - [`backprop`]: classical post-processing of Gaussian layers
//! - [`protocols`]: end-to-end estimation and sample planning
//! - [`oracle`]: quadrature references used to check everything above
//! - [`experiments`]: the lossy boson-sampling and beamsplitter studies

pub mod backprop;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod fock;
pub mod gaussian;
pub mod measure;
pub mod oracle;
pub mod protocols;
pub mod special;
pub mod witness;

mod par;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Shorthand for complex literals.
#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
