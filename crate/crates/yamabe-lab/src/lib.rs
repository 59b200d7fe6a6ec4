//! Numerical laboratory for the boundary Yamabe problem on radial annuli.
//!
//! Solves −aΔ_g u + R_g u = λu^{p−1} in M, ∂u/∂ν + (2/(p−2))h_g u = (2/(p−2))ζu^{p/2}
//! on ∂M by monotone iteration between validated barriers, with the
//! τ → 0⁻ continuation for the positive eigenvalue class.

pub mod barriers;
pub mod geometry;
pub mod linalg;
pub mod operators;
pub mod solver;
pub mod spectral;
