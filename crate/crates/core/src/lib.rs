//! Simulation and analysis engines for single-photon extraction from a dipole
//! emitter inside a monolithic parabolic reflector.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fabsim;
pub mod fdtd;
pub mod geo_optics;
pub mod photometry;
