//! Periodic steady-state circuit simulation and harmonic-balance adjoint
//! sensitivity analysis.
//!
//! The pipeline: parse a netlist ([`netlist`]), assemble MNA matrices
//! ([`mna`]), integrate to the periodic steady state ([`transient`]), take
//! the FFT of one period and build the harmonic-balance Jacobian
//! ([`spectral`]), then compute sensitivities of a quantity of interest with
//! one adjoint solve ([`sensitivity`]).

pub mod error;
pub mod linalg;
pub mod mna;
pub mod netlist;
pub mod sensitivity;
pub mod spectral;
pub mod transient;

pub use error::{Error, Result};
pub use num_complex::Complex64;
