//! Transparent boundary conditions for the 1D time-dependent Schrödinger
//! equation with a spatially uniform vector potential.

pub mod compression;
pub mod boundary;
pub mod config;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod output;
pub mod quadrature;
pub mod reference;
pub mod solver;
mod trig;
pub mod vector_potential;

pub use error::{Error, FormatError, Result};
pub use num_complex::Complex64 as C64;
