//! Time-discrete approximation of single-interface solutions of the bilinear
//! forward-backward diffusion equation.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod fluctuations;
pub mod kernels;
pub mod profile;
pub mod quadrature;
pub mod scheme;
pub mod state;

pub use error::{Error, Result};
