//! Pseudo-spectral laboratory for the renormalized KPZ equation on the torus.

pub mod dyadic;
pub mod enhancement;
pub mod error;
pub mod experiment;
pub mod noise;
pub mod par;
pub mod path;
pub mod solvers;
pub mod quad;
pub mod renorm;
pub mod selftest;
pub mod spectral;

pub use error::{Error, Result};
