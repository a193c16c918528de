//! Mimetic finite-difference discretization of the linear anisotropic Maxwell
//! system on voxel domains, with a perfectly conducting boundary part and an
//! impedance feedback part.

pub mod dense;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod krylov;
pub mod materials;
pub mod model;
pub mod operators;
pub mod sparse;
pub mod spectral;
pub mod statics;

pub use error::{Error, Result};
