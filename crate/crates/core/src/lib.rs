//! Non-completely-positive dynamical maps of open quantum systems.

pub mod access;
pub mod affine;
pub mod apps;
pub mod channel;
pub mod error;
pub mod fano;
pub mod json;
pub mod linalg;
pub mod perturb;
pub mod random;
pub mod tomo;

pub use error::{Error, Result};
