//! Particle creation by a time-dependent rotating acoustic black hole in 2+1 dimensions.

pub mod error;
pub mod fit;
pub mod flow;
pub mod ode;
pub mod packet;
pub mod quad;
pub mod remainder;
pub mod special;
pub mod spectrum;
pub mod wave;

pub use error::{Error, Result};
