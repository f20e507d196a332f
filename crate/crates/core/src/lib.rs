//! Simulation and reconstruction toolkit for circular confocal
//! non-line-of-sight imaging.

pub mod error;
pub mod fft;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod localize;
pub mod metrics;
pub mod radon2d;
pub mod recon3d;

pub use error::{Error, Result};
