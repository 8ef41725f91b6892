//! Dynamic Gaussian splatting world model.

pub mod action;
pub mod camera;
pub mod error;
pub mod fit;
pub mod gaussian;
pub mod image;
pub mod losses;
pub mod nn;
pub mod persistence;
pub mod raster;
pub mod synthetic;
pub mod train;
pub mod world_model;

pub use error::{Error, Result};
