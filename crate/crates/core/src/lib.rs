//! Desk-scale humanoid parkour training pipeline.

pub mod curriculum;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod geom;
pub mod io_util;
pub mod learning;
pub mod neural;
pub mod orchestration;
pub mod perception;
pub mod rewards;
pub mod terrain;

pub use error::{Error, Result};
