//! Phase-field brittle fracture on Finite Cell multi-level hp meshes, plus
//! crack-surface evaluation (failure loads, initiation angles, Hausdorff
//! distances) for the inclined V-notch four-point bending benchmark.

pub mod basis;
pub mod error;
pub mod fcm;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod postprocess;
pub mod setup;
pub mod solver;

pub use error::{Error, Result};
