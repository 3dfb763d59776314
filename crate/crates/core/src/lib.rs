//! Phase-field training of implicit neural representations from raw point clouds.
//!
//! The crate is organised around the data flow of a reconstruction:
//!
//! - [`geometry`]: point-cloud ingestion, normalisation, the container box and samplers.
//! - [`field`]: the MLP scalar field with Fourier encoding, geometric initialisation and
//!   the gradient engine that differentiates losses containing the spatial gradient.
//! - [`loss`]: the double-well potential and every term of the training objective.
//! - [`transform`]: the log transform from phase density to a viscous signed distance.
//! - [`oracle`]: network-free closed forms and grid solvers used to check limit behaviour.
//! - [`extract`]: zero level-set extraction (marching squares / cubes) and measurement.
//! - [`metrics`]: Chamfer and Hausdorff distances with an exact kd-tree.
//! - [`trainer`]: Adam and the stochastic training loop.
//! - [`cli`]: the `phase` command-line front end.

pub mod config;
pub mod cli;
pub mod error;
pub mod extract;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod oracle;
pub mod render;
pub mod trainer;
pub mod transform;

pub use error::{Error, Result};
