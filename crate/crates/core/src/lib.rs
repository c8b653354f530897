//! Simulation of a text model and an image model trained on each other's
//! generated data, with the closed-form rates and floors that govern their
//! collapse and the experiment harness that reproduces them.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod report;
pub mod sampling;
pub mod theory;

pub use error::{Error, Result};
