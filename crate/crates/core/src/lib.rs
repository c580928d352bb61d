pub mod camera;
pub mod conditioning;
pub mod config;
pub mod datapipe;
pub mod diffusion;
pub mod digest;
pub mod encoders;
pub mod error;
pub mod experiment;
pub mod eval;
mod nn;
pub mod service;
pub mod world;

pub use error::{Error, Result};
