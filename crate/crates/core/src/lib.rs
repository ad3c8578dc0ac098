pub mod bem;
pub mod cli;
pub mod config;
pub mod deformation;
pub mod error;
pub mod geometry;
pub mod homogenization;
pub mod kernel;
pub mod optimizer;
pub mod output;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
