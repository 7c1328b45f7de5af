pub mod cli;
pub mod corrupt;
pub mod dataset;
pub mod error;
pub mod glc;
pub mod geometry;
pub mod io;
pub mod pls;
pub mod quality;
pub mod rcc;
pub mod rcf;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
