pub mod compose;
pub mod diffmath;
pub mod error;
pub mod fitting;
pub mod handmodel;
pub mod image;
pub mod metrics;
pub mod occlusion;
pub mod prior;
pub mod seed;
pub mod spectrum;

pub use error::{Error, Result};
