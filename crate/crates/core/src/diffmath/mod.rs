//! Reverse-mode differentiation and first-order optimization.

mod adam;
pub mod rotation;
mod sparse;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use sparse::SparseMatrix;
pub use tape::{row, Gradients, Tape, Var};
