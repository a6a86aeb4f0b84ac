pub mod cli;
pub mod error;
pub mod field;
pub mod heleshaw;
pub mod jko;
pub mod modulus;
pub mod newtonian;
pub mod pme;
pub mod series;
pub mod shape;
pub mod shapes;

pub use error::{Error, Result};

/// Supports must stay this many cells away from the box edge.
pub const SUPPORT_MARGIN: usize = 4;
