pub mod cz_operator;
pub mod domination;
pub mod dyadic_grid;
pub mod error;
pub mod field_io;
pub mod generate;
pub mod lerner;
pub mod oscillation;
pub mod rational;
pub mod sampled_field;
pub mod shift_ops;
pub mod weights;

pub use error::{Error, Result};
