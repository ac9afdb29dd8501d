pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod homogenize;
pub mod mesh;
pub mod pressure;
pub mod stepper;

pub use error::{Error, Result};
