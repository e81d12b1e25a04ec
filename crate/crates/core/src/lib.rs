pub mod error;
pub mod experiments;
pub mod field_radius;
pub mod gibbs;
pub mod girsanov;
pub mod localtime;
pub mod mode_dynamics;
pub mod quad;
pub mod rng;
pub mod spectrum;
pub mod verify;

pub use error::{Error, Result};
