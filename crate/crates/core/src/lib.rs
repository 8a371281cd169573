pub mod error;
pub mod ivp;
pub mod model;
mod ode;
pub mod shoot;
pub mod curve;
pub mod linearized;
pub mod transform;
pub mod cli;
mod roots;

pub use error::{Error, Result};
