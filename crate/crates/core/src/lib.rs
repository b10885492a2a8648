pub mod coupling;
pub mod deeponet;
pub mod errdecomp;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod pde_data;
pub mod spectral;
mod serde_float;

pub use error::{Error, Result};
