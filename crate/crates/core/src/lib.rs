pub mod cli;
pub mod env;
pub mod gaussian;
pub mod genealogy;
pub mod error;
pub mod growth;
pub mod model;
pub mod optimize;
pub mod rng;
pub mod serde_rate;
pub mod simulate;

pub use error::{Error, Result};
