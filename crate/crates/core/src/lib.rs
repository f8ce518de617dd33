pub mod barycenter;
pub mod classify;
pub mod embedding;
pub mod error;
pub mod io;
pub mod measures;
pub mod pipeline;
pub mod reduction;
pub mod rng;
pub mod transport;

pub use error::{LotError, Notice, Result};
