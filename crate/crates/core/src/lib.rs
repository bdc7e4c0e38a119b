pub mod chaos;
pub mod covariance;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod nodal_stats;
pub mod special_fn;
pub mod stats;
pub mod synthesis;
pub mod variance_engine;

pub use error::{Error, Result};
