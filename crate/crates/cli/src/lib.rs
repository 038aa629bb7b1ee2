//! REST service and command-line front end of the steerable LSH engine.

pub mod api;
pub mod cli;
pub mod error;
pub mod store;

pub use error::ApiError;
