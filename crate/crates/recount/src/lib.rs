//! File formats, model persistence and the command-line driver around
//! `recount-core`.

pub mod cli;
pub mod error;
pub mod model;
pub mod pack_io;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
