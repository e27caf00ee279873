//! File formats, model store, batch runner and command-line interface around
//! `enspost-core`.

pub mod cli;
pub mod io;
pub mod report;
pub mod runner;
pub mod store;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("parse error: {0}")]
    Parse(String),
}
