//! File formats, experiment configuration and pipeline orchestration on top
//! of [`sesscmf_core`].

pub mod config;
pub mod error;
pub mod formats;
pub mod ingest;
pub mod pipeline;

pub use config::{CoocMode, ExperimentConfig, Marginals, Method};
pub use error::{Error, Result};
pub use ingest::{FormatSpec, TimeFormat};
