//! Batch driver for geometry scans of the three-state ensemble VQE.

pub mod config;
pub mod plotdata;
pub mod scan;

pub use config::ScanConfig;
pub use plotdata::{emit_plotdata, Table, FIGURES};
pub use scan::{run_scan, write_outputs, PointOutcome, ScanReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] evqe_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
