//! Parameter sweeps over the hybrid computing optimizer: scenario presets,
//! a parallel runner, CSV result files and per-point aggregation.

pub mod config;
pub mod error;
pub mod runner;
pub mod scenario;
pub mod table;

pub use config::ExpConfig;
pub use error::{Error, Result};
pub use runner::{provenance, run_scenario, RunOptions};
pub use scenario::{Scenario, ScenarioKind, Scheme, Sweep};
pub use table::{aggregate, aggregate_file, read_results, write_results, ResultRow, Status, SummaryRow};
