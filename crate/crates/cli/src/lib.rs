//! Command-line front end and benchmark harness for light field
//! reconstruction.
//!
//! [`suites`] renders synthetic datasets with dense ground truth, [`bench`]
//! scores pipelines on them, and [`cli`] wires every tool into the `lfaa`
//! binary.

pub mod bench;
pub mod cli;
pub mod suites;

pub use bench::{benchmark, BenchConfig, BenchRow, MetricReport, Pipeline};
pub use cli::{main_with_args, run, Cli, CliError};
pub use suites::{Case, CaseInfo, Suite};

pub type LightField = lfaa_core::LightField64;
