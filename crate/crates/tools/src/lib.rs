//! File formats, experiment drivers and verification for `tnn-core`, plus the
//! library side of the `tnn` command-line tool.

pub mod config;
mod error;
pub mod experiments;
pub mod formats;
pub mod idx;
pub mod output;
pub mod verify;

pub use config::{Command, DataSource, RankSetting, RunConfig};
pub use error::{Result, ToolError};
pub use output::{replay, run, RunOutcome};
