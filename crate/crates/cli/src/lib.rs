//! Library side of the `numqa` binary, so tests can drive the commands
//! without spawning processes.

pub mod error;
pub mod ingest_cmd;
pub mod mock_script;
pub mod replay_cmd;
pub mod report_cmd;
pub mod run;
pub mod slice;

pub use error::{Category, CliError, CliResult};
pub use run::{cmd_run, BackendChoice, RunConfig, RunOutcome};
