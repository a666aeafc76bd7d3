//! Interchange formats, scenarios and plot-data emission for the
//! `currents` command line tool.

pub mod error;
pub mod format;
pub mod plotdata;
pub mod run;
pub mod scenario;

pub use error::{CliError, Result};
pub use format::{parse_current, read_current, serialize_current, CurrentDoc, CurrentFile};
pub use plotdata::emit_plotdata;
pub use run::{run_scenario, Check, OpRecord, ReportBundle, Status};
pub use scenario::{parse_scenario, read_scenario, Scenario};

/// Thread count requested through `CURRENTS_THREADS`; `0` or unset means
/// automatic.
pub fn requested_threads() -> Result<usize> {
    match std::env::var("CURRENTS_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("CURRENTS_THREADS must be a non-negative integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}
