//! Scenario ingestion, trajectory persistence and plot emission.

mod plot;
mod trajectory;

use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::{Scenario, ScenarioFile};

pub use plot::{emit_plots, LinePlot, Series};
pub use trajectory::{
    format_f64, read_ledger_csv, read_trajectory, write_trajectory, LedgerRow, SnapshotRecord,
    TrajectoryFile, TrajectoryWriter, CSV_COLUMNS, SCHEMA_VERSION,
};

/// Reads and validates a scenario document, reporting every problem found.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario_str(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses and validates a scenario from JSON text.
pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("malformed scenario: {e}")))?;
    Ok(file.validate()?)
}

/// Writes a scenario back to JSON in its document form.
pub fn write_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&scenario.to_file()).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
