//! Scenario files, snapshots, reports and experiment drivers for the
//! `mimax` command-line tool.

pub mod error;
pub mod report;
pub mod run;
pub mod scenario;
pub mod snapshot;

pub use error::RunError;
pub use run::{run_experiment, RunOptions, RunOutcome};
pub use scenario::{load_scenario, ExperimentKind, Scenario};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot, Species};
