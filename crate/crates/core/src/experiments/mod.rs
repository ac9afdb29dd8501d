//! Configuration, persistence formats and the scenarios built on the solver.

pub mod config;
pub mod initial;
pub mod mms;
pub mod scenarios;
pub mod snapshot;
pub mod verify;

pub use config::{InitialKind, RunConfig, Scenario, ScenarioOptions};
pub use scenarios::{run_scenario, simulate, Check, Outcome, Output, Report, Trajectory};
pub use snapshot::Snapshot;
