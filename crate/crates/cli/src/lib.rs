//! Scenario runner: configuration, orchestration of the four
//! representations, reports and plot output.

pub mod config;
pub mod error;
pub mod output;
pub mod plots;
pub mod report;
pub mod scenario;

pub use config::{parse_config, parse_config_str, Overrides, Scenario, ScenarioConfig};
pub use error::{exit, HarnessError};
pub use output::execute;
pub use plots::emit_plots;
pub use report::ComparisonReport;
pub use scenario::run_scenario;
