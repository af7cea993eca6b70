//! Scenario configs, runs, and the bundled scenario set.

pub mod bundled;
pub mod config;
pub mod run;

pub use bundled::{bundled, bundled_names, BundledScenario};
pub use config::{
    load_config, parse_config, schema, ConfigIssue, ModuleKind, ModuleParams, OutputFormat, OutputSpec, ScenarioConfig,
};
pub use run::{run_scenario, run_twice, Reproducibility, RunError, RunReport, TOOLKIT_VERSION};
