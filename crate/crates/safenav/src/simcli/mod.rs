//! Scenario files, closed-loop runs and their artifacts.

pub mod output;
pub mod run;
pub mod scenario;

pub use output::emit_outputs;
pub use run::{run_scenario, Artifacts, RunMetrics, RunOutput, TrackSample};
pub use scenario::{load_scenario, parse_scenario, read_scenario, Mode, Scenario};
