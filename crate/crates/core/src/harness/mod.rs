//! Scenario configuration, seeded execution, sweeps, knob searches and CSV output.

pub mod output;
pub mod run;
pub mod scenario;
pub mod search;
pub mod sweep;

pub use output::{write_csv, CsvRow, CSV_HEADER};
pub use run::{run_point, run_seed, PointResult, SeedResult};
pub use scenario::{Metric, Profile, RunConfig, Scenario, ScenarioConfig, StrategyConfig};
pub use search::{search, Knob, SearchConfig, SearchOutcome};
pub use sweep::{run_sweep, set_path, Axis, SweepConfig, SweepOutcome};
