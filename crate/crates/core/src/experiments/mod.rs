//! Scenario configuration, orchestration of the paper scenarios and the
//! report artifacts.

pub mod bands;
pub mod config;
pub mod report;
pub mod run;
pub mod sampler;

pub use bands::{density_summary, Bands, DensitySummary};
pub use config::{Case, CostKind, EstimatorKind, QoiRule, ScenarioConfig, Uncertainty};
pub use report::{content_hash, rates_from_levels_csv, rates_table, PointResult, RunReport, RunStatus, ScreenRecord};
pub use run::{frequency_sweep, run_scenario, RunOptions};
pub use sampler::{BeamModel, BeamSampler, Observable};
