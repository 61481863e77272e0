//! Simulation harness: configuration, trials, risk evaluation and CSV output.

pub mod config;
pub mod envfile;
pub mod output;
pub mod run;

pub use config::{LambdaGrid, Method, RiskRoute, Scenario, SimConfig};
pub use envfile::{read_env, write_env};
pub use output::write_outputs;
pub use run::{
    excess_risk_empirical, excess_risk_population, run_simulation, run_trial, MethodCell, ResultsTable, SummaryRow,
    TrialResult,
};
