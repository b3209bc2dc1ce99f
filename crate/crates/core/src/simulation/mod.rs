//! Simulated mixed-frequency data and the Monte Carlo comparison protocol.

mod dgp;
mod montecarlo;

pub use dgp::{gen_dgp, DgpConfig, OracleForecaster, XProcess};
pub use montecarlo::{
    default_hyper_table, midas_spec_search, run_monte_carlo, run_monte_carlo_with, EstimatorSpec,
    HyperEntry, McEntry, McExperiment, McResults, McRow, MidasSearch, MidasSpecChoice,
};
