//! Domain types, random scenario generation and exact evaluation of the
//! communication, computation and power model.

mod channels;
mod config;
mod evaluate;
mod rates;

pub use channels::{composite_channels, gen_scenario, ChannelSet, Composite, IrsConfig};
pub use config::{db_to_linear, dbm_to_watts, watts_to_dbm, DtState, PathLossExponents, SystemConfig, Topology};
pub use evaluate::{apply_uniform_forcing, evaluate, evaluate_no_dt, Decision, Feasibility, RateReport};
pub use rates::{
    aircomp_mse, aircomp_rate, es_cs_rate, local_rate, offload_rates, uniform_forcing, water_filling_covariance,
    OffloadRates, UniformForcing,
};

/// Absolute tolerance on power constraints (W).
pub const POWER_TOL: f64 = 1e-9;
/// Absolute tolerance on time constraints (s).
pub const TIME_TOL: f64 = 1e-9;
