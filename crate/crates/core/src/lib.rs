//! Virtual-battery modeling of thermostatic load fleets.
//!
//! A fleet of thermostatically controlled loads (fridges, water heaters,
//! heat pumps) can shift its aggregate consumption for a while without
//! leaving anyone's comfort band, which makes it tradable as a battery-like
//! flexibility resource. This crate provides:
//!
//! * a discrete-time thermal model of individual loads and heterogeneous
//!   populations ([`thermal`]);
//! * per-step aggregation of fleet state into battery-style headroom
//!   figures ([`vb`]);
//! * a priority-dispatch controller that tracks a power target while
//!   thermostats keep their veto ([`controller`]);
//! * Monte-Carlo certification of how much power a fleet can promise at a
//!   chosen confidence, via all-success trial batches and bisection
//!   ([`predict`], [`scenario`]);
//! * balancing-market bid handling and end-to-end scenario runs
//!   ([`market`]);
//! * typical-year weather input ([`weather`]), TOML run configuration with
//!   reproducibility manifests ([`config`]), and CSV/JSON output
//!   ([`report`]).
//!
//! Every stochastic path descends from one master seed through labeled
//! derivation lanes ([`rng`]), so identical inputs reproduce identical
//! outputs bit for bit, independent of thread count.

pub mod config;
pub mod controller;
pub mod error;
pub mod market;
pub mod predict;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod thermal;
pub mod vb;
pub mod weather;

#[cfg(test)]
mod fixtures;

pub use config::{ConfigContext, Manifest, ManifestMeta, PrePeriod, RunConfig, SimulationPlan};
pub use controller::{
    disaggregate, run_horizon, Candidate, ControlConfig, ControlTrace, HorizonSummary, Selection,
    StepDecision, TraceRow,
};
pub use error::{Error, Result};
pub use market::{
    direction_for_power, quantize_bid_kw, run_scenario, validate_bid, Bid, BidDirection,
    BidValidity, MarketProduct, RejectReason, ScenarioOutcome, ScenarioSpec,
};
pub use predict::{
    credible_interval, posterior_map, probability_curve, run_trials, search_certified_power,
    BisectionConfig, ConfidenceSpec, CurvePoint, EarlyStop, IterationRecord, PredictionResult,
    SearchMode, TrialBatch, TrialOracle,
};
pub use rng::{derive_seed, rng_from_seed};
pub use scenario::TrialScenario;
pub use thermal::{
    availability, decay_factor, generate_population, time_to_boundary, AmbientSchedule,
    Availability, Device, DeviceType, DisturbanceModel, GroupAmbient, Population, PopulationGroup,
    PopulationSpec, TclParams, TclState,
};
pub use vb::{aggregate, electrical_power, StepSurvey, VbSnapshot};
pub use weather::{load_tmy_csv, parse_tmy_csv, AmbientSeries};
