//! TOML run configuration and the reproducibility manifest.
//!
//! One file describes a complete run: the fleet (`[[population.group]]`),
//! the stepping and noise (`[run]`), and whichever of `[prediction]`,
//! `[scenario]`, and `[simulate]` the command needs. Every output
//! directory also receives a `manifest.toml` that embeds the fully
//! resolved configuration under `[config]`; feeding a manifest back in as
//! the configuration reproduces the run, because the loader unwraps that
//! table transparently.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::controller::{run_horizon, ControlConfig, ControlTrace};
use crate::error::{Error, Result};
use crate::market::{MarketProduct, ScenarioSpec};
use crate::predict::{BisectionConfig, ConfidenceSpec, SearchMode};
use crate::rng::{derive_seed, lane, rng_from_seed};
use crate::scenario::TrialScenario;
use crate::thermal::{
    generate_population, AmbientSchedule, DeviceType, DisturbanceModel, GroupAmbient, Population,
    PopulationGroup, PopulationSpec, TclParams,
};
use crate::weather::{load_tmy_csv, series_for_window, AmbientSeries};

/// Event length assumed when no `[scenario]` section is present.
pub const DEFAULT_EVENT_MINUTES: f64 = 15.0;

fn default_step_minutes() -> f64 {
    1.0
}

fn default_tau() -> u32 {
    1
}

fn default_gamma_kw() -> f64 {
    10.0
}

fn default_event_minutes() -> f64 {
    DEFAULT_EVENT_MINUTES
}

fn default_compute_minutes() -> f64 {
    5.0
}

fn default_cap_minutes() -> f64 {
    720.0
}

fn default_column() -> String {
    "T2m".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_step_minutes")]
    pub step_minutes: f64,
    /// Variance of the per-step temperature disturbance, degrees squared.
    pub disturbance_variance: f64,
    /// Master seed; a CLI override takes precedence.
    #[serde(default)]
    pub seed: u64,
}

/// A timestamp as written in TOML: either a native datetime or a string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigInstant {
    Native(toml::value::Datetime),
    Text(String),
}

const DATETIME_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
];

impl ConfigInstant {
    pub fn resolve(&self) -> Result<NaiveDateTime> {
        let text = match self {
            ConfigInstant::Native(dt) => dt.to_string(),
            ConfigInstant::Text(s) => s.clone(),
        };
        DATETIME_FORMATS
            .iter()
            .find_map(|fmt| NaiveDateTime::parse_from_str(&text, fmt).ok())
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "cannot read {text:?} as a local date-time (expected e.g. 2015-07-19T16:00)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AmbientConfig {
    Constant {
        constant_c: f64,
    },
    Tmy {
        tmy_path: PathBuf,
        #[serde(default = "default_column")]
        column: String,
        /// When set, the group ambient is pinned to the series value at
        /// this instant instead of following the series step by step.
        #[serde(default)]
        at: Option<ConfigInstant>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    pub count: usize,
    /// Thermal resistance, degrees C per kW.
    pub r_th: f64,
    /// Thermal capacitance, kWh per degree C.
    pub c_th: f64,
    /// Nominal thermal power, kW; positive extracts heat, negative injects.
    pub p_nom: f64,
    /// Coefficient of performance.
    pub cop: f64,
    pub setpoint: f64,
    pub half_band: f64,
    pub device_type: DeviceType,
    /// Short-cycle lock, steps.
    #[serde(default = "default_tau")]
    pub tau: u32,
    pub ambient: AmbientConfig,
}

impl GroupConfig {
    pub fn params(&self) -> TclParams {
        TclParams {
            r_th: self.r_th,
            c_th: self.c_th,
            p_nom: self.p_nom,
            cop: self.cop,
            setpoint: self.setpoint,
            half_band: self.half_band,
            device_type: self.device_type,
            tau: self.tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    #[serde(rename = "group")]
    pub groups: Vec<GroupConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchDirection {
    #[default]
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchBoundary {
    /// Find the largest magnitude certified to succeed.
    #[default]
    Supply,
    /// Find the smallest magnitude certified to fail.
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionSection {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default = "default_gamma_kw")]
    pub gamma_kw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_far_kw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_far_kw: Option<f64>,
    #[serde(default)]
    pub direction: SearchDirection,
    #[serde(default)]
    pub boundary: SearchBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub id: String,
    pub product: MarketProduct,
    pub delivery_start: ConfigInstant,
    #[serde(default = "default_event_minutes")]
    pub event_minutes: f64,
    /// Time reserved for running the certification itself.
    #[serde(default = "default_compute_minutes")]
    pub prediction_compute_minutes: f64,
    /// Upper limit on the simulated pre-period.
    #[serde(default = "default_cap_minutes")]
    pub pre_period_cap_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub horizon_minutes: f64,
    /// Half-open managed ranges in minutes from the horizon start.
    #[serde(default)]
    pub management_windows: Vec<(f64, f64)>,
    /// Tracking target inside the managed windows, kW.
    #[serde(default)]
    pub r_kw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_time: Option<ConfigInstant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub population: PopulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
}

impl RunConfig {
    /// Parses a configuration, accepting either a bare config or a
    /// manifest with the config embedded under `[config]`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value = text.parse()?;
        let config_value = match value.get("config") {
            Some(inner) => inner.clone(),
            None => value,
        };
        let config: RunConfig = config_value.try_into().map_err(Error::from)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.run.step_minutes.is_finite() && self.run.step_minutes > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "run.step_minutes must be positive, got {}",
                self.run.step_minutes
            )));
        }
        if !(self.run.disturbance_variance.is_finite() && self.run.disturbance_variance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "run.disturbance_variance must be non-negative, got {}",
                self.run.disturbance_variance
            )));
        }
        if self.population.groups.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one [[population.group]] is required".into(),
            ));
        }
        for group in &self.population.groups {
            if group.count == 0 {
                return Err(Error::InvalidConfig(format!(
                    "population group {:?} must have count >= 1",
                    group.name
                )));
            }
            group.params().validate().map_err(|e| {
                Error::InvalidConfig(format!("population group {:?}: {e}", group.name))
            })?;
        }
        if let Some(pred) = &self.prediction {
            ConfidenceSpec {
                epsilon: pred.epsilon,
                delta: pred.delta,
            }
            .validate()?;
            if !(pred.gamma_kw.is_finite() && pred.gamma_kw > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "prediction.gamma_kw must be positive, got {}",
                    pred.gamma_kw
                )));
            }
            if let Some(far) = pred.positive_far_kw {
                if !(far.is_finite() && far > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "prediction.positive_far_kw must be positive, got {far}"
                    )));
                }
            }
            if let Some(far) = pred.negative_far_kw {
                if !(far.is_finite() && far < 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "prediction.negative_far_kw must be negative, got {far}"
                    )));
                }
            }
        }
        if let Some(scenario) = &self.scenario {
            scenario.delivery_start.resolve()?;
            if !(scenario.event_minutes.is_finite() && scenario.event_minutes > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "scenario.event_minutes must be positive, got {}",
                    scenario.event_minutes
                )));
            }
            if !(scenario.prediction_compute_minutes.is_finite()
                && scenario.prediction_compute_minutes >= 0.0)
            {
                return Err(Error::InvalidConfig(format!(
                    "scenario.prediction_compute_minutes must be non-negative, got {}",
                    scenario.prediction_compute_minutes
                )));
            }
            if !(scenario.pre_period_cap_minutes.is_finite()
                && scenario.pre_period_cap_minutes >= 0.0)
            {
                return Err(Error::InvalidConfig(format!(
                    "scenario.pre_period_cap_minutes must be non-negative, got {}",
                    scenario.pre_period_cap_minutes
                )));
            }
        }
        if let Some(sim) = &self.simulate {
            if !(sim.horizon_minutes.is_finite() && sim.horizon_minutes > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "simulate.horizon_minutes must be positive, got {}",
                    sim.horizon_minutes
                )));
            }
            if let Some(start) = &sim.start_time {
                start.resolve()?;
            }
        }
        Ok(())
    }

    pub fn step_hours(&self) -> f64 {
        self.run.step_minutes / 60.0
    }

    /// Converts a duration in minutes into whole steps; the duration must
    /// be an integer multiple of the step.
    pub fn minutes_to_steps(&self, minutes: f64) -> Result<usize> {
        let exact = minutes / self.run.step_minutes;
        let steps = exact.round();
        if (exact - steps).abs() > 1e-9 || steps < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "{minutes} minutes is not a whole number of {}-minute steps",
                self.run.step_minutes
            )));
        }
        Ok(steps as usize)
    }
}

/// How the scenario pre-period was assembled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrePeriod {
    /// Market notice between gate closure and delivery, minutes.
    pub lead_minutes: f64,
    /// Certification compute allowance, minutes.
    pub compute_minutes: f64,
    /// Lead plus compute, before the cap.
    pub requested_minutes: f64,
    /// Minutes actually simulated ahead of the event.
    pub applied_minutes: f64,
    pub capped: bool,
}

/// Everything needed for one `simulate` run.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub r_schedule: Vec<f64>,
    pub control: ControlConfig,
    pub ambient: AmbientSchedule,
    pub disturbance: DisturbanceModel,
    pub start_time: Option<NaiveDateTime>,
}

/// A validated configuration with its file-relative resources loaded.
#[derive(Debug, Clone)]
pub struct ConfigContext {
    config: RunConfig,
    base_dir: PathBuf,
    series: HashMap<PathBuf, AmbientSeries>,
}

impl ConfigContext {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Self::from_str_with_base(&text, &base_dir)
    }

    /// Builds a context from TOML text, resolving relative paths against
    /// `base_dir`, and loads every referenced weather file once.
    pub fn from_str_with_base(text: &str, base_dir: &Path) -> Result<Self> {
        let config = RunConfig::from_toml_str(text)?;
        let mut series = HashMap::new();
        for group in &config.population.groups {
            if let AmbientConfig::Tmy {
                tmy_path, column, ..
            } = &group.ambient
            {
                let resolved = resolve_path(base_dir, tmy_path);
                if !series.contains_key(&resolved) {
                    let loaded = load_tmy_csv(&resolved, column)?;
                    series.insert(resolved, loaded);
                }
            }
        }
        Ok(Self {
            config,
            base_dir: base_dir.to_path_buf(),
            series,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn disturbance(&self) -> DisturbanceModel {
        DisturbanceModel {
            variance: self.config.run.disturbance_variance,
        }
    }

    pub fn population_groups(&self) -> Vec<PopulationGroup> {
        self.config
            .population
            .groups
            .iter()
            .map(|g| PopulationGroup {
                params: g.params(),
                count: g.count,
            })
            .collect()
    }

    /// Samples the fleet used by `simulate`, deterministically from the
    /// master seed.
    pub fn sample_population(&self, master_seed: u64) -> Result<Population> {
        generate_population(&PopulationSpec {
            groups: self.population_groups(),
            master_seed: derive_seed(master_seed, lane::POPULATION, 0),
        })
    }

    /// Builds the per-group ambient schedule for `horizon_steps` steps
    /// beginning at `start`. Groups pinned to a constant never need the
    /// start time; typical-year groups do.
    pub fn ambient_schedule(
        &self,
        start: Option<NaiveDateTime>,
        horizon_steps: usize,
    ) -> Result<AmbientSchedule> {
        let mut groups = Vec::with_capacity(self.config.population.groups.len());
        for group in &self.config.population.groups {
            match &group.ambient {
                AmbientConfig::Constant { constant_c } => {
                    groups.push(GroupAmbient::Constant(*constant_c));
                }
                AmbientConfig::Tmy { tmy_path, at, .. } => {
                    let resolved = resolve_path(&self.base_dir, tmy_path);
                    let series = self
                        .series
                        .get(&resolved)
                        .expect("series loaded at construction");
                    if let Some(instant) = at {
                        // Pinned: one sample, held for the whole horizon.
                        let sampled = series_for_window(
                            series,
                            instant.resolve()?,
                            1,
                            self.config.run.step_minutes,
                        )?;
                        groups.push(GroupAmbient::Constant(sampled[0]));
                        continue;
                    }
                    let start = start.ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "population group {:?} reads ambient from a weather file, \
                             which needs an absolute start time (add [scenario] or \
                             simulate.start_time)",
                            group.name
                        ))
                    })?;
                    groups.push(GroupAmbient::PerStep(series_for_window(
                        series,
                        start,
                        horizon_steps,
                        self.config.run.step_minutes,
                    )?));
                }
            }
        }
        Ok(AmbientSchedule { groups })
    }

    fn prediction_section(&self) -> Result<&PredictionSection> {
        self.config.prediction.as_ref().ok_or_else(|| {
            Error::InvalidConfig("this command needs a [prediction] section".into())
        })
    }

    pub fn confidence(&self) -> Result<ConfidenceSpec> {
        let pred = self.prediction_section()?;
        Ok(ConfidenceSpec {
            epsilon: pred.epsilon,
            delta: pred.delta,
        })
    }

    pub fn bisection(&self) -> Result<BisectionConfig> {
        let pred = self.prediction_section()?;
        let b_kw = match pred.direction {
            SearchDirection::Positive => pred.positive_far_kw.ok_or_else(|| {
                Error::InvalidConfig(
                    "prediction.positive_far_kw is required for a positive-direction search"
                        .into(),
                )
            })?,
            SearchDirection::Negative => pred.negative_far_kw.ok_or_else(|| {
                Error::InvalidConfig(
                    "prediction.negative_far_kw is required for a negative-direction search"
                        .into(),
                )
            })?,
        };
        Ok(BisectionConfig {
            a_kw: 0.0,
            b_kw,
            gamma_kw: pred.gamma_kw,
            mode: match pred.boundary {
                SearchBoundary::Supply => SearchMode::GuaranteedSupply,
                SearchBoundary::Failure => SearchMode::GuaranteedFailure,
            },
        })
    }

    /// The trial scenario certified by `predict` and `curve`.
    ///
    /// With a `[scenario]` section the event is preceded by the market
    /// lead plus compute time (capped); without one, trials run an
    /// event-only window of [`DEFAULT_EVENT_MINUTES`].
    pub fn oracle_scenario(&self) -> Result<(TrialScenario, Option<PrePeriod>)> {
        match &self.config.scenario {
            Some(section) => {
                let (scenario, pre) = self.scenario_pieces(section)?;
                Ok((scenario, Some(pre)))
            }
            None => {
                let event_steps = self.config.minutes_to_steps(DEFAULT_EVENT_MINUTES)?;
                let ambient = self.ambient_schedule(None, event_steps)?;
                let scenario = TrialScenario::new(
                    self.population_groups(),
                    ambient,
                    0,
                    event_steps,
                    self.config.step_hours(),
                    self.disturbance(),
                )?;
                Ok((scenario, None))
            }
        }
    }

    fn scenario_pieces(&self, section: &ScenarioSection) -> Result<(TrialScenario, PrePeriod)> {
        let delivery_start = section.delivery_start.resolve()?;
        let lead_minutes = section.product.lead_minutes(delivery_start) as f64;
        let requested = section.prediction_compute_minutes + lead_minutes;
        let capped = requested > section.pre_period_cap_minutes;
        let applied = if capped {
            section.pre_period_cap_minutes
        } else {
            requested
        };
        let pre_steps = self.config.minutes_to_steps(applied)?;
        let event_steps = self.config.minutes_to_steps(section.event_minutes)?;
        let horizon = pre_steps + event_steps;
        let window_start = delivery_start - Duration::seconds((applied * 60.0).round() as i64);
        let ambient = self.ambient_schedule(Some(window_start), horizon)?;
        let scenario = TrialScenario::new(
            self.population_groups(),
            ambient,
            pre_steps,
            event_steps,
            self.config.step_hours(),
            self.disturbance(),
        )?;
        Ok((
            scenario,
            PrePeriod {
                lead_minutes,
                compute_minutes: section.prediction_compute_minutes,
                requested_minutes: requested,
                applied_minutes: applied,
                capped,
            },
        ))
    }

    /// The full market scenario for the `scenario` command.
    pub fn scenario_spec(&self) -> Result<(ScenarioSpec, PrePeriod)> {
        let section = self.config.scenario.as_ref().ok_or_else(|| {
            Error::InvalidConfig("this command needs a [scenario] section".into())
        })?;
        let (scenario, pre) = self.scenario_pieces(section)?;
        let spec = ScenarioSpec {
            id: section.id.clone(),
            product: section.product,
            delivery_start: section.delivery_start.resolve()?,
            scenario,
            confidence: self.confidence()?,
            bisection: self.bisection()?,
        };
        Ok((spec, pre))
    }

    /// The open-loop/tracking run for the `simulate` command.
    pub fn simulation_plan(&self) -> Result<SimulationPlan> {
        let sim = self.config.simulate.as_ref().ok_or_else(|| {
            Error::InvalidConfig("this command needs a [simulate] section".into())
        })?;
        let horizon = self.config.minutes_to_steps(sim.horizon_minutes)?;
        if horizon == 0 {
            return Err(Error::InvalidConfig(
                "simulate.horizon_minutes must cover at least one step".into(),
            ));
        }
        let mut windows = Vec::with_capacity(sim.management_windows.len());
        let mut r_schedule = vec![0.0; horizon];
        for &(from_min, to_min) in &sim.management_windows {
            let from = self.config.minutes_to_steps(from_min)?;
            let to = self.config.minutes_to_steps(to_min)?;
            if from > to || to > horizon {
                return Err(Error::InvalidConfig(format!(
                    "management window [{from_min}, {to_min}) minutes does not fit \
                     the {}-minute horizon",
                    sim.horizon_minutes
                )));
            }
            for slot in &mut r_schedule[from..to] {
                *slot = sim.r_kw;
            }
            windows.push((from, to));
        }
        let start_time = sim.start_time.as_ref().map(ConfigInstant::resolve).transpose()?;
        let ambient = self.ambient_schedule(start_time, horizon)?;
        Ok(SimulationPlan {
            r_schedule,
            control: ControlConfig {
                step_hours: self.config.step_hours(),
                management_windows: windows,
                record_rows: true,
            },
            ambient,
            disturbance: self.disturbance(),
            start_time,
        })
    }

    /// Runs the configured simulation with a fleet and disturbance stream
    /// derived from `master_seed`.
    pub fn run_simulation(&self, master_seed: u64) -> Result<ControlTrace> {
        let plan = self.simulation_plan()?;
        let mut population = self.sample_population(master_seed)?;
        let mut rng = rng_from_seed(derive_seed(master_seed, lane::DISTURBANCE, 0));
        run_horizon(
            &mut population,
            &plan.r_schedule,
            &plan.control,
            &plan.ambient,
            &plan.disturbance,
            &mut rng,
        )
    }
}

fn resolve_path(base_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base_dir.join(path)
    }
}

/// Run-describing header of `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMeta {
    pub tool: String,
    pub version: String,
    /// Subcommand that produced the outputs. Presentation-only flags
    /// (thread count, output directory, format) are deliberately absent
    /// so reruns compare byte-for-byte.
    pub command: String,
    pub master_seed: u64,
    /// Short-cycle locks count controller steps, not wall minutes.
    pub tau_units: String,
    pub initial_temperature_policy: String,
    pub lock_override_policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_kw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_period_cap_minutes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_period_applied_minutes: Option<f64>,
}

impl ManifestMeta {
    pub fn new(command: &str, master_seed: u64) -> Self {
        Self {
            tool: "vbflex".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            master_seed,
            tau_units: "steps".into(),
            initial_temperature_policy: "temperature at the setpoint, status by fair coin".into(),
            lock_override_policy: "comfort-band defense overrides the short-cycle lock".into(),
            gamma_kw: None,
            pre_period_cap_minutes: None,
            pre_period_applied_minutes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest: ManifestMeta,
    pub config: toml::Value,
}

impl Manifest {
    pub fn new(meta: ManifestMeta, config: &RunConfig) -> Result<Self> {
        Ok(Self {
            manifest: meta,
            config: toml::Value::try_from(config)?,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use chrono::NaiveDate;
    use std::io::Write;

    const BASE: &str = r#"
[run]
step_minutes = 1.0
disturbance_variance = 0.05
seed = 42

[[population.group]]
name = "fridge"
count = 30
r_th = 90.0
c_th = 0.6
p_nom = 0.3
cop = 2.0
setpoint = 2.5
half_band = 1.5
device_type = 0
tau = 1
ambient = { constant_c = 24.0 }

[prediction]
epsilon = 0.1
delta = 0.05
gamma_kw = 0.5
positive_far_kw = 20.0
negative_far_kw = -20.0
"#;

    fn ctx(text: &str) -> ConfigContext {
        ConfigContext::from_str_with_base(text, Path::new(".")).unwrap()
    }

    #[test]
    fn parses_base_config_with_defaults() {
        let config = RunConfig::from_toml_str(BASE).unwrap();
        assert_eq!(config.run.seed, 42);
        assert_relative_eq!(config.run.step_minutes, 1.0);
        let group = &config.population.groups[0];
        assert_eq!(group.tau, 1);
        assert_eq!(group.device_type, DeviceType::Cooling);
        assert!(matches!(
            group.ambient,
            AmbientConfig::Constant { constant_c } if constant_c == 24.0
        ));
        let pred = config.prediction.as_ref().unwrap();
        assert_eq!(pred.direction, SearchDirection::Positive);
        assert_eq!(pred.boundary, SearchBoundary::Supply);
    }

    #[test]
    fn device_type_accepts_names_and_tau_defaults() {
        let text = BASE
            .replace("device_type = 0", "device_type = \"heating\"")
            .replace("p_nom = 0.3", "p_nom = -4.5")
            .replace("tau = 1\n", "");
        let config = RunConfig::from_toml_str(&text).unwrap();
        let group = &config.population.groups[0];
        assert_eq!(group.device_type, DeviceType::Heating);
        assert_eq!(group.tau, 1, "tau defaults to one step");
    }

    #[test]
    fn validation_catches_bad_sections() {
        let bad_eps = BASE.replace("epsilon = 0.1", "epsilon = 1.5");
        assert!(RunConfig::from_toml_str(&bad_eps).is_err());

        let bad_count = BASE.replace("count = 30", "count = 0");
        assert!(RunConfig::from_toml_str(&bad_count).is_err());

        let bad_far = BASE.replace("negative_far_kw = -20.0", "negative_far_kw = 20.0");
        assert!(RunConfig::from_toml_str(&bad_far).is_err());

        let unknown = BASE.replace("seed = 42", "seed = 42\nbogus_knob = 1");
        assert!(
            RunConfig::from_toml_str(&unknown).is_err(),
            "unknown keys must be rejected, not silently ignored"
        );
    }

    #[test]
    fn minutes_to_steps_requires_whole_steps() {
        let config = RunConfig::from_toml_str(BASE).unwrap();
        assert_eq!(config.minutes_to_steps(15.0).unwrap(), 15);
        assert_eq!(config.minutes_to_steps(0.0).unwrap(), 0);
        assert!(config.minutes_to_steps(7.5).is_err());
    }

    #[test]
    fn oracle_scenario_defaults_to_event_only() {
        let (scenario, pre) = ctx(BASE).oracle_scenario().unwrap();
        assert_eq!(scenario.pre_steps(), 0);
        assert_eq!(scenario.event_steps(), 15);
        assert!(pre.is_none());
    }

    #[test]
    fn scenario_pre_period_adds_lead_and_compute() {
        let text = format!(
            "{BASE}\n[scenario]\nid = \"S2\"\nproduct = \"TR\"\n\
             delivery_start = \"2015-07-19T16:00\"\n"
        );
        let (spec, pre) = ctx(&text).scenario_spec().unwrap();
        assert_eq!(pre.lead_minutes, 25.0);
        assert_eq!(pre.compute_minutes, 5.0);
        assert_eq!(pre.applied_minutes, 30.0);
        assert!(!pre.capped);
        assert_eq!(spec.scenario.pre_steps(), 30);
        assert_eq!(spec.scenario.event_steps(), 15);
        assert_eq!(
            spec.delivery_start,
            NaiveDate::from_ymd_opt(2015, 7, 19)
                .unwrap()
                .and_hms_opt(16, 0, 0)
                .unwrap()
        );
    }

    #[test]
    fn overnight_lead_is_capped() {
        let text = format!(
            "{BASE}\n[scenario]\nid = \"S1\"\nproduct = \"SR\"\n\
             delivery_start = \"2015-02-07T01:00\"\npre_period_cap_minutes = 300.0\n"
        );
        let (spec, pre) = ctx(&text).scenario_spec().unwrap();
        assert_eq!(pre.lead_minutes, 540.0);
        assert_eq!(pre.requested_minutes, 545.0);
        assert_eq!(pre.applied_minutes, 300.0);
        assert!(pre.capped);
        assert_eq!(spec.scenario.pre_steps(), 300);
    }

    #[test]
    fn tmy_ambient_needs_a_start_time_and_step_holds() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(
            file,
            "time(UTC),T2m\n20150719:1500,31.0\n20150719:1600,33.0\n"
        )
        .unwrap();
        let path = file.path().display().to_string().replace('\\', "/");
        let tmy = BASE.replace(
            "ambient = { constant_c = 24.0 }",
            &format!("ambient = {{ tmy_path = \"{path}\" }}"),
        );

        let context = ctx(&tmy);
        assert!(
            context.oracle_scenario().is_err(),
            "event-only runs cannot anchor a weather series in time"
        );

        let with_scenario = format!(
            "{tmy}\n[scenario]\nid = \"S2\"\nproduct = \"TR\"\n\
             delivery_start = \"2015-07-19T16:00\"\n"
        );
        let (scenario, _) = ctx(&with_scenario).oracle_scenario().unwrap();
        match &scenario.ambient().groups[0] {
            GroupAmbient::PerStep(temps) => {
                assert_eq!(temps.len(), 45);
                assert_relative_eq!(temps[0], 31.0, epsilon = 1e-12);
                assert_relative_eq!(temps[30], 33.0, epsilon = 1e-12);
                assert_relative_eq!(temps[44], 33.0, epsilon = 1e-12);
            }
            other => panic!("expected a per-step ambient, got {other:?}"),
        }
    }

    #[test]
    fn simulation_plan_lays_out_windows_and_targets() {
        let text = format!(
            "{BASE}\n[simulate]\nhorizon_minutes = 45.0\n\
             management_windows = [[30.0, 45.0]]\nr_kw = 2.5\n"
        );
        let plan = ctx(&text).simulation_plan().unwrap();
        assert_eq!(plan.r_schedule.len(), 45);
        assert_relative_eq!(plan.r_schedule[29], 0.0);
        assert_relative_eq!(plan.r_schedule[30], 2.5);
        assert_relative_eq!(plan.r_schedule[44], 2.5);
        assert_eq!(plan.control.management_windows, vec![(30, 45)]);

        let bad = format!(
            "{BASE}\n[simulate]\nhorizon_minutes = 45.0\n\
             management_windows = [[30.0, 46.0]]\n"
        );
        assert!(ctx(&bad).simulation_plan().is_err());
    }

    #[test]
    fn run_simulation_is_deterministic() {
        let text = format!(
            "{BASE}\n[simulate]\nhorizon_minutes = 10.0\n\
             management_windows = [[0.0, 10.0]]\nr_kw = 1.0\n"
        );
        let context = ctx(&text);
        let a = context.run_simulation(7).unwrap();
        let b = context.run_simulation(7).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn manifest_embeds_and_unwraps_the_config() {
        let config = RunConfig::from_toml_str(BASE).unwrap();
        let mut meta = ManifestMeta::new("predict", 42);
        meta.gamma_kw = Some(0.5);
        let manifest = Manifest::new(meta, &config).unwrap();
        let text = manifest.to_toml_string().unwrap();
        assert!(text.contains("[manifest]"));
        assert!(text.contains("[config.run]"));

        let reloaded = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(reloaded, config, "a manifest must reproduce its run config");
    }

    #[test]
    fn native_toml_datetimes_are_accepted() {
        let text = format!(
            "{BASE}\n[scenario]\nid = \"S2\"\nproduct = \"TR\"\n\
             delivery_start = 2015-07-19T16:00:00\n"
        );
        let config = RunConfig::from_toml_str(&text).unwrap();
        let resolved = config.scenario.unwrap().delivery_start.resolve().unwrap();
        assert_eq!(
            resolved,
            NaiveDate::from_ymd_opt(2015, 7, 19)
                .unwrap()
                .and_hms_opt(16, 0, 0)
                .unwrap()
        );
    }
}
