//! Event scenarios: a fleet, an ambient schedule, and a delivery window.
//!
//! A scenario describes one candidate delivery: an optional unmanaged
//! pre-period (the fleet just thermostats along, e.g. between a market's
//! gate closure and the delivery start) followed by a managed event during
//! which the fleet must shift its consumption by the offered power. A
//! trial succeeds when the fleet actually delivers: the tracking error
//! stays within the toggle granularity (half the largest device draw) at
//! every managed step, so saturation — devices exhausting their thermal
//! runway faster than the rotation can replace them — fails the trial
//! even while instantaneous headroom still looks ample. Each trial
//! samples a fresh population and disturbance stream from the trial seed,
//! so a scenario plugs directly into the Monte-Carlo certification
//! machinery as a [`TrialOracle`].

use crate::controller::{run_horizon, ControlConfig, ControlTrace};
use crate::error::{Error, Result};
use crate::predict::TrialOracle;
use crate::rng::{derive_seed, lane, rng_from_seed};
use crate::thermal::{
    generate_population, AmbientSchedule, DisturbanceModel, PopulationGroup, PopulationSpec,
};

/// A repeatable delivery experiment.
#[derive(Debug, Clone)]
pub struct TrialScenario {
    groups: Vec<PopulationGroup>,
    ambient: AmbientSchedule,
    pre_steps: usize,
    event_steps: usize,
    step_hours: f64,
    disturbance: DisturbanceModel,
    /// Delivery slack: half the largest nominal draw in the fleet, the
    /// residual an exact per-step disaggregation cannot beat.
    tolerance_kw: f64,
}

impl TrialScenario {
    /// Validates the pieces once so trials can run unchecked.
    pub fn new(
        groups: Vec<PopulationGroup>,
        ambient: AmbientSchedule,
        pre_steps: usize,
        event_steps: usize,
        step_hours: f64,
        disturbance: DisturbanceModel,
    ) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidConfig(
                "a scenario needs at least one population group".into(),
            ));
        }
        for group in &groups {
            group.params.validate()?;
            if group.count == 0 {
                return Err(Error::InvalidConfig(
                    "population group counts must be at least 1".into(),
                ));
            }
        }
        if event_steps == 0 {
            return Err(Error::InvalidConfig(
                "the delivery event must span at least one step".into(),
            ));
        }
        if !(step_hours.is_finite() && step_hours > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step_hours must be positive, got {step_hours}"
            )));
        }
        disturbance.validate()?;
        let horizon = pre_steps + event_steps;
        ambient.validate(groups.len(), horizon)?;
        let tolerance_kw = 0.5
            * groups
                .iter()
                .map(|g| g.params.nominal_draw_kw())
                .fold(0.0, f64::max);
        Ok(Self {
            groups,
            ambient,
            pre_steps,
            event_steps,
            step_hours,
            disturbance,
            tolerance_kw,
        })
    }

    pub fn groups(&self) -> &[PopulationGroup] {
        &self.groups
    }

    pub fn ambient(&self) -> &AmbientSchedule {
        &self.ambient
    }

    pub fn step_hours(&self) -> f64 {
        self.step_hours
    }

    pub fn pre_steps(&self) -> usize {
        self.pre_steps
    }

    pub fn event_steps(&self) -> usize {
        self.event_steps
    }

    pub fn horizon(&self) -> usize {
        self.pre_steps + self.event_steps
    }

    /// Managed step range `[start, end)`.
    pub fn event_window(&self) -> (usize, usize) {
        (self.pre_steps, self.horizon())
    }

    /// Runs one full trial: fresh population and disturbance stream from
    /// `trial_seed`, unmanaged pre-period, then the managed event at
    /// `power_kw`.
    pub fn run_trial(
        &self,
        power_kw: f64,
        trial_seed: u64,
        record_rows: bool,
    ) -> Result<ControlTrace> {
        let pop_seed = derive_seed(trial_seed, lane::POPULATION, 0);
        let dist_seed = derive_seed(trial_seed, lane::DISTURBANCE, 0);
        let mut population = generate_population(&PopulationSpec {
            groups: self.groups.clone(),
            master_seed: pop_seed,
        })?;
        let mut r = vec![0.0; self.horizon()];
        for slot in &mut r[self.pre_steps..] {
            *slot = power_kw;
        }
        let config = ControlConfig {
            step_hours: self.step_hours,
            management_windows: vec![self.event_window()],
            record_rows,
        };
        let mut rng = rng_from_seed(dist_seed);
        run_horizon(
            &mut population,
            &r,
            &config,
            &self.ambient,
            &self.disturbance,
            &mut rng,
        )
    }

    /// Largest tracking error a successful trial may show, kW.
    pub fn tolerance_kw(&self) -> f64 {
        self.tolerance_kw
    }

    /// Whether the fleet actually delivered the offered power: the
    /// tracking error stays within the toggle granularity at every
    /// managed step.
    pub fn trial_succeeds(&self, power_kw: f64, trial_seed: u64) -> Result<bool> {
        let trace = self.run_trial(power_kw, trial_seed, false)?;
        let worst = trace
            .summary
            .max_abs_error_kw
            .expect("an event has at least one managed step");
        Ok(worst <= self.tolerance_kw)
    }
}

impl TrialOracle for TrialScenario {
    fn supplies(&self, power_kw: f64, trial_seed: u64) -> bool {
        // `new` validated everything; a failure here is a programming error.
        self.trial_succeeds(power_kw, trial_seed)
            .expect("validated scenario trial cannot fail to run")
    }
}
