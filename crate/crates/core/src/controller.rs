//! Closed-loop fleet controller.
//!
//! Per step: aggregate the fleet, compare the anticipated deviation `beta`
//! against the power target `r`, and toggle just enough devices to cover
//! the gap `e = r - beta`. Constraint-forced toggles always execute;
//! voluntary toggles happen only inside management windows.
//!
//! Voluntary candidates are ranked by how long they could hold their new
//! status before the thermostat would intervene (descending), so the
//! controller spends the devices with the deepest reserves first and
//! leaves short-fused devices untouched.

use rand::Rng;

use crate::error::{Error, Result};
use crate::thermal::{
    decay_factor, in_comfort_band, predict_with_decay, sample_disturbance, AmbientSchedule,
    DisturbanceModel, Population, TclState, time_to_boundary,
};
use crate::vb::{aggregate, StepSurvey, VbSnapshot};

/// Horizon-level controller settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    /// Controller step length, hours.
    pub step_hours: f64,
    /// Half-open step ranges `[start, end)` where tracking is active.
    pub management_windows: Vec<(usize, usize)>,
    /// Keep per-step rows in the trace. Summaries are always computed.
    pub record_rows: bool,
}

impl ControlConfig {
    pub fn managed(&self, step: usize) -> bool {
        self.management_windows
            .iter()
            .any(|&(s, e)| step >= s && step < e)
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        if !(self.step_hours.is_finite() && self.step_hours > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step_hours must be positive, got {}",
                self.step_hours
            )));
        }
        for &(s, e) in &self.management_windows {
            if s > e || e > horizon {
                return Err(Error::InvalidConfig(format!(
                    "management window [{s}, {e}) does not fit a {horizon}-step horizon"
                )));
            }
        }
        Ok(())
    }
}

/// A device the controller may toggle this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Index into `population.devices`.
    pub device: usize,
    /// Magnitude of the consumption change its toggle causes, kW (> 0).
    pub power_kw: f64,
    /// Hours the device could hold the toggled status before a forced
    /// toggle; may be infinite.
    pub priority_hours: f64,
}

/// Result of one disaggregation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Chosen device indices, in selection order.
    pub devices: Vec<usize>,
    /// Signed power the chosen toggles move, kW.
    pub dispatched_kw: f64,
    /// `e - dispatched`, kW.
    pub residual_kw: f64,
}

/// Greedy priority dispatch of the tracking gap `e_kw` over `candidates`.
///
/// Candidates are taken in descending priority (ties broken by ascending
/// device index) while the running sum stays within `|e|`. The first
/// overshooting candidate is included only if that strictly shrinks the
/// absolute residual; nothing after it is considered. The absolute
/// residual is therefore at most half the largest candidate power whenever
/// the candidate pool is not exhausted.
pub fn disaggregate(e_kw: f64, candidates: &[Candidate]) -> Selection {
    let target = e_kw.abs();
    let sign = if e_kw >= 0.0 { 1.0 } else { -1.0 };
    if target == 0.0 || candidates.is_empty() {
        return Selection {
            devices: Vec::new(),
            dispatched_kw: 0.0,
            residual_kw: e_kw,
        };
    }

    let mut order: Vec<&Candidate> = candidates.iter().collect();
    order.sort_unstable_by(|a, b| {
        b.priority_hours
            .total_cmp(&a.priority_hours)
            .then(a.device.cmp(&b.device))
    });

    let mut devices = Vec::new();
    let mut cum = 0.0;
    for c in order {
        debug_assert!(c.power_kw > 0.0, "candidate powers are magnitudes");
        let next = cum + c.power_kw;
        if next <= target {
            devices.push(c.device);
            cum = next;
            if cum == target {
                break;
            }
        } else {
            // First overshoot: take it only if that lands closer to the
            // target, then stop either way.
            if next - target < target - cum {
                devices.push(c.device);
                cum = next;
            }
            break;
        }
    }

    let dispatched = sign * cum;
    Selection {
        devices,
        dispatched_kw: dispatched,
        residual_kw: e_kw - dispatched,
    }
}

/// Toggle plan for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    /// Constraint-forced toggles (always executed).
    pub forced: Vec<usize>,
    /// Voluntary toggles chosen by disaggregation (managed steps only).
    pub voluntary: Vec<usize>,
    /// Forced toggles that had to override the short-cycle lock.
    pub overrides: usize,
    /// Tracking gap `r - beta` (managed steps only).
    pub e_kw: Option<f64>,
    /// Gap left after dispatch (managed steps only).
    pub residual_kw: Option<f64>,
}

/// Decides this step's toggles. Pure: the population is not modified.
///
/// Forced toggles execute regardless of the lock (band defense wins; each
/// such conflict is counted as an override). Voluntary candidates are the
/// availability-filtered devices whose toggle moves consumption toward the
/// target, ranked by the time the toggled status could be held.
pub fn control_step(
    population: &Population,
    survey: &StepSurvey,
    snapshot: &VbSnapshot,
    r_kw: f64,
    managed: bool,
    group_ambients: &[f64],
) -> StepDecision {
    let mut forced = Vec::new();
    let mut overrides = 0usize;
    for (idx, device) in population.devices.iter().enumerate() {
        if survey.flags[idx].forced_toggle {
            forced.push(idx);
            if device.state.steps_since_switch < device.params.tau {
                overrides += 1;
            }
        }
    }

    if !managed {
        return StepDecision {
            forced,
            voluntary: Vec::new(),
            overrides,
            e_kw: None,
            residual_kw: None,
        };
    }

    let e = r_kw - snapshot.beta_kw;
    let want_more = e > 0.0;
    let mut candidates = Vec::new();
    if e != 0.0 {
        for (idx, device) in population.devices.iter().enumerate() {
            let flags = &survey.flags[idx];
            if flags.forced_toggle {
                continue; // already toggling; accounted in beta
            }
            let eligible = if want_more {
                !device.state.on && flags.charge
            } else {
                device.state.on && flags.discharge
            };
            if !eligible {
                continue;
            }
            let toggled = TclState {
                on: !device.state.on,
                ..device.state
            };
            candidates.push(Candidate {
                device: idx,
                power_kw: device.params.nominal_draw_kw(),
                priority_hours: time_to_boundary(
                    &toggled,
                    &device.params,
                    group_ambients[device.group],
                ),
            });
        }
    }
    let selection = disaggregate(e, &candidates);

    StepDecision {
        forced,
        voluntary: selection.devices,
        overrides,
        e_kw: Some(e),
        residual_kw: Some(selection.residual_kw),
    }
}

/// Applies a decision: flips each listed device and resets its short-cycle
/// counter. Returns the net consumption change, kW.
pub fn apply_decision(population: &mut Population, decision: &StepDecision) -> f64 {
    let mut delta = 0.0;
    for &idx in decision.forced.iter().chain(&decision.voluntary) {
        let device = &mut population.devices[idx];
        let draw = device.params.nominal_draw_kw();
        delta += if device.state.on { -draw } else { draw };
        device.state.on = !device.state.on;
        device.state.steps_since_switch = 0;
    }
    delta
}

/// One recorded step of a horizon run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub r_kw: f64,
    pub managed: bool,
    /// Tracking gap at decision time (managed steps only).
    pub e_kw: Option<f64>,
    /// `|r - (consumption after toggles - baseline)|` (managed steps only).
    pub abs_error_kw: Option<f64>,
    pub toggles: usize,
    pub overrides: usize,
    pub snapshot: VbSnapshot,
}

/// Horizon-level tallies, computed whether or not rows are recorded.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HorizonSummary {
    pub steps: usize,
    pub managed_steps: usize,
    /// Managed steps whose target exceeded the matching headroom
    /// (`r > m_plus` or `|r| > m_minus`).
    pub supply_violations: usize,
    /// Managed steps whose anticipated deviation left the
    /// `[-m_minus, m_plus]` envelope.
    pub beta_outside_envelope: usize,
    /// Largest managed-step tracking error, kW.
    pub max_abs_error_kw: Option<f64>,
    pub toggles: usize,
    pub overrides: usize,
    /// Device-steps observed outside the comfort band after stepping.
    pub band_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrace {
    pub rows: Vec<TraceRow>,
    pub summary: HorizonSummary,
}

/// Whether the headroom at this snapshot covers a managed target `r_kw`.
pub fn supply_condition_holds(snapshot: &VbSnapshot, r_kw: f64) -> bool {
    if r_kw >= 0.0 {
        r_kw <= snapshot.m_plus_kw
    } else {
        -r_kw <= snapshot.m_minus_kw
    }
}

/// Runs the closed loop over `r_schedule.len()` steps.
///
/// Step order: aggregate, decide, apply toggles, then advance every
/// temperature with a fresh disturbance draw. Disturbances are drawn in
/// device order from the single `rng` stream, so a run is a deterministic
/// function of the initial population and the RNG seed.
pub fn run_horizon<R: Rng + ?Sized>(
    population: &mut Population,
    r_schedule: &[f64],
    config: &ControlConfig,
    ambient: &AmbientSchedule,
    disturbance: &DisturbanceModel,
    rng: &mut R,
) -> Result<ControlTrace> {
    let horizon = r_schedule.len();
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1 step".into()));
    }
    config.validate(horizon)?;
    disturbance.validate()?;
    ambient.validate(population.group_count, horizon)?;

    // Decay factors depend only on (params, step): one per group.
    let mut group_decay = vec![f64::NAN; population.group_count];
    for device in &population.devices {
        if group_decay[device.group].is_nan() {
            group_decay[device.group] = decay_factor(&device.params, config.step_hours)?;
        }
    }

    let mut rows = Vec::with_capacity(if config.record_rows { horizon } else { 0 });
    let mut summary = HorizonSummary {
        steps: horizon,
        managed_steps: 0,
        supply_violations: 0,
        beta_outside_envelope: 0,
        max_abs_error_kw: None,
        toggles: 0,
        overrides: 0,
        band_violations: 0,
    };
    let mut ambients = vec![0.0; population.group_count];

    for step in 0..horizon {
        for (group, slot) in ambients.iter_mut().enumerate() {
            *slot = ambient.at(group, step);
        }
        let (snapshot, survey) = aggregate(population, &ambients, config.step_hours, step)?;
        let managed = config.managed(step);
        let r = r_schedule[step];

        if managed {
            summary.managed_steps += 1;
            if !supply_condition_holds(&snapshot, r) {
                summary.supply_violations += 1;
            }
            if !snapshot.admits(snapshot.beta_kw) {
                summary.beta_outside_envelope += 1;
            }
        }

        let decision = control_step(population, &survey, &snapshot, r, managed, &ambients);
        let toggles = decision.forced.len() + decision.voluntary.len();
        summary.toggles += toggles;
        summary.overrides += decision.overrides;
        let delta = apply_decision(population, &decision);

        let abs_error = if managed {
            let achieved = snapshot.consumed_kw + delta - snapshot.baseline_kw;
            let err = (r - achieved).abs();
            summary.max_abs_error_kw = Some(summary.max_abs_error_kw.map_or(err, |m: f64| m.max(err)));
            Some(err)
        } else {
            None
        };

        if config.record_rows {
            rows.push(TraceRow {
                step,
                r_kw: r,
                managed,
                e_kw: decision.e_kw,
                abs_error_kw: abs_error,
                toggles,
                overrides: decision.overrides,
                snapshot,
            });
        }

        // Thermal step to k+1.
        for device in &mut population.devices {
            let w = sample_disturbance(disturbance, rng);
            let g = group_decay[device.group];
            let amb = ambients[device.group];
            device.state.temperature =
                predict_with_decay(device.state.temperature, &device.params, device.state.on, amb, g)
                    + w;
            device.state.steps_since_switch = device.state.steps_since_switch.saturating_add(1);
            if !in_comfort_band(&device.params, device.state.temperature) {
                summary.band_violations += 1;
            }
        }
    }

    Ok(ControlTrace { rows, summary })
}
