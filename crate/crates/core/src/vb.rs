//! Virtual-battery aggregation: collapses a device fleet into per-step
//! charge/discharge headroom and a deviation signal.
//!
//! With electrical-sense quantities (cooling positive as-is, heating
//! negated so draw is always nonnegative):
//!
//! ```text
//! m_plus  = sum_i (Pe_i - P0e_i) - P_plus     (max extra consumption, kW)
//! m_minus = sum_i P0e_i          - P_minus    (max consumption reduction, kW)
//! ```
//!
//! `P_plus` / `P_minus` are the current electrical draws of the devices
//! unavailable for charging / discharging, so a device pinned off by its
//! band costs the discharge headroom nothing. Devices whose ambient
//! disqualifies them outright are left out of every sum: they are not
//! part of the responsive fleet while the weather keeps them off. Both
//! headrooms are magnitudes: a signed deviation `beta` is admissible when
//! `-m_minus <= beta <= m_plus`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::thermal::{
    ambient_disqualifies, availability_with_decay, baseline_power, decay_factor, Availability,
    Population, TclParams,
};

/// Electrical draw of one device, kW: `(1 - 2*phi) * p_nom * u`.
/// Nonnegative for every valid parameter set.
pub fn electrical_power(params: &TclParams, on: bool) -> f64 {
    if on {
        params.nominal_draw_kw()
    } else {
        0.0
    }
}

/// Aggregated view of the fleet at one step, before any toggles execute.
/// All powers are electrical-sense kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VbSnapshot {
    /// Step index the snapshot was taken at.
    pub step: usize,
    /// Maximum additional consumption the fleet can sustain next step.
    pub m_plus_kw: f64,
    /// Maximum consumption reduction (magnitude) available next step.
    pub m_minus_kw: f64,
    /// Current draw of devices unavailable for charging.
    pub p_plus_kw: f64,
    /// Current draw of devices unavailable for discharging.
    pub p_minus_kw: f64,
    /// Anticipated deviation from baseline once forced toggles execute:
    /// `consumed + forced - baseline`.
    pub beta_kw: f64,
    /// Current total draw (statuses as of the start of the step).
    pub consumed_kw: f64,
    /// Total baseline draw at the current ambients.
    pub baseline_kw: f64,
    /// Net consumption change the constraint-forced toggles will cause
    /// this step (positive when forced switch-ons dominate).
    pub forced_kw: f64,
}

impl VbSnapshot {
    /// True when a signed deviation fits inside the headroom envelope,
    /// with a small slack for float accumulation.
    pub fn admits(&self, beta_kw: f64) -> bool {
        const SLACK: f64 = 1e-9;
        beta_kw >= -self.m_minus_kw - SLACK && beta_kw <= self.m_plus_kw + SLACK
    }
}

/// Per-device availability computed alongside a snapshot; indexed like
/// `population.devices`. Valid for the step it was computed at only.
#[derive(Debug, Clone)]
pub struct StepSurvey {
    pub flags: Vec<Availability>,
}

/// Computes the snapshot and availability survey for the current step.
///
/// `group_ambients` holds one ambient per population group. Devices are
/// visited in index order, so every accumulated sum is bitwise
/// reproducible.
pub fn aggregate(
    population: &Population,
    group_ambients: &[f64],
    step_hours: f64,
    step: usize,
) -> Result<(VbSnapshot, StepSurvey)> {
    if group_ambients.len() != population.group_count {
        return Err(Error::InvalidConfig(format!(
            "{} group ambients supplied for {} groups",
            group_ambients.len(),
            population.group_count
        )));
    }

    // Per-group cache keyed by the group of the previous device; group runs
    // are contiguous in practice but correctness does not rely on it.
    struct GroupCache {
        ambient: f64,
        g: f64,
        baseline_electrical: f64,
        nominal: f64,
        disqualified: bool,
    }
    let mut caches: Vec<Option<GroupCache>> = Vec::new();
    caches.resize_with(population.group_count, || None);

    let mut sum_charge = 0.0;
    let mut sum_discharge = 0.0;
    let mut p_plus = 0.0;
    let mut p_minus = 0.0;
    let mut consumed = 0.0;
    let mut baseline = 0.0;
    let mut forced = 0.0;
    let mut flags = Vec::with_capacity(population.len());

    for device in &population.devices {
        let cache = match &caches[device.group] {
            Some(c) => c,
            None => {
                let ambient = group_ambients[device.group];
                let g = decay_factor(&device.params, step_hours)?;
                let sign = device.params.device_type.charge_sign();
                // An ambient on the wrong side of the setpoint means the
                // device simply does not run; no negative baselines.
                let baseline_electrical = (sign * baseline_power(&device.params, ambient)).max(0.0);
                caches[device.group] = Some(GroupCache {
                    ambient,
                    g,
                    baseline_electrical,
                    nominal: device.params.nominal_draw_kw(),
                    disqualified: ambient_disqualifies(&device.params, ambient),
                });
                caches[device.group].as_ref().unwrap()
            }
        };

        let avail = availability_with_decay(&device.state, &device.params, cache.ambient, cache.g);
        flags.push(avail);

        let draw = if device.state.on { cache.nominal } else { 0.0 };
        consumed += draw;
        if avail.forced_toggle {
            forced += if device.state.on {
                -cache.nominal
            } else {
                cache.nominal
            };
        }
        // A disqualified device still draws real power until its forced
        // switch-off lands, but it is no part of the responsive fleet:
        // nothing it could do counts toward headroom or baseline.
        if cache.disqualified {
            continue;
        }
        sum_charge += cache.nominal - cache.baseline_electrical;
        sum_discharge += cache.baseline_electrical;
        baseline += cache.baseline_electrical;
        if !avail.charge {
            p_plus += draw;
        }
        if !avail.discharge {
            p_minus += draw;
        }
    }

    let snapshot = VbSnapshot {
        step,
        m_plus_kw: sum_charge - p_plus,
        m_minus_kw: sum_discharge - p_minus,
        p_plus_kw: p_plus,
        p_minus_kw: p_minus,
        beta_kw: consumed - baseline + forced,
        consumed_kw: consumed,
        baseline_kw: baseline,
        forced_kw: forced,
    };
    Ok((snapshot, StepSurvey { flags }))
}
