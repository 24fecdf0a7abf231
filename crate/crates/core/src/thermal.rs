//! First-order thermal model of a thermostatically controlled load (TCL)
//! and population generation.
//!
//! Discrete dynamics with step length `h` hours:
//!
//! ```text
//! theta[k+1] = g * theta[k] + (1 - g) * (ambient - u[k] * theta_g) + w[k]
//! g       = exp(-h / (R * C))
//! theta_g = R * P * eta
//! ```
//!
//! Sign convention: `p_nom` is positive for cooling devices and negative for
//! heating devices, so `theta_g` always points the on-state drift away from
//! ambient in the direction the device actuates. Electrical draw is always
//! nonnegative; see [`crate::vb::electrical_power`].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Whether the device moves its controlled temperature down (cooling) or up
/// (heating) while drawing power. Serialized as `0` (cooling) / `1`
/// (heating), matching the config schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceType {
    Cooling,
    Heating,
}

impl DeviceType {
    /// Direction flag: 0 for cooling, 1 for heating.
    pub fn phi(self) -> f64 {
        match self {
            DeviceType::Cooling => 0.0,
            DeviceType::Heating => 1.0,
        }
    }

    /// `1 - 2*phi`: +1 for cooling, -1 for heating. Multiplying a signed
    /// thermal power by this factor yields the electrical-sense value.
    pub fn charge_sign(self) -> f64 {
        1.0 - 2.0 * self.phi()
    }
}

impl Serialize for DeviceType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(match self {
            DeviceType::Cooling => 0,
            DeviceType::Heating => 1,
        })
    }
}

impl<'de> Deserialize<'de> for DeviceType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = DeviceType;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                write!(f, "0/1 or \"cooling\"/\"heating\"")
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<DeviceType, E> {
                match v {
                    0 => Ok(DeviceType::Cooling),
                    1 => Ok(DeviceType::Heating),
                    other => Err(E::custom(format!("device_type must be 0 or 1, got {other}"))),
                }
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<DeviceType, E> {
                u64::try_from(v)
                    .map_err(|_| E::custom("device_type must be 0 or 1"))
                    .and_then(|v| self.visit_u64(v))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<DeviceType, E> {
                match v {
                    "cooling" => Ok(DeviceType::Cooling),
                    "heating" => Ok(DeviceType::Heating),
                    other => Err(E::custom(format!(
                        "device_type must be \"cooling\" or \"heating\", got {other:?}"
                    ))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Physical and control parameters of one TCL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TclParams {
    /// Thermal resistance, degC per kW.
    pub r_th: f64,
    /// Thermal capacitance, kWh per degC.
    pub c_th: f64,
    /// Nominal electrical power, kW. Positive for cooling, negative for
    /// heating.
    pub p_nom: f64,
    /// Coefficient of performance (dimensionless, > 0).
    pub cop: f64,
    /// Comfort setpoint, degC.
    pub setpoint: f64,
    /// Half-width of the comfort band, degC. The band is
    /// `[setpoint - half_band, setpoint + half_band]`, closed on both ends.
    pub half_band: f64,
    /// Device direction; must agree with the sign of `p_nom`.
    pub device_type: DeviceType,
    /// Short-cycle lock: minimum controller steps between voluntary toggles.
    pub tau: u32,
}

impl TclParams {
    /// Checks positivity and the sign convention linking `device_type` and
    /// `p_nom`.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidParameter(m));
        if !(self.r_th.is_finite() && self.r_th > 0.0) {
            return err(format!("r_th must be positive, got {}", self.r_th));
        }
        if !(self.c_th.is_finite() && self.c_th > 0.0) {
            return err(format!("c_th must be positive, got {}", self.c_th));
        }
        if !(self.cop.is_finite() && self.cop > 0.0) {
            return err(format!("cop must be positive, got {}", self.cop));
        }
        if !(self.half_band.is_finite() && self.half_band > 0.0) {
            return err(format!("half_band must be positive, got {}", self.half_band));
        }
        if !self.setpoint.is_finite() {
            return err(format!("setpoint must be finite, got {}", self.setpoint));
        }
        if !(self.p_nom.is_finite() && self.p_nom != 0.0) {
            return err(format!("p_nom must be nonzero, got {}", self.p_nom));
        }
        let sign_ok = match self.device_type {
            DeviceType::Cooling => self.p_nom > 0.0,
            DeviceType::Heating => self.p_nom < 0.0,
        };
        if !sign_ok {
            return err(format!(
                "p_nom sign ({}) contradicts device_type ({:?}): cooling needs p_nom > 0, heating p_nom < 0",
                self.p_nom, self.device_type
            ));
        }
        Ok(())
    }

    /// Comfort band `(lower, upper)`, degC.
    pub fn band(&self) -> (f64, f64) {
        (self.setpoint - self.half_band, self.setpoint + self.half_band)
    }

    /// Temperature gain while on: `theta_g = R * P * eta`, degC. Positive
    /// for cooling devices, negative for heating devices.
    pub fn gain_temperature(&self) -> f64 {
        self.r_th * self.p_nom * self.cop
    }

    /// Thermal time constant `R * C`, hours.
    pub fn time_constant_hours(&self) -> f64 {
        self.r_th * self.c_th
    }

    /// Electrical draw when on, kW (always positive).
    pub fn nominal_draw_kw(&self) -> f64 {
        self.device_type.charge_sign() * self.p_nom
    }

    /// Asymptotic temperature under status `on` with ambient `ambient`:
    /// `ambient - u * theta_g`.
    pub fn drift_target(&self, on: bool, ambient: f64) -> f64 {
        if on {
            ambient - self.gain_temperature()
        } else {
            ambient
        }
    }
}

/// Mutable per-device state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TclState {
    /// Controlled temperature, degC.
    pub temperature: f64,
    /// True while the device draws power.
    pub on: bool,
    /// Controller steps since the last toggle. Incremented once per thermal
    /// step, reset to 0 when the status flips. A toggle is lock-permitted
    /// when `steps_since_switch >= tau`.
    pub steps_since_switch: u32,
}

/// One-step toggle outlook for a device, recomputed every step from the
/// current state; never cached across steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Availability {
    /// The device may draw power this step: running keeps next step's
    /// drift-only temperature inside the band, any needed toggle is
    /// lock-permitted, and the ambient does not disqualify operation.
    pub charge: bool,
    /// The device may idle this step: idling keeps next step's drift-only
    /// temperature inside the band and any needed toggle is
    /// lock-permitted.
    pub discharge: bool,
    /// The thermostat must flip the status this step because the
    /// drift-only prediction exits the band (or to stop operating under a
    /// disqualifying ambient).
    pub forced_toggle: bool,
}

/// `exp(-h / (R*C))` for step length `step_hours`.
///
/// Approaches 1 as the step shrinks and 0 as the step grows; strictly
/// decreasing in `step_hours` and increasing in `R*C`.
pub fn decay_factor(params: &TclParams, step_hours: f64) -> Result<f64> {
    if !(step_hours.is_finite() && step_hours > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step_hours must be positive, got {step_hours}"
        )));
    }
    let rc = params.time_constant_hours();
    if !(rc.is_finite() && rc > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "thermal time constant must be positive, got {rc}"
        )));
    }
    Ok((-step_hours / rc).exp())
}

/// Advances the temperature one step under status `state.on` with additive
/// disturbance `disturbance` (degC). Pure; does not mutate the state.
pub fn step_temperature(
    state: &TclState,
    params: &TclParams,
    ambient: f64,
    disturbance: f64,
    step_hours: f64,
) -> f64 {
    let g = decay_factor(params, step_hours).expect("validated params and positive step");
    predict_with_decay(state.temperature, params, state.on, ambient, g) + disturbance
}

/// Disturbance-free one-step prediction with a precomputed decay factor.
/// Shared by the public step/availability entry points and the hot loop.
#[inline]
pub(crate) fn predict_with_decay(
    temperature: f64,
    params: &TclParams,
    on: bool,
    ambient: f64,
    g: f64,
) -> f64 {
    g * temperature + (1.0 - g) * params.drift_target(on, ambient)
}

/// Power that holds the temperature exactly at the setpoint under constant
/// ambient: `(ambient - setpoint) / (eta * R)`, kW, in the signed thermal
/// convention (same sign as `ambient - setpoint`).
pub fn baseline_power(params: &TclParams, ambient: f64) -> f64 {
    (ambient - params.setpoint) / (params.cop * params.r_th)
}

/// True iff `temperature` lies inside the closed comfort band.
pub fn in_comfort_band(params: &TclParams, temperature: f64) -> bool {
    let (lo, hi) = params.band();
    temperature >= lo && temperature <= hi
}

/// True when the ambient disqualifies operation: a heating device with the
/// ambient strictly above the band, or a cooling device with the ambient
/// strictly below it, must not draw power (running could only push the
/// temperature further out on the side it cannot correct).
pub fn ambient_disqualifies(params: &TclParams, ambient: f64) -> bool {
    let (lo, hi) = params.band();
    match params.device_type {
        DeviceType::Heating => ambient > hi,
        DeviceType::Cooling => ambient < lo,
    }
}

/// Computes the one-step availability flags. See [`Availability`].
pub fn availability(
    state: &TclState,
    params: &TclParams,
    ambient: f64,
    step_hours: f64,
) -> Availability {
    let g = decay_factor(params, step_hours).expect("validated params and positive step");
    availability_with_decay(state, params, ambient, g)
}

pub(crate) fn availability_with_decay(
    state: &TclState,
    params: &TclParams,
    ambient: f64,
    g: f64,
) -> Availability {
    let (lo, hi) = params.band();
    let pred_current = predict_with_decay(state.temperature, params, state.on, ambient, g);

    let disqualified = ambient_disqualifies(params, ambient);

    // Status the thermostat needs if the uncontrolled trajectory exits the
    // band: on-exit side it can correct, off on the other. Exits on the
    // uncorrectable side (possible only under a disqualifying ambient)
    // resolve to off.
    let needed = if pred_current > hi {
        match params.device_type {
            DeviceType::Cooling => Some(true),
            DeviceType::Heating => Some(false),
        }
    } else if pred_current < lo {
        match params.device_type {
            DeviceType::Cooling => Some(false),
            DeviceType::Heating => Some(true),
        }
    } else {
        None
    };
    let forced_toggle = if disqualified {
        // A disqualified device is held off regardless of band position.
        state.on
    } else {
        needed.is_some_and(|n| n != state.on)
    };

    // Dispatchability looks one step ahead: a device can charge only if
    // running next step keeps it inside the band, and discharge only if
    // sitting idle does. The lock binds just when honouring the command
    // would need a toggle.
    let lock_ok = state.steps_since_switch >= params.tau;
    let pred_on = predict_with_decay(state.temperature, params, true, ambient, g);
    let pred_off = predict_with_decay(state.temperature, params, false, ambient, g);
    let charge =
        pred_on >= lo && pred_on <= hi && (state.on || lock_ok) && !disqualified;
    let discharge = pred_off >= lo && pred_off <= hi && (!state.on || lock_ok);

    Availability {
        charge,
        discharge,
        forced_toggle,
    }
}

/// Hours until the disturbance-free trajectory under status `state.on`
/// reaches the band edge it drifts toward:
///
/// ```text
/// t = R * C * ln((theta - theta_inf) / (theta_edge - theta_inf))
/// ```
///
/// Returns `+inf` when the asymptote lies inside the band (the trajectory
/// never exits) and 0 when the temperature already sits at or beyond that
/// edge.
pub fn time_to_boundary(state: &TclState, params: &TclParams, ambient: f64) -> f64 {
    let (lo, hi) = params.band();
    let theta = state.temperature;
    let theta_inf = params.drift_target(state.on, ambient);

    if theta_inf >= lo && theta_inf <= hi {
        return f64::INFINITY;
    }
    let edge = if theta_inf > theta {
        hi
    } else if theta_inf < theta {
        lo
    } else {
        return f64::INFINITY;
    };
    // Past the target edge already: boundary reached.
    if (theta_inf > theta && theta >= edge) || (theta_inf < theta && theta <= edge) {
        return 0.0;
    }
    params.time_constant_hours() * ((theta - theta_inf) / (edge - theta_inf)).ln()
}

/// Additive per-step temperature disturbance, `N(0, variance)` in degC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceModel {
    /// Variance of the per-step noise, degC^2. Zero disables the noise.
    pub variance: f64,
}

impl DisturbanceModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "disturbance variance must be nonnegative, got {}",
                self.variance
            )));
        }
        Ok(())
    }
}

/// Draws one per-step disturbance sample. The zero-variance model
/// short-circuits to exactly 0.0 without consuming randomness, so
/// noise-free runs stay bitwise stable under RNG changes.
pub fn sample_disturbance<R: Rng + ?Sized>(model: &DisturbanceModel, rng: &mut R) -> f64 {
    if model.variance == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, model.variance.sqrt())
        .expect("validated variance")
        .sample(rng)
}

/// A homogeneous block of devices sharing one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationGroup {
    pub params: TclParams,
    pub count: usize,
}

/// Recipe for a randomized population. Identical specs always produce
/// identical populations.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub groups: Vec<PopulationGroup>,
    pub master_seed: u64,
}

/// One concrete device: parameters, state, and the index of its group
/// (which also selects its ambient source).
#[derive(Debug, Clone, Copy)]
pub struct Device {
    pub params: TclParams,
    pub state: TclState,
    pub group: usize,
}

/// A concrete fleet of devices, simulated together as one virtual battery.
#[derive(Debug, Clone)]
pub struct Population {
    pub devices: Vec<Device>,
    /// Group count carried along so ambient tables can be validated.
    pub group_count: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }
}

/// Materializes a population from a spec: statuses are fair coin flips,
/// temperatures start at each device's setpoint, and the short-cycle
/// counter starts at `tau` (no initial lock). Draws happen in device
/// order from a single ChaCha stream, so the result is bitwise
/// reproducible for a given spec regardless of threading.
pub fn generate_population(spec: &PopulationSpec) -> Result<Population> {
    if spec.groups.is_empty() {
        return Err(Error::InvalidParameter(
            "population needs at least one group".into(),
        ));
    }
    let mut total = 0usize;
    for (i, g) in spec.groups.iter().enumerate() {
        g.params
            .validate()
            .map_err(|e| Error::InvalidParameter(format!("group {i}: {e}")))?;
        if g.count == 0 {
            return Err(Error::InvalidParameter(format!(
                "group {i}: count must be at least 1"
            )));
        }
        total += g.count;
    }

    let mut rng = rng_from_seed(spec.master_seed);
    let mut devices = Vec::with_capacity(total);
    for (group, g) in spec.groups.iter().enumerate() {
        for _ in 0..g.count {
            let on = rng.gen_bool(0.5);
            let temperature = g.params.setpoint;
            devices.push(Device {
                params: g.params,
                state: TclState {
                    temperature,
                    on,
                    steps_since_switch: g.params.tau,
                },
                group,
            });
        }
    }
    Ok(Population {
        devices,
        group_count: spec.groups.len(),
    })
}

/// Ambient temperature per group over a horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupAmbient {
    /// Same value every step.
    Constant(f64),
    /// One value per step, indexed by step.
    PerStep(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbientSchedule {
    pub groups: Vec<GroupAmbient>,
}

impl AmbientSchedule {
    pub fn constant(values: &[f64]) -> Self {
        AmbientSchedule {
            groups: values.iter().map(|&v| GroupAmbient::Constant(v)).collect(),
        }
    }

    /// Ambient of `group` at `step`. Panics outside a validated range.
    pub fn at(&self, group: usize, step: usize) -> f64 {
        match &self.groups[group] {
            GroupAmbient::Constant(v) => *v,
            GroupAmbient::PerStep(v) => v[step],
        }
    }

    /// Checks the schedule covers `group_count` groups over `horizon` steps.
    pub fn validate(&self, group_count: usize, horizon: usize) -> Result<()> {
        if self.groups.len() != group_count {
            return Err(Error::InvalidConfig(format!(
                "ambient schedule covers {} groups, population has {}",
                self.groups.len(),
                group_count
            )));
        }
        for (i, g) in self.groups.iter().enumerate() {
            match g {
                GroupAmbient::Constant(v) if !v.is_finite() => {
                    return Err(Error::InvalidConfig(format!(
                        "ambient for group {i} is not finite"
                    )));
                }
                GroupAmbient::PerStep(v) if v.len() < horizon => {
                    return Err(Error::InvalidConfig(format!(
                        "ambient series for group {i} has {} steps, horizon needs {horizon}",
                        v.len()
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{cooling_pump, fridge, heating_pump, water_heater};
    use approx::assert_relative_eq;

    fn state(temperature: f64, on: bool) -> TclState {
        TclState {
            temperature,
            on,
            steps_since_switch: 10,
        }
    }

    const MINUTE: f64 = 1.0 / 60.0;

    #[test]
    fn decay_factor_frozen_values() {
        // exp(-1/4) for the pump at a 1 h step.
        let g = decay_factor(&heating_pump(), 1.0).unwrap();
        assert_relative_eq!(g, 0.778_800_8, epsilon = 1e-6);

        // exp(-(1/60)/54) for the refrigerator at a 1 min step.
        let g = decay_factor(&fridge(), MINUTE).unwrap();
        assert_relative_eq!(g, 0.999_691_4, epsilon = 1e-7);
    }

    #[test]
    fn decay_factor_limits_and_monotonicity() {
        let p = fridge();
        assert_relative_eq!(decay_factor(&p, 1e-12).unwrap(), 1.0, epsilon = 1e-9);
        let g1 = decay_factor(&p, 0.5).unwrap();
        let g2 = decay_factor(&p, 1.0).unwrap();
        let g3 = decay_factor(&p, 2.0).unwrap();
        assert!(g1 > g2 && g2 > g3, "g must decrease with the step length");
        assert!(decay_factor(&p, 0.0).is_err());
        assert!(decay_factor(&p, -1.0).is_err());
        assert!(decay_factor(&p, f64::NAN).is_err());
    }

    #[test]
    fn step_temperature_equilibrium_at_ambient_when_off() {
        let p = fridge();
        let s = state(24.0, false);
        let next = step_temperature(&s, &p, 24.0, 0.0, 1.0);
        assert_relative_eq!(next, 24.0, epsilon = 1e-12);
    }

    #[test]
    fn step_temperature_frozen_refrigerator_value() {
        // One minute of active cooling from the setpoint at 24 degC ambient:
        // g*2.5 + (1-g)*(24 - 54) with g = exp(-(1/60)/54).
        let p = fridge();
        let s = state(2.5, true);
        let next = step_temperature(&s, &p, 24.0, 0.0, MINUTE);
        assert_relative_eq!(next, 2.489_970_7, epsilon = 1e-6);
    }

    #[test]
    fn step_temperature_heating_device_rises_when_on() {
        // theta_g = 2 * (-5.6) * 3.5 = -39.2, so the on-state target at
        // 5 degC ambient is 44.2 degC: the pump heats.
        let p = heating_pump();
        assert_relative_eq!(p.gain_temperature(), -39.2, epsilon = 1e-12);
        let s = state(22.0, true);
        let next = step_temperature(&s, &p, 5.0, 0.0, MINUTE);
        assert!(next > 22.0, "heating pump must raise the temperature, got {next}");
        assert_relative_eq!(p.drift_target(true, 5.0), 44.2, epsilon = 1e-12);
    }

    #[test]
    fn step_temperature_applies_disturbance_additively() {
        let p = fridge();
        let s = state(2.5, false);
        let clean = step_temperature(&s, &p, 24.0, 0.0, MINUTE);
        let noisy = step_temperature(&s, &p, 24.0, 0.25, MINUTE);
        assert_relative_eq!(noisy - clean, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn baseline_power_frozen_values() {
        assert_relative_eq!(
            baseline_power(&fridge(), 24.0),
            0.119_444_4,
            epsilon = 1e-6
        );
        assert_relative_eq!(
            baseline_power(&water_heater(), 24.0),
            -0.204_166_7,
            epsilon = 1e-6
        );
        assert_relative_eq!(baseline_power(&fridge(), 2.5), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn baseline_power_sign_tracks_ambient_minus_setpoint() {
        for p in [fridge(), water_heater(), heating_pump(), cooling_pump()] {
            assert!(baseline_power(&p, p.setpoint + 3.0) > 0.0);
            assert!(baseline_power(&p, p.setpoint - 3.0) < 0.0);
        }
    }

    #[test]
    fn comfort_band_is_closed() {
        let p = fridge();
        assert!(in_comfort_band(&p, 1.0));
        assert!(in_comfort_band(&p, 4.0));
        assert!(in_comfort_band(&p, 2.5));
        assert!(!in_comfort_band(&p, 0.999_999));
        assert!(!in_comfort_band(&p, 4.000_001));
    }

    #[test]
    fn availability_heating_pump_held_off_above_band() {
        // Ambient 25 degC sits above the 21.5..22.5 band: the pump may not
        // operate, so it is unavailable for charging and stays off.
        let p = heating_pump();
        let s = state(22.0, false);
        let a = availability(&s, &p, 25.0, MINUTE);
        assert!(!a.charge);
        assert!(!a.forced_toggle, "an off disqualified device stays off");

        // If it somehow is on, it must be switched off.
        let s_on = state(22.0, true);
        let a_on = availability(&s_on, &p, 25.0, MINUTE);
        assert!(a_on.forced_toggle, "an on disqualified device is forced off");
    }

    #[test]
    fn availability_mid_band_device_is_fully_available() {
        let p = fridge();
        let s = state(2.5, true);
        let a = availability(&s, &p, 24.0, MINUTE);
        assert!(a.charge);
        assert!(a.discharge);
        assert!(!a.forced_toggle);
    }

    #[test]
    fn availability_forces_off_at_the_lower_edge() {
        // Cooling one more minute from 1.001 degC would cross the lower
        // edge: the thermostat must switch off, and keeping the compressor
        // running is no longer an option; idling is.
        let p = fridge();
        let s = state(1.001, true);
        let a = availability(&s, &p, 24.0, MINUTE);
        assert!(a.forced_toggle);
        assert!(!a.charge, "one more minute of cooling would exit the band");
        assert!(a.discharge);
    }

    #[test]
    fn availability_forces_on_at_the_upper_edge() {
        let p = fridge();
        let s = state(3.999, false);
        let a = availability(&s, &p, 24.0, MINUTE);
        assert!(a.forced_toggle, "warming past the upper edge forces the fridge on");
        assert!(!a.discharge, "idling would drift past the upper edge");
        assert!(a.charge);
    }

    #[test]
    fn availability_out_of_band_device_cannot_be_dispatched() {
        let p = fridge();
        let below = state(0.5, false);
        let a = availability(&below, &p, 24.0, MINUTE);
        assert!(!a.charge && !a.discharge, "out of band is never dispatchable");
        assert!(!a.forced_toggle, "off and already warming back toward the band");

        let above = state(4.3, false);
        let a = availability(&above, &p, 24.0, MINUTE);
        assert!(!a.charge && !a.discharge);
        assert!(a.forced_toggle, "must switch on to pull back into the band");
    }

    #[test]
    fn availability_respects_short_cycle_lock() {
        let mut p = fridge();
        p.tau = 5;
        let s = TclState {
            temperature: 2.5,
            on: false,
            steps_since_switch: 3,
        };
        let a = availability(&s, &p, 24.0, MINUTE);
        assert!(!a.charge, "a locked off device cannot be switched on");
        assert!(a.discharge, "keeping it off needs no toggle");

        let unlocked = TclState {
            steps_since_switch: 5,
            ..s
        };
        assert!(availability(&unlocked, &p, 24.0, MINUTE).charge);
    }

    #[test]
    fn time_to_boundary_frozen_value() {
        // Off refrigerator at 2.5 degC drifting toward 24 degC ambient:
        // 54 * ln(21.5 / 20) hours to the 4.0 degC edge.
        let p = fridge();
        let s = state(2.5, false);
        let t = time_to_boundary(&s, &p, 24.0);
        assert_relative_eq!(t, 3.905_316, epsilon = 1e-5);
    }

    #[test]
    fn time_to_boundary_edge_cases() {
        let p = fridge();
        // Already at the target edge.
        assert_eq!(time_to_boundary(&state(4.0, false), &p, 24.0), 0.0);
        // Asymptote inside the band: never exits.
        assert_eq!(time_to_boundary(&state(2.5, false), &p, 3.0), f64::INFINITY);
        // On-state asymptote far below: finite time to the lower edge.
        let t = time_to_boundary(&state(2.5, true), &p, 24.0);
        assert!(t.is_finite() && t > 0.0);
    }

    #[test]
    fn time_to_boundary_matches_forward_simulation() {
        // Analytic crossing time vs stepping the map, within one step.
        let cases = [
            (fridge(), state(2.5, false), 24.0),
            (fridge(), state(3.2, true), 24.0),
            (water_heater(), state(48.5, true), 24.0),
            (cooling_pump(), state(24.0, true), 30.0),
            (heating_pump(), state(22.0, false), 5.0),
        ];
        for (p, s0, ambient) in cases {
            let t = time_to_boundary(&s0, &p, ambient);
            assert!(t.is_finite());
            let h = MINUTE;
            let mut s = s0;
            let mut steps = 0u64;
            while in_comfort_band(&p, s.temperature) {
                s.temperature = step_temperature(&s, &p, ambient, 0.0, h);
                steps += 1;
                assert!(steps < 1_000_000, "no crossing found");
            }
            let sim_hours = steps as f64 * h;
            assert!(
                (sim_hours - t).abs() <= h + 1e-9,
                "analytic {t} h vs simulated {sim_hours} h for {p:?}"
            );
        }
    }

    #[test]
    fn sample_disturbance_zero_variance_is_exactly_zero() {
        let model = DisturbanceModel { variance: 0.0 };
        let mut rng = rng_from_seed(7);
        for _ in 0..100 {
            assert_eq!(sample_disturbance(&model, &mut rng), 0.0);
        }
    }

    #[test]
    fn sample_disturbance_moments() {
        let model = DisturbanceModel { variance: 0.05 };
        model.validate().unwrap();
        let mut rng = rng_from_seed(12345);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let w = sample_disturbance(&model, &mut rng);
            sum += w;
            sum_sq += w * w;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 1e-3, "sample mean {mean}");
        assert!((var - 0.05).abs() < 1e-3, "sample variance {var}");
    }

    #[test]
    fn disturbance_model_rejects_negative_variance() {
        assert!(DisturbanceModel { variance: -0.1 }.validate().is_err());
        assert!(DisturbanceModel { variance: f64::NAN }.validate().is_err());
    }

    #[test]
    fn generate_population_is_deterministic() {
        let spec = PopulationSpec {
            groups: vec![
                PopulationGroup {
                    params: fridge(),
                    count: 50,
                },
                PopulationGroup {
                    params: water_heater(),
                    count: 30,
                },
            ],
            master_seed: 99,
        };
        let a = generate_population(&spec).unwrap();
        let b = generate_population(&spec).unwrap();
        assert_eq!(a.len(), 80);
        for (da, db) in a.devices.iter().zip(&b.devices) {
            assert_eq!(da.state, db.state);
            assert_eq!(da.group, db.group);
        }
    }

    #[test]
    fn generate_population_draws_within_band_and_balanced() {
        let spec = PopulationSpec {
            groups: vec![PopulationGroup {
                params: fridge(),
                count: 3000,
            }],
            master_seed: 7,
        };
        let pop = generate_population(&spec).unwrap();
        let mut on = 0usize;
        for d in &pop.devices {
            assert!(in_comfort_band(&d.params, d.state.temperature));
            assert_eq!(d.state.steps_since_switch, d.params.tau);
            on += d.state.on as usize;
        }
        let frac = on as f64 / 3000.0;
        assert!((frac - 0.5).abs() < 0.05, "on fraction {frac}");
    }

    #[test]
    fn generate_population_rejects_bad_specs() {
        assert!(generate_population(&PopulationSpec {
            groups: vec![],
            master_seed: 0
        })
        .is_err());
        assert!(generate_population(&PopulationSpec {
            groups: vec![PopulationGroup {
                params: fridge(),
                count: 0
            }],
            master_seed: 0
        })
        .is_err());
        let mut bad = fridge();
        bad.p_nom = -0.3; // cooling device with heating sign
        assert!(generate_population(&PopulationSpec {
            groups: vec![PopulationGroup {
                params: bad,
                count: 1
            }],
            master_seed: 0
        })
        .is_err());
    }

    #[test]
    fn params_validation_catches_sign_mismatch() {
        let mut p = water_heater();
        assert!(p.validate().is_ok());
        p.p_nom = 4.5;
        assert!(p.validate().is_err());
        let mut q = fridge();
        q.r_th = 0.0;
        assert!(q.validate().is_err());
    }
}
