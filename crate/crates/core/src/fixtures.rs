//! Shared unit-test fixtures: the four benchmark device classes.

use crate::thermal::{DeviceType, TclParams};

/// Domestic refrigerator: R=90 degC/kW, C=0.6 kWh/degC, P=0.3 kW, eta=2,
/// setpoint 2.5 degC, half-band 1.5 degC.
pub(crate) fn fridge() -> TclParams {
    TclParams {
        r_th: 90.0,
        c_th: 0.6,
        p_nom: 0.3,
        cop: 2.0,
        setpoint: 2.5,
        half_band: 1.5,
        device_type: DeviceType::Cooling,
        tau: 1,
    }
}

/// Electric water heater: R=120, C=0.4, P=-4.5 kW, eta=1, setpoint 48.5,
/// half-band 3.
pub(crate) fn water_heater() -> TclParams {
    TclParams {
        r_th: 120.0,
        c_th: 0.4,
        p_nom: -4.5,
        cop: 1.0,
        setpoint: 48.5,
        half_band: 3.0,
        device_type: DeviceType::Heating,
        tau: 1,
    }
}

/// Reversible heat pump, heating mode: R=2, C=2, P=-5.6 kW, eta=3.5,
/// setpoint 22, half-band 0.5.
pub(crate) fn heating_pump() -> TclParams {
    TclParams {
        r_th: 2.0,
        c_th: 2.0,
        p_nom: -5.6,
        cop: 3.5,
        setpoint: 22.0,
        half_band: 0.5,
        device_type: DeviceType::Heating,
        tau: 1,
    }
}

/// Reversible heat pump, cooling mode: R=2, C=2, P=5.6 kW, eta=2.5,
/// setpoint 24, half-band 0.5.
pub(crate) fn cooling_pump() -> TclParams {
    TclParams {
        r_th: 2.0,
        c_th: 2.0,
        p_nom: 5.6,
        cop: 2.5,
        setpoint: 24.0,
        half_band: 0.5,
        device_type: DeviceType::Cooling,
        tau: 1,
    }
}
