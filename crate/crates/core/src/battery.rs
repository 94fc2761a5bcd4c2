//! Battery energy bookkeeping with a symmetric efficiency split.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BatterySpec;

/// Allowed SOC overshoot at a step boundary.
pub const SOC_TOLERANCE: f64 = 1e-9;

/// Slack on power-rating checks, absorbing rounding in headroom arithmetic.
const RATE_TOLERANCE_KW: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    /// Fraction of nominal capacity.
    pub soc: f64,
    pub energy_kwh: f64,
}

impl BatteryState {
    pub fn at_soc(soc: f64, spec: &BatterySpec) -> Self {
        BatteryState {
            soc,
            energy_kwh: soc * spec.capacity_kwh,
        }
    }

    /// Starting state: `initial_soc` if configured, else the bottom of the band.
    pub fn initial(spec: &BatterySpec) -> Self {
        Self::at_soc(spec.initial_soc.unwrap_or(spec.soc_min), spec)
    }

    /// Largest terminal charging power (kW) for one step of `dt_h` hours.
    pub fn charge_headroom_kw(&self, spec: &BatterySpec, dt_h: f64) -> f64 {
        if spec.capacity_kwh <= 0.0 {
            return 0.0;
        }
        let room_kwh = spec.max_energy_kwh() - self.energy_kwh;
        let by_energy = room_kwh / (spec.one_way_efficiency() * dt_h);
        by_energy.min(spec.max_charge_kw).max(0.0)
    }

    /// Largest terminal discharging power (kW) for one step of `dt_h` hours.
    pub fn discharge_headroom_kw(&self, spec: &BatterySpec, dt_h: f64) -> f64 {
        if spec.capacity_kwh <= 0.0 {
            return 0.0;
        }
        let avail_kwh = self.energy_kwh - spec.min_energy_kwh();
        let by_energy = avail_kwh * spec.one_way_efficiency() / dt_h;
        by_energy.min(spec.max_discharge_kw).max(0.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BatteryError {
    #[error("negative battery power (charge {charge_kw} kW, discharge {discharge_kw} kW)")]
    NegativePower { charge_kw: f64, discharge_kw: f64 },
    #[error("simultaneous charge ({charge_kw} kW) and discharge ({discharge_kw} kW)")]
    Simultaneous { charge_kw: f64, discharge_kw: f64 },
    #[error("{which} power {power_kw} kW exceeds rating {limit_kw} kW")]
    RateExceeded {
        which: &'static str,
        power_kw: f64,
        limit_kw: f64,
    },
    #[error("state of charge {soc} left the band [{soc_min}, {soc_max}]")]
    SocOutOfBand { soc: f64, soc_min: f64, soc_max: f64 },
}

/// Advances the battery by one step.
///
/// Terminal charging power is stored at `√η` and terminal discharge draws
/// `1/√η` from storage, so a full cycle returns the roundtrip efficiency.
/// There is no self-discharge. Callers clamp powers to headroom first; a
/// result outside the SOC band is reported as an error.
pub fn step_battery(
    state: BatteryState,
    charge_kw: f64,
    discharge_kw: f64,
    dt_h: f64,
    spec: &BatterySpec,
) -> Result<BatteryState, BatteryError> {
    if !(charge_kw >= 0.0 && discharge_kw >= 0.0) {
        return Err(BatteryError::NegativePower {
            charge_kw,
            discharge_kw,
        });
    }
    if charge_kw > 0.0 && discharge_kw > 0.0 {
        return Err(BatteryError::Simultaneous {
            charge_kw,
            discharge_kw,
        });
    }
    if charge_kw > spec.max_charge_kw + RATE_TOLERANCE_KW {
        return Err(BatteryError::RateExceeded {
            which: "charge",
            power_kw: charge_kw,
            limit_kw: spec.max_charge_kw,
        });
    }
    if discharge_kw > spec.max_discharge_kw + RATE_TOLERANCE_KW {
        return Err(BatteryError::RateExceeded {
            which: "discharge",
            power_kw: discharge_kw,
            limit_kw: spec.max_discharge_kw,
        });
    }
    if charge_kw == 0.0 && discharge_kw == 0.0 {
        return Ok(state);
    }

    let eta = spec.one_way_efficiency();
    let energy_kwh = state.energy_kwh + charge_kw * eta * dt_h - discharge_kw / eta * dt_h;
    let soc = energy_kwh / spec.capacity_kwh;
    if !(soc >= spec.soc_min - SOC_TOLERANCE && soc <= spec.soc_max + SOC_TOLERANCE) {
        return Err(BatteryError::SocOutOfBand {
            soc,
            soc_min: spec.soc_min,
            soc_max: spec.soc_max,
        });
    }
    Ok(BatteryState { soc, energy_kwh })
}
