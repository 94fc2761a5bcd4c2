//! Rule-based energy management: price-threshold peak shaving combined with
//! grid interaction and islanded diesel backup.
//!
//! Every step resolves into a [`DispatchDecision`] whose terms balance:
//!
//! ```text
//! pv_used + wind_used + battery_discharge + dg + grid_import
//!     = (demand − unserved) + battery_charge + grid_export
//! ```
//!
//! Priority order, per step:
//!
//! * grid up, price at or below threshold: surplus charges the battery, then
//!   exports, then curtails; a deficit drains the battery, then imports.
//! * grid up, price above threshold: a deficit drains the battery, then
//!   imports; surplus exports (the battery never charges), then curtails.
//! * grid down: surplus charges the battery, then curtails; a deficit drains
//!   the battery, then runs the diesel, and the rest is unserved.
//!
//! Surplus and deficit are evaluated with zero battery contribution.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{step_battery, BatteryError, BatteryState};
use crate::model::{BatterySpec, EmsConfig, MicrogridConfig, ThresholdMode};
use crate::profiles::StepInput;

/// Largest tolerated power-balance residual (kW).
pub const BALANCE_TOLERANCE_KW: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum DispatchError {
    #[error("empty horizon")]
    EmptyHorizon,
    #[error("price percentile requested over an empty price sequence")]
    EmptyPrices,
    #[error("ems.{0} is not set for the selected threshold mode")]
    MissingThreshold(&'static str),
    #[error("step {step}: {source}")]
    Battery {
        step: usize,
        #[source]
        source: BatteryError,
    },
    #[error("step {step}: power balance residual {residual_kw} kW")]
    Imbalance { step: usize, residual_kw: f64 },
}

/// Resolved peak-shaving threshold for a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Threshold {
    /// Currency per kWh, compared against the step price.
    Price(f64),
    /// kW, compared against the step demand.
    Load(f64),
}

impl Threshold {
    pub fn value(&self) -> f64 {
        match *self {
            Threshold::Price(v) | Threshold::Load(v) => v,
        }
    }

    pub fn intent(&self, input: &StepInput) -> Intent {
        match *self {
            Threshold::Price(t) => shaving_intent(input.price, t),
            Threshold::Load(t) => shaving_intent(input.demand_kw, t),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Price(v) => write!(f, "{v} currency/kWh (price)"),
            Threshold::Load(v) => write!(f, "{v} kW (load)"),
        }
    }
}

/// Lower-interpolation percentile: the element at `floor(p·(n−1))` of the
/// sorted sequence.
pub fn percentile_lower(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).floor() as usize;
    Some(sorted[rank])
}

pub fn price_threshold(prices: &[f64], ems: &EmsConfig) -> Result<Threshold, DispatchError> {
    match ems.threshold_mode {
        ThresholdMode::FixedPrice => ems
            .fixed_threshold
            .map(Threshold::Price)
            .ok_or(DispatchError::MissingThreshold("fixed_threshold")),
        ThresholdMode::PricePercentile => {
            let p = ems.percentile.ok_or(DispatchError::MissingThreshold("percentile"))?;
            percentile_lower(prices, p)
                .map(Threshold::Price)
                .ok_or(DispatchError::EmptyPrices)
        }
        ThresholdMode::LoadThreshold => ems
            .load_threshold_kw
            .map(Threshold::Load)
            .ok_or(DispatchError::MissingThreshold("load_threshold_kw")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intent {
    Charge,
    Discharge,
}

/// Discharge when the value is strictly above the threshold, charge otherwise.
pub fn shaving_intent(price: f64, threshold: f64) -> Intent {
    if price > threshold {
        Intent::Discharge
    } else {
        Intent::Charge
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Permit,
    Decline,
}

/// Declines charging at or above `soc_max` and discharging at or below
/// `soc_min`.
pub fn soc_gate(state: &BatteryState, intent: Intent, spec: &BatterySpec) -> Gate {
    let declined = match intent {
        Intent::Charge => state.soc >= spec.soc_max,
        Intent::Discharge => state.soc <= spec.soc_min,
    };
    if declined {
        Gate::Decline
    } else {
        Gate::Permit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurplusResult {
    /// Signed, kW.
    pub surplus_kw: f64,
    /// Signed, kWh over the step.
    pub surplus_kwh: f64,
}

/// Renewable plus available battery output minus demand.
pub fn surplus(input: &StepInput, battery_available_discharge_kw: f64, dt_h: f64) -> SurplusResult {
    let surplus_kw = input.pv_kw + input.wind_kw + battery_available_discharge_kw - input.demand_kw;
    SurplusResult {
        surplus_kw,
        surplus_kwh: surplus_kw * dt_h,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    #[default]
    GridConnected,
    Islanded,
}

impl GridMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GridMode::GridConnected => "grid-connected",
            GridMode::Islanded => "islanded",
        }
    }
}

/// Power allocation for one step. All fields are non-negative kW.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchDecision {
    pub pv_used_kw: f64,
    pub wind_used_kw: f64,
    pub curtailed_kw: f64,
    pub battery_charge_kw: f64,
    pub battery_discharge_kw: f64,
    pub dg_kw: f64,
    pub grid_import_kw: f64,
    pub grid_export_kw: f64,
    pub unserved_kw: f64,
    pub mode: GridMode,
}

impl DispatchDecision {
    pub fn served_kw(&self, input: &StepInput) -> f64 {
        input.demand_kw - self.unserved_kw
    }

    /// Supply side minus load side of the balance equation (kW).
    pub fn balance_residual_kw(&self, input: &StepInput) -> f64 {
        let supply = self.pv_used_kw + self.wind_used_kw + self.battery_discharge_kw + self.dg_kw + self.grid_import_kw;
        let load = self.served_kw(input) + self.battery_charge_kw + self.grid_export_kw;
        supply - load
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub decision: DispatchDecision,
    /// Battery state at the end of the step.
    pub state: BatteryState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub threshold: Threshold,
    pub steps: Vec<TraceStep>,
}

/// Applies the diesel minimum-load rule to an islanded deficit. Returns the
/// adjusted `(dg, discharge, extra_curtailment)`.
///
/// Below its minimum load the generator is pushed up to the minimum and the
/// excess is absorbed first by backing off the battery and then by curtailing
/// renewables. When neither can absorb it the generator follows the residual.
fn apply_min_loading(dg: f64, discharge: f64, renewable: f64, min_load: f64) -> (f64, f64, f64) {
    if dg <= 0.0 || dg >= min_load {
        return (dg, discharge, 0.0);
    }
    let excess = min_load - dg;
    if excess > discharge + renewable {
        return (dg, discharge, 0.0);
    }
    let backoff = excess.min(discharge);
    let curtail = excess - backoff;
    (min_load, discharge - backoff, curtail)
}

/// Splits curtailment across sources, PV first.
fn split_renewables(input: &StepInput, curtailed: f64) -> (f64, f64) {
    let pv_cut = curtailed.min(input.pv_kw);
    let wind_cut = (curtailed - pv_cut).min(input.wind_kw);
    ((input.pv_kw - pv_cut).max(0.0), (input.wind_kw - wind_cut).max(0.0))
}

/// Dispatches one step and advances the battery.
pub fn dispatch_step(
    state: &BatteryState,
    input: &StepInput,
    threshold: Threshold,
    config: &MicrogridConfig,
) -> Result<(DispatchDecision, BatteryState), DispatchError> {
    let dt = config.step_hours;
    let spec = &config.battery;
    let renewable = input.renewable_kw();
    let net = surplus(input, 0.0, dt).surplus_kw;

    let charge_room = match soc_gate(state, Intent::Charge, spec) {
        Gate::Permit => state.charge_headroom_kw(spec, dt),
        Gate::Decline => 0.0,
    };
    let discharge_room = match soc_gate(state, Intent::Discharge, spec) {
        Gate::Permit => state.discharge_headroom_kw(spec, dt),
        Gate::Decline => 0.0,
    };

    let mut d = DispatchDecision::default();

    if input.grid_available {
        d.mode = GridMode::GridConnected;
        if net >= 0.0 {
            let extra = net;
            d.battery_charge_kw = match threshold.intent(input) {
                Intent::Charge => extra.min(charge_room),
                Intent::Discharge => 0.0,
            };
            let left = extra - d.battery_charge_kw;
            d.grid_export_kw = left.min(config.grid.export_limit_kw);
            d.curtailed_kw = left - d.grid_export_kw;
        } else {
            let deficit = -net;
            d.battery_discharge_kw = deficit.min(discharge_room);
            let left = deficit - d.battery_discharge_kw;
            d.grid_import_kw = left.min(config.grid.import_limit_kw);
            d.unserved_kw = left - d.grid_import_kw;
        }
    } else {
        d.mode = GridMode::Islanded;
        if net >= 0.0 {
            d.battery_charge_kw = net.min(charge_room);
            d.curtailed_kw = net - d.battery_charge_kw;
        } else {
            let deficit = -net;
            let discharge = deficit.min(discharge_room);
            let dg = (deficit - discharge).min(config.diesel.capacity_kw);
            let min_load = config.diesel.capacity_kw * config.diesel.min_loading_fraction;
            let (dg, discharge, curtail) = apply_min_loading(dg, discharge, renewable, min_load);
            d.battery_discharge_kw = discharge;
            d.dg_kw = dg;
            d.curtailed_kw = curtail;
            d.unserved_kw = (deficit - discharge - dg).max(0.0);
        }
    }

    let (pv_used, wind_used) = split_renewables(input, d.curtailed_kw);
    d.pv_used_kw = pv_used;
    d.wind_used_kw = wind_used;

    let next = step_battery(*state, d.battery_charge_kw, d.battery_discharge_kw, dt, spec)
        .map_err(|source| DispatchError::Battery {
            step: input.index,
            source,
        })?;
    Ok((d, next))
}

/// Runs the EMS over a whole horizon with a threshold resolved from the
/// horizon's price sequence.
pub fn run_horizon(
    inputs: &[StepInput],
    initial: BatteryState,
    config: &MicrogridConfig,
) -> Result<Trace, DispatchError> {
    if inputs.is_empty() {
        return Err(DispatchError::EmptyHorizon);
    }
    let prices: Vec<f64> = inputs.iter().map(|s| s.price).collect();
    let threshold = price_threshold(&prices, &config.ems)?;
    run_horizon_with_threshold(inputs, initial, threshold, config)
}

pub fn run_horizon_with_threshold(
    inputs: &[StepInput],
    initial: BatteryState,
    threshold: Threshold,
    config: &MicrogridConfig,
) -> Result<Trace, DispatchError> {
    if inputs.is_empty() {
        return Err(DispatchError::EmptyHorizon);
    }
    let mut state = initial;
    let mut steps = Vec::with_capacity(inputs.len());
    for input in inputs {
        let (decision, next) = dispatch_step(&state, input, threshold, config)?;
        let residual_kw = decision.balance_residual_kw(input);
        if residual_kw.abs() > BALANCE_TOLERANCE_KW {
            return Err(DispatchError::Imbalance {
                step: input.index,
                residual_kw,
            });
        }
        state = next;
        steps.push(TraceStep { decision, state });
    }
    Ok(Trace { threshold, steps })
}
