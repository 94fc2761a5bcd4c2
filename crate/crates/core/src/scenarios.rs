//! Stress scenarios applied to a base profile and configuration, and the
//! comparative matrix that runs them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::BatteryState;
use crate::dispatch::{price_threshold, run_horizon, DispatchError, Trace};
use crate::metrics::{percent_change, summarize, MetricsError, SimulationReport};
use crate::model::MicrogridConfig;
use crate::profiles::StepInput;

/// Outage length of the built-in grid-failure scenario (h).
pub const S3_OUTAGE_HOURS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    Base,
    S1,
    S2,
    S3,
    S4,
    Custom(String),
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioId::Base => f.write_str("base"),
            ScenarioId::S1 => f.write_str("S1"),
            ScenarioId::S2 => f.write_str("S2"),
            ScenarioId::S3 => f.write_str("S3"),
            ScenarioId::S4 => f.write_str("S4"),
            ScenarioId::Custom(name) => f.write_str(name),
        }
    }
}

impl FromStr for ScenarioId {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "S1" | "s1" => ScenarioId::S1,
            "S2" | "s2" => ScenarioId::S2,
            "S3" | "s3" => ScenarioId::S3,
            "S4" | "s4" => ScenarioId::S4,
            "base" => ScenarioId::Base,
            other => ScenarioId::Custom(other.to_string()),
        })
    }
}

/// Where an outage window begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutageStart {
    Step(usize),
    /// First step whose price is above the horizon's threshold; the step with
    /// the highest price when none is.
    FirstPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutageWindow {
    pub start: OutageStart,
    pub duration_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: ScenarioId,
    pub demand_multiplier: f64,
    pub pv_multiplier: f64,
    pub wind_multiplier: f64,
    pub outage_window: Option<OutageWindow>,
    pub fuel_price_multiplier: f64,
    /// Replaces the price column outright (currency/kWh).
    #[serde(default)]
    pub price_series: Option<Vec<f64>>,
}

impl Scenario {
    pub fn identity(id: ScenarioId) -> Self {
        Scenario {
            id,
            demand_multiplier: 1.0,
            pv_multiplier: 1.0,
            wind_multiplier: 1.0,
            outage_window: None,
            fuel_price_multiplier: 1.0,
            price_series: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("{0} is not a built-in scenario")]
    NotBuiltin(ScenarioId),
    #[error("multiplier {name} must be > 0 (got {value})")]
    BadMultiplier { name: &'static str, value: f64 },
    #[error("outage window [{start}, {end}) does not fit a horizon of {horizon} steps")]
    OutageOutOfRange { start: usize, end: usize, horizon: usize },
    #[error("outage of {hours} h is not a whole number of {step_hours} h steps")]
    FractionalOutage { hours: f64, step_hours: f64 },
    #[error("price series has {got} entries, horizon has {horizon}")]
    PriceSeriesLength { got: usize, horizon: usize },
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Number of steps covering `hours`; the duration must be a whole number of
/// steps.
pub fn hours_to_steps(hours: f64, step_hours: f64) -> Result<usize, ScenarioError> {
    let n = hours / step_hours;
    if !(n >= 0.0) || (n - n.round()).abs() > 1e-9 {
        return Err(ScenarioError::FractionalOutage { hours, step_hours });
    }
    Ok(n.round() as usize)
}

/// Built-in scenarios: S1 demand +5 %, S2 PV −20 % and wind −40 %, S3 a 6 h
/// outage from the first peak-price step, S4 fuel price doubled.
pub fn builtin_scenario(id: ScenarioId, step_hours: f64) -> Result<Scenario, ScenarioError> {
    let mut s = Scenario::identity(id.clone());
    match id {
        ScenarioId::S1 => s.demand_multiplier = 1.05,
        ScenarioId::S2 => {
            s.pv_multiplier = 0.80;
            s.wind_multiplier = 0.60;
        }
        ScenarioId::S3 => {
            s.outage_window = Some(OutageWindow {
                start: OutageStart::FirstPeak,
                duration_steps: hours_to_steps(S3_OUTAGE_HOURS, step_hours)?,
            });
        }
        ScenarioId::S4 => s.fuel_price_multiplier = 2.0,
        other => return Err(ScenarioError::NotBuiltin(other)),
    }
    Ok(s)
}

pub fn all_builtins(step_hours: f64) -> Result<Vec<Scenario>, ScenarioError> {
    [ScenarioId::S1, ScenarioId::S2, ScenarioId::S3, ScenarioId::S4]
        .into_iter()
        .map(|id| builtin_scenario(id, step_hours))
        .collect()
}

fn resolve_start(start: OutageStart, inputs: &[StepInput], config: &MicrogridConfig) -> Result<usize, ScenarioError> {
    match start {
        OutageStart::Step(n) => Ok(n),
        OutageStart::FirstPeak => {
            if inputs.is_empty() {
                return Ok(0);
            }
            let prices: Vec<f64> = inputs.iter().map(|s| s.price).collect();
            let threshold = price_threshold(&prices, &config.ems)?;
            if let Some(i) = inputs.iter().position(|s| threshold.intent(s) == crate::dispatch::Intent::Discharge) {
                return Ok(i);
            }
            let mut best = 0;
            for (i, p) in prices.iter().enumerate() {
                if *p > prices[best] {
                    best = i;
                }
            }
            Ok(best)
        }
    }
}

/// Applies a scenario to base inputs and configuration.
///
/// Demand, PV and wind columns are scaled pointwise, the grid is forced down
/// inside the outage window, and the diesel fuel price is scaled. Everything
/// else is left bit-identical.
pub fn apply_scenario(
    base_inputs: &[StepInput],
    base_config: &MicrogridConfig,
    s: &Scenario,
) -> Result<(Vec<StepInput>, MicrogridConfig), ScenarioError> {
    for (name, value) in [
        ("demand_multiplier", s.demand_multiplier),
        ("pv_multiplier", s.pv_multiplier),
        ("wind_multiplier", s.wind_multiplier),
        ("fuel_price_multiplier", s.fuel_price_multiplier),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ScenarioError::BadMultiplier { name, value });
        }
    }

    let window = match s.outage_window {
        Some(w) => {
            let start = resolve_start(w.start, base_inputs, base_config)?;
            let end = start + w.duration_steps;
            if end > base_inputs.len() {
                return Err(ScenarioError::OutageOutOfRange {
                    start,
                    end,
                    horizon: base_inputs.len(),
                });
            }
            Some(start..end)
        }
        None => None,
    };
    if let Some(prices) = &s.price_series {
        if prices.len() != base_inputs.len() {
            return Err(ScenarioError::PriceSeriesLength {
                got: prices.len(),
                horizon: base_inputs.len(),
            });
        }
    }

    let scale = |v: f64, m: f64| if m == 1.0 { v } else { v * m };
    let inputs = base_inputs
        .iter()
        .enumerate()
        .map(|(i, step)| {
            let mut out = *step;
            out.demand_kw = scale(step.demand_kw, s.demand_multiplier);
            out.pv_kw = scale(step.pv_kw, s.pv_multiplier);
            out.wind_kw = scale(step.wind_kw, s.wind_multiplier);
            if window.as_ref().is_some_and(|w| w.contains(&i)) {
                out.grid_available = false;
            }
            if let Some(prices) = &s.price_series {
                out.price = prices[i];
            }
            out
        })
        .collect();

    let mut config = base_config.clone();
    config.diesel.fuel_cost_per_kwh = scale(config.diesel.fuel_cost_per_kwh, s.fuel_price_multiplier);
    Ok((inputs, config))
}

/// Metrics compared in the scenario matrix, in column order.
pub const DELTA_METRICS: [&str; 12] = [
    "operating_cost",
    "npc",
    "lcoe",
    "renewable_fraction",
    "peak_grid_import_kw",
    "imported_kwh",
    "exported_kwh",
    "dg_kwh",
    "unserved_kwh",
    "curtailed_kwh",
    "uptime_fraction",
    "co2",
];

fn metric_value(report: &SimulationReport, name: &str) -> Option<f64> {
    let e = &report.energy;
    Some(match name {
        "operating_cost" => report.economics.operating_cost,
        "npc" => report.economics.npc,
        "lcoe" => return report.economics.lcoe,
        "renewable_fraction" => return report.economics.renewable_fraction,
        "peak_grid_import_kw" => report.peak_grid_import_kw,
        "imported_kwh" => e.imported_kwh,
        "exported_kwh" => e.exported_kwh,
        "dg_kwh" => e.dg_kwh,
        "unserved_kwh" => e.unserved_kwh,
        "curtailed_kwh" => e.curtailed_kwh,
        "uptime_fraction" => report.reliability.uptime_fraction,
        "co2" => report.emissions.co2,
        _ => return None,
    })
}

/// Percent change per [`DELTA_METRICS`] entry; `None` where the base value is
/// zero or undefined.
pub fn report_deltas(base: &SimulationReport, new: &SimulationReport) -> Vec<Option<f64>> {
    DELTA_METRICS
        .iter()
        .map(|m| {
            let b = metric_value(base, m)?;
            let n = metric_value(new, m)?;
            percent_change(b, n).ok()
        })
        .collect()
}

/// A simulated run: inputs actually used, its trace and its report.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub inputs: Vec<StepInput>,
    pub config: MicrogridConfig,
    pub trace: Trace,
    pub report: SimulationReport,
}

pub fn simulate(inputs: Vec<StepInput>, config: MicrogridConfig) -> Result<Run, ScenarioError> {
    let trace = run_horizon(&inputs, BatteryState::initial(&config.battery), &config)?;
    let report = summarize(&trace, &inputs, &config)?;
    Ok(Run {
        inputs,
        config,
        trace,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub id: ScenarioId,
    pub run: Run,
    /// Aligned with [`DELTA_METRICS`].
    pub deltas: Vec<Option<f64>>,
}

#[derive(Debug)]
pub struct Matrix {
    pub base: Run,
    pub outcomes: BTreeMap<ScenarioId, Result<ScenarioOutcome, ScenarioError>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

fn run_one(base: &Run, base_inputs: &[StepInput], base_config: &MicrogridConfig, s: &Scenario) -> Result<ScenarioOutcome, ScenarioError> {
    let (inputs, config) = apply_scenario(base_inputs, base_config, s)?;
    let run = simulate(inputs, config)?;
    let deltas = report_deltas(&base.report, &run.report);
    Ok(ScenarioOutcome {
        id: s.id.clone(),
        run,
        deltas,
    })
}

/// Runs the base case and every scenario. A failing scenario is recorded in
/// its slot and does not stop its siblings. Results are keyed by id, so the
/// map is the same whichever execution order is used.
pub fn run_matrix(
    base_inputs: &[StepInput],
    base_config: &MicrogridConfig,
    scenarios: &[Scenario],
    execution: Execution,
) -> Result<Matrix, ScenarioError> {
    let base = simulate(base_inputs.to_vec(), base_config.clone())?;
    let results: Vec<(ScenarioId, Result<ScenarioOutcome, ScenarioError>)> = match execution {
        Execution::Sequential => scenarios
            .iter()
            .map(|s| (s.id.clone(), run_one(&base, base_inputs, base_config, s)))
            .collect(),
        Execution::Parallel => scenarios
            .par_iter()
            .map(|s| (s.id.clone(), run_one(&base, base_inputs, base_config, s)))
            .collect(),
    };
    Ok(Matrix {
        base,
        outcomes: results.into_iter().collect(),
    })
}
