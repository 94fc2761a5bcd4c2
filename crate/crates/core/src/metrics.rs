//! Energy, reliability, economic and emission metrics computed from a
//! dispatch trace.
//!
//! Energy totals cover the simulated horizon. Yearly figures (operating cost,
//! emissions) scale the horizon by `8760 h / horizon hours`, so a one-day
//! trace is multiplied by 365.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::{Threshold, Trace, TraceStep};
use crate::model::{EmissionFactors, MicrogridConfig, Pollutant};
use crate::profiles::StepInput;

pub const SCHEMA_VERSION: u32 = 1;
pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Unserved power at or below this is treated as zero when counting uptime.
pub const UNSERVED_EPS_KW: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trace has {trace} steps but there are {inputs} inputs")]
    LengthMismatch { trace: usize, inputs: usize },
    #[error("no energy was served")]
    ZeroServed,
    #[error("percent change from a zero base")]
    ZeroBase,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyTotals {
    pub demand_kwh: f64,
    pub served_kwh: f64,
    pub unserved_kwh: f64,
    pub imported_kwh: f64,
    pub exported_kwh: f64,
    pub dg_kwh: f64,
    /// Available PV generation, before curtailment.
    pub pv_kwh: f64,
    /// Available wind generation, before curtailment.
    pub wind_kwh: f64,
    pub curtailed_kwh: f64,
    pub battery_charge_kwh: f64,
    pub battery_discharge_kwh: f64,
}

impl EnergyTotals {
    pub fn scaled(&self, k: f64) -> Self {
        EnergyTotals {
            demand_kwh: self.demand_kwh * k,
            served_kwh: self.served_kwh * k,
            unserved_kwh: self.unserved_kwh * k,
            imported_kwh: self.imported_kwh * k,
            exported_kwh: self.exported_kwh * k,
            dg_kwh: self.dg_kwh * k,
            pv_kwh: self.pv_kwh * k,
            wind_kwh: self.wind_kwh * k,
            curtailed_kwh: self.curtailed_kwh * k,
            battery_charge_kwh: self.battery_charge_kwh * k,
            battery_discharge_kwh: self.battery_discharge_kwh * k,
        }
    }

    pub fn plus(&self, o: &EnergyTotals) -> Self {
        EnergyTotals {
            demand_kwh: self.demand_kwh + o.demand_kwh,
            served_kwh: self.served_kwh + o.served_kwh,
            unserved_kwh: self.unserved_kwh + o.unserved_kwh,
            imported_kwh: self.imported_kwh + o.imported_kwh,
            exported_kwh: self.exported_kwh + o.exported_kwh,
            dg_kwh: self.dg_kwh + o.dg_kwh,
            pv_kwh: self.pv_kwh + o.pv_kwh,
            wind_kwh: self.wind_kwh + o.wind_kwh,
            curtailed_kwh: self.curtailed_kwh + o.curtailed_kwh,
            battery_charge_kwh: self.battery_charge_kwh + o.battery_charge_kwh,
            battery_discharge_kwh: self.battery_discharge_kwh + o.battery_discharge_kwh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityStats {
    /// Maximal runs of consecutive grid-unavailable steps.
    pub outage_count: usize,
    pub outage_hours: f64,
    /// Share of steps with no unserved load.
    pub uptime_fraction: f64,
}

/// Sums a trace into energy totals and reliability statistics.
pub fn accumulate(
    steps: &[TraceStep],
    inputs: &[StepInput],
    dt_h: f64,
) -> Result<(EnergyTotals, ReliabilityStats), MetricsError> {
    if steps.len() != inputs.len() {
        return Err(MetricsError::LengthMismatch {
            trace: steps.len(),
            inputs: inputs.len(),
        });
    }
    let mut t = EnergyTotals::default();
    let mut outage_count = 0;
    let mut outage_steps = 0usize;
    let mut up_steps = 0usize;
    let mut in_outage = false;

    for (step, input) in steps.iter().zip(inputs) {
        let d = &step.decision;
        t.demand_kwh += input.demand_kw * dt_h;
        t.served_kwh += d.served_kw(input) * dt_h;
        t.unserved_kwh += d.unserved_kw * dt_h;
        t.imported_kwh += d.grid_import_kw * dt_h;
        t.exported_kwh += d.grid_export_kw * dt_h;
        t.dg_kwh += d.dg_kw * dt_h;
        t.pv_kwh += input.pv_kw * dt_h;
        t.wind_kwh += input.wind_kw * dt_h;
        t.curtailed_kwh += d.curtailed_kw * dt_h;
        t.battery_charge_kwh += d.battery_charge_kw * dt_h;
        t.battery_discharge_kwh += d.battery_discharge_kw * dt_h;

        if input.grid_available {
            in_outage = false;
        } else {
            outage_steps += 1;
            if !in_outage {
                outage_count += 1;
                in_outage = true;
            }
        }
        if d.unserved_kw <= UNSERVED_EPS_KW {
            up_steps += 1;
        }
    }

    let uptime_fraction = if steps.is_empty() {
        1.0
    } else {
        up_steps as f64 / steps.len() as f64
    };
    Ok((
        t,
        ReliabilityStats {
            outage_count,
            outage_hours: outage_steps as f64 * dt_h,
            uptime_fraction,
        },
    ))
}

/// Operating cost over the simulated horizon, by component.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct OperatingCost {
    pub grid_purchase: f64,
    pub grid_revenue: f64,
    pub fuel: f64,
    pub dg_om: f64,
    /// Yearly fixed O&M of PV, wind and storage, prorated to the horizon.
    pub fixed_om: f64,
}

impl OperatingCost {
    pub fn total(&self) -> f64 {
        self.grid_purchase - self.grid_revenue + self.fuel + self.dg_om + self.fixed_om
    }
}

/// Yearly fixed O&M of PV, wind and storage at their rated sizes.
pub fn fixed_om_per_year(config: &MicrogridConfig) -> f64 {
    config.pv.om_cost * config.pv.capacity_kw
        + config.wind.om_cost * config.wind.capacity_kw
        + config.battery.om_cost * config.battery.capacity_kwh
}

/// Grid purchases at the step price, less export revenue at the step price
/// times the sell ratio, plus diesel fuel and runtime O&M and prorated fixed
/// O&M. The result may be negative when exports dominate.
pub fn operating_cost(
    totals: &EnergyTotals,
    steps: &[TraceStep],
    inputs: &[StepInput],
    config: &MicrogridConfig,
) -> Result<OperatingCost, MetricsError> {
    if steps.len() != inputs.len() {
        return Err(MetricsError::LengthMismatch {
            trace: steps.len(),
            inputs: inputs.len(),
        });
    }
    let dt = config.step_hours;
    let mut cost = OperatingCost::default();
    let mut dg_hours = 0.0;
    for (step, input) in steps.iter().zip(inputs) {
        let d = &step.decision;
        cost.grid_purchase += d.grid_import_kw * input.price * dt;
        cost.grid_revenue += d.grid_export_kw * input.price * config.grid.sell_price_ratio * dt;
        if d.dg_kw > 0.0 {
            dg_hours += dt;
        }
    }
    cost.fuel = totals.dg_kwh * config.diesel.fuel_cost_per_kwh;
    cost.dg_om = dg_hours * config.diesel.capacity_kw * config.diesel.om_cost;
    let horizon_hours = steps.len() as f64 * dt;
    cost.fixed_om = fixed_om_per_year(config) * horizon_hours / HOURS_PER_YEAR;
    Ok(cost)
}

/// Up-front cost of every component at its configured size.
pub fn capex(config: &MicrogridConfig) -> f64 {
    config.pv.capital_cost * config.pv.capacity_kw
        + config.wind.capital_cost * config.wind.capacity_kw
        + config.diesel.capital_cost * config.diesel.capacity_kw
        + config.battery.capital_cost * config.battery.capacity_kwh
        + config.economics.converter_capital_cost * config.economics.converter_capacity_kw
}

/// Present value of replacement outlays less end-of-project salvage for one
/// component.
///
/// Replacements fall at whole multiples of the lifetime strictly before the
/// project end. Salvage credits the unused share of the last installed unit,
/// prorated linearly, at the project end.
pub fn replacement_present_cost(replacement_cost: f64, lifetime_years: f64, project_years: u32, rate: f64) -> f64 {
    if !(lifetime_years > 0.0) || replacement_cost == 0.0 {
        return 0.0;
    }
    let horizon = f64::from(project_years);
    let discount = |t: f64| (1.0 + rate).powf(-t);
    let mut pv = 0.0;
    let mut last_install = 0.0;
    let mut k = 1.0;
    while k * lifetime_years < horizon {
        let t = k * lifetime_years;
        pv += replacement_cost * discount(t);
        last_install = t;
        k += 1.0;
    }
    let remaining = lifetime_years - (horizon - last_install);
    let salvage = replacement_cost * remaining / lifetime_years;
    pv - salvage * discount(horizon)
}

/// Net replacement cost (present value) summed over all components.
pub fn replacement_net_cost(config: &MicrogridConfig) -> f64 {
    let e = &config.economics;
    let (years, r) = (e.project_lifetime_years, e.discount_rate);
    let mut total = replacement_present_cost(
        config.pv.replacement_cost * config.pv.capacity_kw,
        config.pv.lifetime_years,
        years,
        r,
    );
    total += replacement_present_cost(
        config.wind.replacement_cost_per_kw() * config.wind.capacity_kw,
        config.wind.lifetime_years,
        years,
        r,
    );
    total += replacement_present_cost(
        config.battery.replacement_cost_per_kwh() * config.battery.capacity_kwh,
        config.battery.lifetime_years,
        years,
        r,
    );
    if let Some(life) = config.diesel.lifetime_years {
        total += replacement_present_cost(
            config.diesel.replacement_cost_per_kw() * config.diesel.capacity_kw,
            life,
            years,
            r,
        );
    }
    if let Some(life) = e.converter_lifetime_years {
        let unit = e.converter_replacement_cost.unwrap_or(e.converter_capital_cost);
        total += replacement_present_cost(unit * e.converter_capacity_kw, life, years, r);
    }
    total
}

/// Net present cost: capex plus the discounted stream of a constant yearly
/// cost over `lifetime_years`.
pub fn npc(annual_cost: f64, capex: f64, discount_rate: f64, lifetime_years: u32) -> f64 {
    let mut factor = 1.0;
    let mut sum = 0.0;
    for _ in 0..lifetime_years {
        factor /= 1.0 + discount_rate;
        sum += annual_cost * factor;
    }
    capex + sum
}

/// Annuity factor converting a present cost into a constant yearly payment.
pub fn capital_recovery_factor(discount_rate: f64, lifetime_years: u32) -> f64 {
    let n = f64::from(lifetime_years);
    if discount_rate > 0.0 {
        let g = (1.0 + discount_rate).powf(n);
        discount_rate * g / (g - 1.0)
    } else {
        1.0 / n
    }
}

/// Annualized NPC per kWh of yearly served energy.
pub fn lcoe(npc: f64, discount_rate: f64, lifetime_years: u32, annual_served_kwh: f64) -> Result<f64, MetricsError> {
    if !(annual_served_kwh > 0.0) {
        return Err(MetricsError::ZeroServed);
    }
    Ok(npc * capital_recovery_factor(discount_rate, lifetime_years) / annual_served_kwh)
}

/// Renewable energy delivered (available generation less curtailment) per
/// kWh served, clamped to `[0, 1]`.
///
/// The battery charges only from renewable surplus, so its losses sit
/// entirely on the renewable side of this ratio.
pub fn renewable_fraction(totals: &EnergyTotals) -> Result<f64, MetricsError> {
    if !(totals.served_kwh > 0.0) {
        return Err(MetricsError::ZeroServed);
    }
    let delivered = totals.pv_kwh + totals.wind_kwh - totals.curtailed_kwh;
    Ok((delivered / totals.served_kwh).clamp(0.0, 1.0))
}

/// `(new − base) / |base| × 100`.
pub fn percent_change(base: f64, new: f64) -> Result<f64, MetricsError> {
    if base == 0.0 {
        return Err(MetricsError::ZeroBase);
    }
    Ok((new - base) / base.abs() * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EmissionSummary {
    pub co2: f64,
    pub co: f64,
    pub uh: f64,
    pub pm: f64,
    pub so2: f64,
    pub no2: f64,
}

impl EmissionSummary {
    pub fn get(&self, p: Pollutant) -> f64 {
        match p {
            Pollutant::Co2 => self.co2,
            Pollutant::Co => self.co,
            Pollutant::Uh => self.uh,
            Pollutant::Pm => self.pm,
            Pollutant::So2 => self.so2,
            Pollutant::No2 => self.no2,
        }
    }
}

/// Net pollutant mass: diesel and import emissions, less an export credit at
/// the grid factor when offsets are enabled.
pub fn emissions(totals: &EnergyTotals, factors: &EmissionFactors) -> EmissionSummary {
    let net = |p: Pollutant| {
        let grid = factors.grid.get(p);
        let mut m = totals.dg_kwh * factors.dg.get(p) + totals.imported_kwh * grid;
        if factors.export_offset_enabled {
            m -= totals.exported_kwh * grid;
        }
        m
    };
    EmissionSummary {
        co2: net(Pollutant::Co2),
        co: net(Pollutant::Co),
        uh: net(Pollutant::Uh),
        pm: net(Pollutant::Pm),
        so2: net(Pollutant::So2),
        no2: net(Pollutant::No2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconomicSummary {
    /// Currency per year.
    pub operating_cost: f64,
    pub capex: f64,
    pub npc: f64,
    /// `None` when nothing was served.
    pub lcoe: Option<f64>,
    pub renewable_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub horizon_steps: usize,
    pub step_hours: f64,
    pub threshold: Threshold,
    /// Multiplier from horizon totals to yearly figures.
    pub annualization_factor: f64,
    pub peak_grid_import_kw: f64,
    pub energy: EnergyTotals,
    pub reliability: ReliabilityStats,
    pub economics: EconomicSummary,
    /// kg per year.
    pub emissions: EmissionSummary,
}

/// Builds the full report for one simulated horizon.
pub fn summarize(trace: &Trace, inputs: &[StepInput], config: &MicrogridConfig) -> Result<SimulationReport, MetricsError> {
    let dt = config.step_hours;
    let (energy, reliability) = accumulate(&trace.steps, inputs, dt)?;
    let horizon_hours = trace.steps.len() as f64 * dt;
    let annualization_factor = if horizon_hours > 0.0 {
        HOURS_PER_YEAR / horizon_hours
    } else {
        0.0
    };

    let horizon_cost = operating_cost(&energy, &trace.steps, inputs, config)?;
    let annual_operating = horizon_cost.total() * annualization_factor;
    let capex = capex(config);
    let econ = &config.economics;
    let npc_total = npc(annual_operating, capex, econ.discount_rate, econ.project_lifetime_years)
        + replacement_net_cost(config);
    let annual = energy.scaled(annualization_factor);
    let lcoe = lcoe(npc_total, econ.discount_rate, econ.project_lifetime_years, annual.served_kwh).ok();
    let renewable_fraction = renewable_fraction(&energy).ok();

    let peak_grid_import_kw = trace
        .steps
        .iter()
        .map(|s| s.decision.grid_import_kw)
        .fold(0.0, f64::max);

    Ok(SimulationReport {
        schema_version: SCHEMA_VERSION,
        horizon_steps: trace.steps.len(),
        step_hours: dt,
        threshold: trace.threshold,
        annualization_factor,
        peak_grid_import_kw,
        energy,
        reliability,
        economics: EconomicSummary {
            operating_cost: annual_operating,
            capex,
            npc: npc_total,
            lcoe,
            renewable_fraction,
        },
        emissions: emissions(&annual, &config.emissions),
    })
}
