//! Typed microgrid model: component ratings, costs, EMS thresholds, and the
//! invariant checks every other module relies on.
//!
//! All types are plain data. They are immutable once built and can be shared
//! across threads by reference.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Photovoltaic array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvSpec {
    /// Rated DC capacity (kW).
    pub capacity_kw: f64,
    pub derating_factor: f64,
    /// Currency per kW.
    pub capital_cost: f64,
    /// Currency per kW.
    pub replacement_cost: f64,
    /// Currency per kW per year.
    pub om_cost: f64,
    pub lifetime_years: f64,
}

/// Wind farm built from identical turbines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSpec {
    /// Total rated capacity (kW), a whole number of turbines.
    pub capacity_kw: f64,
    /// Rating of a single turbine (kW).
    pub unit_rated_kw: f64,
    pub cut_in_ms: f64,
    pub cut_out_ms: f64,
    pub rated_speed_ms: f64,
    pub hub_height_m: f64,
    /// Height at which resource wind speeds are measured. `None` means the
    /// data is already at hub height.
    #[serde(default)]
    pub anemometer_height_m: Option<f64>,
    #[serde(default = "default_shear_exponent")]
    pub shear_exponent: f64,
    pub capital_cost: f64,
    /// Falls back to `capital_cost` when absent.
    #[serde(default)]
    pub replacement_cost: Option<f64>,
    /// Currency per kW per year.
    pub om_cost: f64,
    pub lifetime_years: f64,
}

fn default_shear_exponent() -> f64 {
    1.0 / 7.0
}

impl WindSpec {
    pub fn measurement_height_m(&self) -> f64 {
        self.anemometer_height_m.unwrap_or(self.hub_height_m)
    }

    pub fn replacement_cost_per_kw(&self) -> f64 {
        self.replacement_cost.unwrap_or(self.capital_cost)
    }
}

/// Diesel generator used as islanded backup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DieselSpec {
    /// Maximum electrical output (kW).
    pub capacity_kw: f64,
    /// Currency per kW.
    pub capital_cost: f64,
    /// Falls back to `capital_cost` when absent.
    #[serde(default)]
    pub replacement_cost: Option<f64>,
    /// `None` means the unit is never replaced within the project horizon.
    #[serde(default)]
    pub lifetime_years: Option<f64>,
    /// Currency per operating hour per kW of capacity.
    pub om_cost: f64,
    /// Currency per kWh of electrical output. Deliberately has no default.
    pub fuel_cost_per_kwh: f64,
    #[serde(default)]
    pub min_loading_fraction: f64,
}

impl DieselSpec {
    pub fn replacement_cost_per_kw(&self) -> f64 {
        self.replacement_cost.unwrap_or(self.capital_cost)
    }
}

/// Battery energy storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    /// Nominal energy (kWh).
    pub capacity_kwh: f64,
    pub roundtrip_efficiency: f64,
    pub depth_of_discharge: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub max_charge_kw: f64,
    pub max_discharge_kw: f64,
    /// Currency per kWh.
    pub capital_cost: f64,
    /// Falls back to `capital_cost` when absent.
    #[serde(default)]
    pub replacement_cost: Option<f64>,
    /// Currency per kWh per year.
    pub om_cost: f64,
    pub lifetime_years: f64,
    /// Starting state of charge; `soc_min` when absent.
    #[serde(default)]
    pub initial_soc: Option<f64>,
}

impl BatterySpec {
    /// One-way efficiency: the roundtrip figure split evenly between the
    /// charge and discharge legs.
    pub fn one_way_efficiency(&self) -> f64 {
        self.roundtrip_efficiency.sqrt()
    }

    pub fn min_energy_kwh(&self) -> f64 {
        self.soc_min * self.capacity_kwh
    }

    pub fn max_energy_kwh(&self) -> f64 {
        self.soc_max * self.capacity_kwh
    }

    pub fn replacement_cost_per_kwh(&self) -> f64 {
        self.replacement_cost.unwrap_or(self.capital_cost)
    }
}

/// Utility connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub import_limit_kw: f64,
    pub export_limit_kw: f64,
    /// Multiplier applied to the real-time price for exported energy.
    #[serde(default = "default_sell_price_ratio")]
    pub sell_price_ratio: f64,
}

fn default_sell_price_ratio() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Compare each step's price against `fixed_threshold`.
    FixedPrice,
    /// Compare against a percentile of the horizon's price sequence.
    PricePercentile,
    /// Compare each step's demand against `load_threshold_kw`.
    LoadThreshold,
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdMode::FixedPrice => "fixed-price",
            ThresholdMode::PricePercentile => "price-percentile",
            ThresholdMode::LoadThreshold => "load-threshold",
        })
    }
}

/// Peak-shaving threshold rule. Only the parameter belonging to
/// `threshold_mode` is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmsConfig {
    pub threshold_mode: ThresholdMode,
    #[serde(default)]
    pub fixed_threshold: Option<f64>,
    #[serde(default)]
    pub percentile: Option<f64>,
    #[serde(default)]
    pub load_threshold_kw: Option<f64>,
}

impl EmsConfig {
    pub fn fixed_price(threshold: f64) -> Self {
        EmsConfig {
            threshold_mode: ThresholdMode::FixedPrice,
            fixed_threshold: Some(threshold),
            percentile: None,
            load_threshold_kw: None,
        }
    }

    pub fn price_percentile(percentile: f64) -> Self {
        EmsConfig {
            threshold_mode: ThresholdMode::PricePercentile,
            fixed_threshold: None,
            percentile: Some(percentile),
            load_threshold_kw: None,
        }
    }

    pub fn load_threshold(kw: f64) -> Self {
        EmsConfig {
            threshold_mode: ThresholdMode::LoadThreshold,
            fixed_threshold: None,
            percentile: None,
            load_threshold_kw: Some(kw),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicsConfig {
    /// Fraction per year.
    pub discount_rate: f64,
    pub project_lifetime_years: u32,
    pub converter_efficiency: f64,
    /// Currency per kW.
    pub converter_capital_cost: f64,
    #[serde(default)]
    pub converter_capacity_kw: f64,
    /// Falls back to `converter_capital_cost` when absent.
    #[serde(default)]
    pub converter_replacement_cost: Option<f64>,
    /// `None` means the converter outlives the project.
    #[serde(default)]
    pub converter_lifetime_years: Option<f64>,
}

/// Pollutants tracked in emission accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pollutant {
    Co2,
    Co,
    Uh,
    Pm,
    So2,
    No2,
}

impl Pollutant {
    pub const ALL: [Pollutant; 6] = [
        Pollutant::Co2,
        Pollutant::Co,
        Pollutant::Uh,
        Pollutant::Pm,
        Pollutant::So2,
        Pollutant::No2,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Pollutant::Co2 => "co2",
            Pollutant::Co => "co",
            Pollutant::Uh => "uh",
            Pollutant::Pm => "pm",
            Pollutant::So2 => "so2",
            Pollutant::No2 => "no2",
        }
    }
}

/// One emission factor per pollutant (kg/kWh).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PollutantFactors {
    pub co2: f64,
    pub co: f64,
    pub uh: f64,
    pub pm: f64,
    pub so2: f64,
    pub no2: f64,
}

impl PollutantFactors {
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

    pub fn scaled(&self, k: f64) -> Self {
        PollutantFactors {
            co2: self.co2 * k,
            co: self.co * k,
            uh: self.uh * k,
            pm: self.pm * k,
            so2: self.so2 * k,
            no2: self.no2 * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionFactors {
    /// Per kWh of diesel electrical output.
    pub dg: PollutantFactors,
    /// Per kWh imported from the utility.
    pub grid: PollutantFactors,
    /// Credit exported energy at the grid factor.
    #[serde(default)]
    pub export_offset_enabled: bool,
}

const REFERENCE_FACTORS: &str = include_str!("../data/emission_factors.toml");

impl EmissionFactors {
    /// Reference factor set shipped in `data/emission_factors.toml`.
    pub fn reference() -> Self {
        #[derive(Deserialize)]
        struct File {
            emissions: EmissionFactors,
        }
        let file: File =
            toml::from_str(REFERENCE_FACTORS).expect("bundled emission factor file is valid");
        file.emissions
    }

    pub fn zero() -> Self {
        EmissionFactors {
            dg: PollutantFactors::default(),
            grid: PollutantFactors::default(),
            export_offset_enabled: false,
        }
    }
}

/// Complete, immutable parameter set for one microgrid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrogridConfig {
    pub pv: PvSpec,
    pub wind: WindSpec,
    pub diesel: DieselSpec,
    pub battery: BatterySpec,
    pub grid: GridSpec,
    pub ems: EmsConfig,
    pub economics: EconomicsConfig,
    pub emissions: EmissionFactors,
    /// Step length Δt (h).
    pub step_hours: f64,
}

/// One broken invariant, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn nonneg(&mut self, path: &str, v: f64) {
        if !(v >= 0.0 && v.is_finite()) {
            self.push(path, format!("must be a finite value >= 0 (got {v})"));
        }
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(path, format!("must be a finite value > 0 (got {v})"));
        }
    }

    fn fraction_open_closed(&mut self, path: &str, v: f64) {
        if !(v > 0.0 && v <= 1.0) {
            self.push(path, format!("must lie in (0, 1] (got {v})"));
        }
    }

    fn fraction_closed(&mut self, path: &str, v: f64) {
        if !(0.0..=1.0).contains(&v) {
            self.push(path, format!("must lie in [0, 1] (got {v})"));
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every model invariant and lists the ones that fail. Violations are
/// returned as data; an empty report means the configuration is usable.
pub fn validate_config(config: &MicrogridConfig) -> ValidationReport {
    let mut r = ValidationReport::default();

    r.positive("step_hours", config.step_hours);

    let pv = &config.pv;
    r.nonneg("pv.capacity_kw", pv.capacity_kw);
    r.fraction_open_closed("pv.derating_factor", pv.derating_factor);
    r.nonneg("pv.capital_cost", pv.capital_cost);
    r.nonneg("pv.replacement_cost", pv.replacement_cost);
    r.nonneg("pv.om_cost", pv.om_cost);
    r.positive("pv.lifetime_years", pv.lifetime_years);

    let w = &config.wind;
    r.nonneg("wind.capacity_kw", w.capacity_kw);
    r.positive("wind.unit_rated_kw", w.unit_rated_kw);
    if !(w.cut_in_ms > 0.0 && w.cut_in_ms < w.rated_speed_ms && w.rated_speed_ms < w.cut_out_ms) {
        r.push(
            "wind.cut_in_ms",
            format!(
                "speeds must satisfy 0 < cut_in < rated < cut_out (got {} / {} / {})",
                w.cut_in_ms, w.rated_speed_ms, w.cut_out_ms
            ),
        );
    }
    if w.unit_rated_kw > 0.0 && w.capacity_kw >= 0.0 {
        let turbines = w.capacity_kw / w.unit_rated_kw;
        if !((turbines - turbines.round()).abs() <= 1e-9 * turbines.max(1.0)) {
            r.push(
                "wind.capacity_kw",
                format!(
                    "must be a whole multiple of unit_rated_kw {} (got {})",
                    w.unit_rated_kw, w.capacity_kw
                ),
            );
        }
    }
    r.positive("wind.hub_height_m", w.hub_height_m);
    if let Some(h) = w.anemometer_height_m {
        r.positive("wind.anemometer_height_m", h);
    }
    r.nonneg("wind.shear_exponent", w.shear_exponent);
    r.nonneg("wind.capital_cost", w.capital_cost);
    if let Some(c) = w.replacement_cost {
        r.nonneg("wind.replacement_cost", c);
    }
    r.nonneg("wind.om_cost", w.om_cost);
    r.positive("wind.lifetime_years", w.lifetime_years);

    let dg = &config.diesel;
    r.nonneg("diesel.capacity_kw", dg.capacity_kw);
    r.nonneg("diesel.capital_cost", dg.capital_cost);
    if let Some(c) = dg.replacement_cost {
        r.nonneg("diesel.replacement_cost", c);
    }
    if let Some(l) = dg.lifetime_years {
        r.positive("diesel.lifetime_years", l);
    }
    r.nonneg("diesel.om_cost", dg.om_cost);
    r.nonneg("diesel.fuel_cost_per_kwh", dg.fuel_cost_per_kwh);
    r.fraction_closed("diesel.min_loading_fraction", dg.min_loading_fraction);

    let b = &config.battery;
    r.nonneg("battery.capacity_kwh", b.capacity_kwh);
    r.fraction_open_closed("battery.roundtrip_efficiency", b.roundtrip_efficiency);
    r.fraction_open_closed("battery.depth_of_discharge", b.depth_of_discharge);
    if !(b.soc_min >= 0.0 && b.soc_min < b.soc_max && b.soc_max <= 1.0) {
        r.push(
            "battery.soc_min",
            format!(
                "soc band must satisfy 0 <= soc_min < soc_max <= 1 (got [{}, {}])",
                b.soc_min, b.soc_max
            ),
        );
    } else if !(b.soc_max - b.soc_min <= b.depth_of_discharge + 1e-12) {
        r.push(
            "battery.soc_max",
            format!(
                "soc band width {} exceeds depth_of_discharge {}",
                b.soc_max - b.soc_min,
                b.depth_of_discharge
            ),
        );
    }
    r.nonneg("battery.max_charge_kw", b.max_charge_kw);
    r.nonneg("battery.max_discharge_kw", b.max_discharge_kw);
    r.nonneg("battery.capital_cost", b.capital_cost);
    if let Some(c) = b.replacement_cost {
        r.nonneg("battery.replacement_cost", c);
    }
    r.nonneg("battery.om_cost", b.om_cost);
    r.positive("battery.lifetime_years", b.lifetime_years);
    if let Some(s) = b.initial_soc {
        if !(s >= b.soc_min && s <= b.soc_max) {
            r.push(
                "battery.initial_soc",
                format!("must lie inside [{}, {}] (got {s})", b.soc_min, b.soc_max),
            );
        }
    }

    let g = &config.grid;
    r.nonneg("grid.import_limit_kw", g.import_limit_kw);
    r.nonneg("grid.export_limit_kw", g.export_limit_kw);
    r.nonneg("grid.sell_price_ratio", g.sell_price_ratio);

    let ems = &config.ems;
    match ems.threshold_mode {
        ThresholdMode::FixedPrice => match ems.fixed_threshold {
            Some(v) => r.nonneg("ems.fixed_threshold", v),
            None => r.push("ems.fixed_threshold", "required in fixed-price mode"),
        },
        ThresholdMode::PricePercentile => match ems.percentile {
            Some(p) if p > 0.0 && p < 1.0 => {}
            Some(p) => r.push("ems.percentile", format!("must lie in (0, 1) (got {p})")),
            None => r.push("ems.percentile", "required in price-percentile mode"),
        },
        ThresholdMode::LoadThreshold => match ems.load_threshold_kw {
            Some(v) => r.nonneg("ems.load_threshold_kw", v),
            None => r.push("ems.load_threshold_kw", "required in load-threshold mode"),
        },
    }

    let e = &config.economics;
    r.nonneg("economics.discount_rate", e.discount_rate);
    if e.project_lifetime_years < 1 {
        r.push("economics.project_lifetime_years", "must be at least 1");
    }
    r.fraction_open_closed("economics.converter_efficiency", e.converter_efficiency);
    r.nonneg("economics.converter_capital_cost", e.converter_capital_cost);
    r.nonneg("economics.converter_capacity_kw", e.converter_capacity_kw);
    if let Some(c) = e.converter_replacement_cost {
        r.nonneg("economics.converter_replacement_cost", c);
    }
    if let Some(l) = e.converter_lifetime_years {
        r.positive("economics.converter_lifetime_years", l);
    }

    for p in Pollutant::ALL {
        r.nonneg(&format!("emissions.dg.{}", p.key()), config.emissions.dg.get(p));
        r.nonneg(&format!("emissions.grid.{}", p.key()), config.emissions.grid.get(p));
    }

    r
}
