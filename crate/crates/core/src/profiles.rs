//! Time-series inputs: CSV ingestion and resource-to-power conversion.
//!
//! Two table layouts are accepted. Generation mode carries PV and wind power
//! directly; resource mode carries irradiance and wind speed, which
//! [`resource_to_inputs`] turns into power.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MicrogridConfig, PvSpec, WindSpec};

pub const GENERATION_HEADER: [&str; 6] =
    ["index", "demand_kw", "price", "grid_available", "pv_kw", "wind_kw"];
pub const RESOURCE_HEADER: [&str; 6] = [
    "index",
    "demand_kw",
    "price",
    "grid_available",
    "irradiance_wm2",
    "wind_speed_ms",
];

/// Irradiance at which the PV array reaches its derated rating (W/m²).
pub const REFERENCE_IRRADIANCE_WM2: f64 = 1000.0;

/// Exogenous state of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInput {
    pub index: usize,
    pub demand_kw: f64,
    /// Currency per kWh.
    pub price: f64,
    pub grid_available: bool,
    pub pv_kw: f64,
    pub wind_kw: f64,
}

impl StepInput {
    pub fn renewable_kw(&self) -> f64 {
        self.pv_kw + self.wind_kw
    }
}

/// Raw weather row for resource-mode profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceRow {
    pub index: usize,
    pub demand_kw: f64,
    pub price: f64,
    pub grid_available: bool,
    pub irradiance_wm2: f64,
    pub wind_speed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileMode {
    #[default]
    Generation,
    Resource,
}

impl ProfileMode {
    pub fn header(self) -> &'static [&'static str; 6] {
        match self {
            ProfileMode::Generation => &GENERATION_HEADER,
            ProfileMode::Resource => &RESOURCE_HEADER,
        }
    }
}

impl FromStr for ProfileMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generation" => Ok(ProfileMode::Generation),
            "resource" => Ok(ProfileMode::Resource),
            other => Err(format!("unknown profile mode `{other}` (expected generation|resource)")),
        }
    }
}

impl fmt::Display for ProfileMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileMode::Generation => "generation",
            ProfileMode::Resource => "resource",
        })
    }
}

/// Unit of the price column in a profile file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceUnit {
    /// Currency per kWh.
    #[default]
    Currency,
    /// Hundredths of the currency per kWh.
    Cents,
}

impl PriceUnit {
    /// Divisor that turns a file price into currency per kWh.
    pub fn divisor(self) -> f64 {
        match self {
            PriceUnit::Currency => 1.0,
            PriceUnit::Cents => 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Generation(Vec<StepInput>),
    Resource(Vec<ResourceRow>),
}

impl Profile {
    pub fn len(&self) -> usize {
        match self {
            Profile::Generation(v) => v.len(),
            Profile::Resource(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Divides every price by the unit's divisor.
    pub fn normalize_prices(&mut self, unit: PriceUnit) {
        let d = unit.divisor();
        if d == 1.0 {
            return;
        }
        match self {
            Profile::Generation(v) => v.iter_mut().for_each(|r| r.price /= d),
            Profile::Resource(v) => v.iter_mut().for_each(|r| r.price /= d),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("profile is missing its header row")]
    MissingHeader,
    #[error("line 1: expected header `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Arity {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column} ({field}): {message}")]
    Field {
        line: u64,
        column: usize,
        field: &'static str,
        message: String,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
}

fn field_error(line: u64, column: usize, field: &'static str, message: impl Into<String>) -> ProfileError {
    ProfileError::Field {
        line,
        column,
        field,
        message: message.into(),
    }
}

struct RowParser<'a> {
    record: &'a csv::StringRecord,
    header: &'static [&'static str; 6],
    line: u64,
}

impl RowParser<'_> {
    fn raw(&self, col: usize) -> &str {
        self.record.get(col).unwrap_or("")
    }

    fn number(&self, col: usize) -> Result<f64, ProfileError> {
        let field = self.header[col];
        let s = self.raw(col);
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(field_error(self.line, col + 1, field, format!("`{s}` is not a finite number"))),
        }
    }

    fn nonneg(&self, col: usize) -> Result<f64, ProfileError> {
        let v = self.number(col)?;
        if v < 0.0 {
            return Err(field_error(self.line, col + 1, self.header[col], format!("negative value {v}")));
        }
        Ok(v)
    }

    fn index(&self) -> Result<u64, ProfileError> {
        let s = self.raw(0);
        s.parse::<u64>()
            .map_err(|_| field_error(self.line, 1, self.header[0], format!("`{s}` is not a non-negative integer")))
    }

    fn flag(&self, col: usize) -> Result<bool, ProfileError> {
        match self.raw(col) {
            "1" => Ok(true),
            "0" => Ok(false),
            s => Err(field_error(self.line, col + 1, self.header[col], format!("`{s}` is not 0 or 1"))),
        }
    }
}

/// Parses a profile table. Records are numbered from 0 in file order; the
/// file's own index column must hold integers but its values are not reused.
pub fn parse_profile(bytes: &[u8], mode: ProfileMode) -> Result<Profile, ProfileError> {
    let header = mode.header();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let found = reader.headers().map_err(|e| ProfileError::Csv(e.to_string()))?.clone();
    if found.is_empty() || (found.len() == 1 && found.get(0) == Some("")) {
        return Err(ProfileError::MissingHeader);
    }
    if found.iter().ne(header.iter().copied()) {
        return Err(ProfileError::BadHeader {
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut steps = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ProfileError::Csv(e.to_string()))?;
        let line = record.position().map_or(i as u64 + 2, |p| p.line());
        if record.len() != header.len() {
            return Err(ProfileError::Arity {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        let p = RowParser {
            record: &record,
            header,
            line,
        };
        p.index()?;
        let demand_kw = p.nonneg(1)?;
        let price = p.nonneg(2)?;
        let grid_available = p.flag(3)?;
        let a = p.nonneg(4)?;
        let b = p.nonneg(5)?;
        match mode {
            ProfileMode::Generation => steps.push(StepInput {
                index: i,
                demand_kw,
                price,
                grid_available,
                pv_kw: a,
                wind_kw: b,
            }),
            ProfileMode::Resource => rows.push(ResourceRow {
                index: i,
                demand_kw,
                price,
                grid_available,
                irradiance_wm2: a,
                wind_speed_ms: b,
            }),
        }
    }

    Ok(match mode {
        ProfileMode::Generation => Profile::Generation(steps),
        ProfileMode::Resource => Profile::Resource(rows),
    })
}

/// Writes a profile in the same layout [`parse_profile`] reads.
pub fn write_profile(profile: &Profile) -> String {
    let mut out = String::new();
    let flag = |b: bool| if b { "1" } else { "0" };
    match profile {
        Profile::Generation(v) => {
            out.push_str(&GENERATION_HEADER.join(","));
            out.push('\n');
            for r in v {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.index,
                    r.demand_kw,
                    r.price,
                    flag(r.grid_available),
                    r.pv_kw,
                    r.wind_kw
                ));
            }
        }
        Profile::Resource(v) => {
            out.push_str(&RESOURCE_HEADER.join(","));
            out.push('\n');
            for r in v {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.index,
                    r.demand_kw,
                    r.price,
                    flag(r.grid_available),
                    r.irradiance_wm2,
                    r.wind_speed_ms
                ));
            }
        }
    }
    out
}

/// PV output (kW): rated capacity × derating × irradiance normalized to
/// 1000 W/m², clamped at the reference irradiance.
pub fn pv_power(irradiance_wm2: f64, spec: &PvSpec) -> f64 {
    let normalized = (irradiance_wm2 / REFERENCE_IRRADIANCE_WM2).clamp(0.0, 1.0);
    spec.capacity_kw * spec.derating_factor * normalized
}

/// Wind farm output (kW) for a wind speed measured at the anemometer.
///
/// The speed is lifted to hub height with a power-law shear profile. Output
/// follows a cubic ramp between cut-in and rated speed, holds at capacity up
/// to cut-out, and drops to zero at and above cut-out.
pub fn wind_power(speed_ms: f64, spec: &WindSpec) -> f64 {
    let v = hub_height_speed(speed_ms, spec);
    if v < spec.cut_in_ms || v >= spec.cut_out_ms {
        return 0.0;
    }
    if v >= spec.rated_speed_ms {
        return spec.capacity_kw;
    }
    let ci3 = spec.cut_in_ms.powi(3);
    spec.capacity_kw * (v.powi(3) - ci3) / (spec.rated_speed_ms.powi(3) - ci3)
}

pub fn hub_height_speed(speed_ms: f64, spec: &WindSpec) -> f64 {
    let reference = spec.measurement_height_m();
    if reference == spec.hub_height_m {
        speed_ms
    } else {
        speed_ms * (spec.hub_height_m / reference).powf(spec.shear_exponent)
    }
}

/// Converts resource rows into step inputs. Demand, price and availability
/// are copied through untouched.
pub fn resource_to_inputs(rows: &[ResourceRow], config: &MicrogridConfig) -> Vec<StepInput> {
    rows.iter()
        .map(|r| StepInput {
            index: r.index,
            demand_kw: r.demand_kw,
            price: r.price,
            grid_available: r.grid_available,
            pv_kw: pv_power(r.irradiance_wm2, &config.pv),
            wind_kw: wind_power(r.wind_speed_ms, &config.wind),
        })
        .collect()
}

/// Returns the step inputs of a parsed profile, converting resource rows when
/// needed.
pub fn into_step_inputs(profile: Profile, config: &MicrogridConfig) -> Vec<StepInput> {
    match profile {
        Profile::Generation(v) => v,
        Profile::Resource(rows) => resource_to_inputs(&rows, config),
    }
}
