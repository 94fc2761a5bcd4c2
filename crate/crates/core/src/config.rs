//! TOML run configuration: the system description plus run settings
//! (profile location and layout, price unit, outage override, custom
//! scenarios).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BatterySpec, DieselSpec, EconomicsConfig, EmissionFactors, EmsConfig, GridSpec, MicrogridConfig, PvSpec,
    WindSpec,
};
use crate::profiles::{PriceUnit, ProfileMode};
use crate::scenarios::{hours_to_steps, OutageStart, OutageWindow, Scenario, ScenarioError, ScenarioId};

fn one() -> f64 {
    1.0
}

/// Override of the built-in outage scenario's window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageSettings {
    /// First step of the outage; defaults to the first peak-price step.
    pub start: Option<usize>,
    /// Outage length in hours.
    pub hours: Option<f64>,
}

/// A user-defined scenario. Unset multipliers default to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScenario {
    #[serde(default = "one")]
    pub demand_multiplier: f64,
    #[serde(default = "one")]
    pub pv_multiplier: f64,
    #[serde(default = "one")]
    pub wind_multiplier: f64,
    #[serde(default = "one")]
    pub fuel_price_multiplier: f64,
    pub outage_start: Option<usize>,
    pub outage_hours: Option<f64>,
    /// Full replacement price column, currency per kWh.
    pub prices: Option<Vec<f64>>,
}

impl CustomScenario {
    pub fn to_scenario(&self, name: &str, step_hours: f64) -> Result<Scenario, ScenarioError> {
        let outage_window = match (self.outage_start, self.outage_hours) {
            (None, None) => None,
            (start, hours) => Some(OutageWindow {
                start: start.map_or(OutageStart::FirstPeak, OutageStart::Step),
                duration_steps: hours_to_steps(hours.unwrap_or(crate::scenarios::S3_OUTAGE_HOURS), step_hours)?,
            }),
        };
        Ok(Scenario {
            id: ScenarioId::Custom(name.to_string()),
            demand_multiplier: self.demand_multiplier,
            pv_multiplier: self.pv_multiplier,
            wind_multiplier: self.wind_multiplier,
            outage_window,
            fuel_price_multiplier: self.fuel_price_multiplier,
            price_series: self.prices.clone(),
        })
    }
}

/// On-disk layout of a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "one")]
    pub step_hours: f64,
    #[serde(default)]
    pub price_unit: PriceUnit,
    #[serde(default)]
    pub profile_mode: ProfileMode,
    /// Profile path, resolved against the configuration file's directory.
    pub profile: Option<PathBuf>,
    pub pv: PvSpec,
    pub wind: WindSpec,
    pub diesel: DieselSpec,
    pub battery: BatterySpec,
    pub grid: GridSpec,
    pub ems: EmsConfig,
    pub economics: EconomicsConfig,
    #[serde(default = "EmissionFactors::reference")]
    pub emissions: EmissionFactors,
    #[serde(default)]
    pub outage: OutageSettings,
    #[serde(default)]
    pub scenario: BTreeMap<String, CustomScenario>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// A loaded configuration with its relative paths resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub system: MicrogridConfig,
    pub price_unit: PriceUnit,
    pub profile_mode: ProfileMode,
    pub profile: Option<PathBuf>,
    pub outage: OutageSettings,
    pub custom_scenarios: BTreeMap<String, CustomScenario>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn into_loaded(self, base_dir: &Path) -> LoadedConfig {
        LoadedConfig {
            system: MicrogridConfig {
                pv: self.pv,
                wind: self.wind,
                diesel: self.diesel,
                battery: self.battery,
                grid: self.grid,
                ems: self.ems,
                economics: self.economics,
                emissions: self.emissions,
                step_hours: self.step_hours,
            },
            price_unit: self.price_unit,
            profile_mode: self.profile_mode,
            profile: self.profile.map(|p| base_dir.join(p)),
            outage: self.outage,
            custom_scenarios: self.scenario,
        }
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file = ConfigFile::parse(&text).map_err(|message| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    })?;
    let base_dir = path.parent().unwrap_or(Path::new(""));
    Ok(file.into_loaded(base_dir))
}
