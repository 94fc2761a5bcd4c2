//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use microgrid_ems::config::{load_config, LoadedConfig};
use microgrid_ems::model::{
    BatterySpec, DieselSpec, EconomicsConfig, EmissionFactors, EmsConfig, GridSpec, MicrogridConfig, PvSpec,
    WindSpec, validate_config,
};
use microgrid_ems::profiles::{into_step_inputs, parse_profile, StepInput};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> PathBuf {
    crate_dir().join("fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    crate_dir().join("tests").join("golden").join(name)
}

/// Shipped configuration and its day profile, prices in currency units.
pub fn shipped() -> (LoadedConfig, Vec<StepInput>) {
    let loaded = load_config(&fixture("microgrid.toml")).expect("shipped config loads");
    let path = loaded.profile.clone().expect("shipped config names its profile");
    let bytes = std::fs::read(&path).expect("shipped profile readable");
    let mut profile = parse_profile(&bytes, loaded.profile_mode).expect("shipped profile parses");
    profile.normalize_prices(loaded.price_unit);
    let inputs = into_step_inputs(profile, &loaded.system);
    (loaded, inputs)
}

/// Compares `actual` with a committed golden file. Setting `BLESS=1`
/// rewrites the file instead.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        let line = expected
            .lines()
            .zip(actual.lines())
            .position(|(a, b)| a != b)
            .map_or("length".to_string(), |i| format!("line {}", i + 1));
        Err(format!("{} differs from golden at {line}", path.display()))
    }
}

pub fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.gen_range(0..items.len())]
}

/// A random configuration that passes validation.
pub fn random_config(rng: &mut ChaCha8Rng) -> MicrogridConfig {
    loop {
        let unit = pick(rng, &[1.0, 3.0, 10.0]);
        let soc_min: f64 = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..0.4) };
        let soc_max = (soc_min + rng.gen_range(0.05..0.8)).min(1.0);
        let ems = match rng.gen_range(0..3) {
            0 => EmsConfig::fixed_price(rng.gen_range(0.05..0.4)),
            1 => EmsConfig::price_percentile(rng.gen_range(0.05..0.95)),
            _ => EmsConfig::load_threshold(rng.gen_range(0.0..300.0)),
        };
        let config = MicrogridConfig {
            pv: PvSpec {
                capacity_kw: rng.gen_range(0.0..500.0),
                derating_factor: rng.gen_range(0.5..=1.0),
                capital_cost: 1300.0,
                replacement_cost: 1300.0,
                om_cost: 10.0,
                lifetime_years: 20.0,
            },
            wind: WindSpec {
                capacity_kw: unit * f64::from(rng.gen_range(0..40u32)),
                unit_rated_kw: unit,
                cut_in_ms: rng.gen_range(2.0..4.0),
                cut_out_ms: rng.gen_range(20.0..26.0),
                rated_speed_ms: rng.gen_range(9.0..14.0),
                hub_height_m: 15.0,
                anemometer_height_m: None,
                shear_exponent: 1.0 / 7.0,
                capital_cost: 2300.0,
                replacement_cost: None,
                om_cost: 207.0,
                lifetime_years: 20.0,
            },
            diesel: DieselSpec {
                capacity_kw: if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..150.0) },
                capital_cost: 400.0,
                replacement_cost: None,
                lifetime_years: None,
                om_cost: 0.03,
                fuel_cost_per_kwh: rng.gen_range(0.1..0.6),
                min_loading_fraction: if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..=0.6) },
            },
            battery: BatterySpec {
                capacity_kwh: if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..1500.0) },
                roundtrip_efficiency: rng.gen_range(0.6..=1.0),
                depth_of_discharge: (soc_max - soc_min + rng.gen_range(0.0..0.2)).min(1.0),
                soc_min,
                soc_max,
                max_charge_kw: rng.gen_range(0.0..250.0),
                max_discharge_kw: rng.gen_range(0.0..250.0),
                capital_cost: 700.0,
                replacement_cost: None,
                om_cost: 10.0,
                lifetime_years: 10.0,
                initial_soc: if rng.gen_bool(0.5) { Some(rng.gen_range(soc_min..=soc_max)) } else { None },
            },
            grid: GridSpec {
                import_limit_kw: rng.gen_range(0.0..300.0),
                export_limit_kw: rng.gen_range(0.0..300.0),
                sell_price_ratio: rng.gen_range(0.0..=1.0),
            },
            ems,
            economics: EconomicsConfig {
                discount_rate: rng.gen_range(0.0..0.15),
                project_lifetime_years: rng.gen_range(1..=30),
                converter_efficiency: 0.95,
                converter_capital_cost: 300.0,
                converter_capacity_kw: 150.0,
                converter_replacement_cost: None,
                converter_lifetime_years: Some(15.0),
            },
            emissions: EmissionFactors::reference(),
            step_hours: pick(rng, &[0.25, 0.5, 1.0, 2.0]),
        };
        if validate_config(&config).is_clean() {
            return config;
        }
    }
}

/// A random horizon consistent with `config`'s generator ratings, with
/// outages arriving in runs.
pub fn random_horizon(rng: &mut ChaCha8Rng, config: &MicrogridConfig, max_len: usize) -> Vec<StepInput> {
    let len = rng.gen_range(1..=max_len);
    let pv_max = config.pv.capacity_kw * config.pv.derating_factor;
    let mut grid = true;
    (0..len)
        .map(|index| {
            if rng.gen_bool(0.15) {
                grid = !grid;
            }
            StepInput {
                index,
                demand_kw: if rng.gen_bool(0.05) { 0.0 } else { rng.gen_range(0.0..400.0) },
                price: rng.gen_range(0.02..0.45),
                grid_available: grid,
                pv_kw: if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..=pv_max) },
                wind_kw: rng.gen_range(0.0..=config.wind.capacity_kw),
            }
        })
        .collect()
}
