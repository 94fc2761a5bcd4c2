mod common;

use microgrid_ems::battery::BatteryState;
use microgrid_ems::dispatch::run_horizon;
use microgrid_ems::metrics::accumulate;
use microgrid_ems::profiles::StepInput;
use microgrid_ems::scenarios::{apply_scenario, builtin_scenario, ScenarioId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_config, random_horizon};

fn connected(mut inputs: Vec<StepInput>) -> Vec<StepInput> {
    for s in &mut inputs {
        s.grid_available = true;
    }
    inputs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn battery_never_raises_the_import_peak(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = random_config(&mut rng);
        let inputs = connected(random_horizon(&mut rng, &config, 72));
        let mut bare = config.clone();
        bare.battery.capacity_kwh = 0.0;
        let peak = |c: &microgrid_ems::model::MicrogridConfig| {
            run_horizon(&inputs, BatteryState::initial(&c.battery), c)
                .unwrap()
                .steps
                .iter()
                .map(|s| s.decision.grid_import_kw)
                .fold(0.0, f64::max)
        };
        prop_assert!(peak(&config) <= peak(&bare) + 1e-9);
    }

    #[test]
    fn accumulate_is_linear_over_concatenation(seed in any::<u64>(), cut in 0usize..48) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = random_config(&mut rng);
        let inputs = random_horizon(&mut rng, &config, 48);
        let trace = run_horizon(&inputs, BatteryState::initial(&config.battery), &config).unwrap();
        let cut = cut.min(inputs.len());
        let dt = config.step_hours;
        let (whole, _) = accumulate(&trace.steps, &inputs, dt).unwrap();
        let (a, _) = accumulate(&trace.steps[..cut], &inputs[..cut], dt).unwrap();
        let (b, _) = accumulate(&trace.steps[cut..], &inputs[cut..], dt).unwrap();
        let sum = a.plus(&b);
        let w = serde_json::to_value(whole).unwrap();
        let s = serde_json::to_value(sum).unwrap();
        for (k, v) in w.as_object().unwrap() {
            let (x, y) = (v.as_f64().unwrap(), s[k].as_f64().unwrap());
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{}: {} vs {}", k, x, y);
        }
    }

    #[test]
    fn s1_scales_every_demand_and_nothing_else(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = random_config(&mut rng);
        let inputs = random_horizon(&mut rng, &config, 48);
        let s1 = builtin_scenario(ScenarioId::S1, config.step_hours).unwrap();
        let (out, c) = apply_scenario(&inputs, &config, &s1).unwrap();
        prop_assert_eq!(c, config);
        for (a, b) in inputs.iter().zip(&out) {
            prop_assert_eq!(b.demand_kw, a.demand_kw * 1.05);
            prop_assert_eq!((a.price, a.pv_kw, a.wind_kw, a.grid_available), (b.price, b.pv_kw, b.wind_kw, b.grid_available));
        }
    }
}

#[test]
fn battery_energy_is_conserved_over_ten_thousand_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut config = random_config(&mut rng);
    config.battery.capacity_kwh = 800.0;
    config.battery.max_charge_kw = 120.0;
    config.battery.max_discharge_kw = 120.0;
    let mut inputs = Vec::new();
    while inputs.len() < 10_000 {
        for s in random_horizon(&mut rng, &config, 48) {
            inputs.push(StepInput { index: inputs.len(), ..s });
        }
    }
    inputs.truncate(10_000);
    let initial = BatteryState::initial(&config.battery);
    let trace = run_horizon(&inputs, initial, &config).unwrap();
    let eta = config.battery.roundtrip_efficiency.sqrt();
    let dt = config.step_hours;
    let flow: f64 = trace
        .steps
        .iter()
        .map(|s| s.decision.battery_charge_kw * eta * dt - s.decision.battery_discharge_kw / eta * dt)
        .sum();
    let last = trace.steps.last().unwrap().state.energy_kwh;
    assert!((flow - (last - initial.energy_kwh)).abs() <= 1e-6, "drift {}", flow - (last - initial.energy_kwh));
    assert!(trace.steps.iter().any(|s| s.decision.battery_charge_kw > 0.0));
    assert!(trace.steps.iter().any(|s| s.decision.battery_discharge_kw > 0.0));
}
