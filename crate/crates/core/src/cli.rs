//! Command-line frontend.
//!
//! Precedence for every setting is: command-line flag, then configuration
//! file, then built-in default.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::{load_config, ConfigError, LoadedConfig};
use crate::dispatch::{price_threshold, DispatchError, Trace};
use crate::metrics::MetricsError;
use crate::model::{validate_config, ValidationReport};
use crate::profiles::{into_step_inputs, parse_profile, PriceUnit, ProfileError, ProfileMode, StepInput};
use crate::scenarios::{
    builtin_scenario, hours_to_steps, run_matrix, simulate, Execution, Matrix, OutageStart, OutageWindow, Run,
    Scenario, ScenarioError, ScenarioId, DELTA_METRICS, S3_OUTAGE_HOURS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "microgrid-ems", version, about = "Deterministic community microgrid EMS simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the configuration and profile without simulating.
    Validate(CommonArgs),
    /// Simulate the base case and write trace.csv and report.json.
    Simulate(CommonArgs),
    /// Simulate the base case and a set of scenarios and write a delta matrix.
    Scenarios(ScenarioArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Profile CSV; overrides the configuration's `profile` key.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Profile layout; overrides the configuration's `profile_mode` key.
    #[arg(long)]
    mode: Option<ProfileMode>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Use only the first N steps of the profile.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated scenario ids (S1..S4 or custom names), or `all`.
    #[arg(long, default_value = "all")]
    scenarios: String,
    /// First step of the S3 outage.
    #[arg(long)]
    outage_start: Option<usize>,
    /// Length of the S3 outage in hours.
    #[arg(long)]
    outage_hours: Option<f64>,
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub profile: String,
    pub profile_mode: ProfileMode,
    pub price_unit: PriceUnit,
    pub output_dir: String,
    pub steps: Option<usize>,
    pub scenarios: Vec<String>,
    pub outage_start: Option<usize>,
    pub outage_hours: Option<f64>,
    pub random_free: bool,
    pub tool_version: String,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read profile {path}: {source}")]
    ProfileIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("profile {path}: {source}")]
    Profile {
        path: PathBuf,
        #[source]
        source: ProfileError,
    },
    #[error("no profile given (use --profile or the `profile` configuration key)")]
    NoProfile,
    #[error("invalid configuration:\n{0}")]
    Invalid(ValidationReport),
    #[error("empty horizon: the profile selection has no steps")]
    EmptyHorizon,
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn scenario_exit_code(e: &ScenarioError) -> i32 {
    match e {
        ScenarioError::Dispatch(DispatchError::Imbalance { .. } | DispatchError::Battery { .. })
        | ScenarioError::Metrics(MetricsError::LengthMismatch { .. }) => EXIT_INVARIANT,
        _ => EXIT_VALIDATION,
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::ProfileIo { .. } | CliError::Write { .. } => EXIT_IO,
            CliError::Scenario(e) => scenario_exit_code(e),
            _ => EXIT_VALIDATION,
        }
    }
}

/// Inputs resolved from configuration, flags and profile.
struct Prepared {
    loaded: LoadedConfig,
    profile_path: PathBuf,
    mode: ProfileMode,
    inputs: Vec<StepInput>,
}

fn prepare(args: &CommonArgs) -> Result<Prepared, CliError> {
    let loaded = load_config(&args.config)?;
    let report = validate_config(&loaded.system);
    if !report.is_clean() {
        return Err(CliError::Invalid(report));
    }
    let profile_path = args.profile.clone().or_else(|| loaded.profile.clone()).ok_or(CliError::NoProfile)?;
    let mode = args.mode.unwrap_or(loaded.profile_mode);
    let bytes = std::fs::read(&profile_path).map_err(|source| CliError::ProfileIo {
        path: profile_path.clone(),
        source,
    })?;
    let mut profile = parse_profile(&bytes, mode).map_err(|source| CliError::Profile {
        path: profile_path.clone(),
        source,
    })?;
    profile.normalize_prices(loaded.price_unit);
    let mut inputs = into_step_inputs(profile, &loaded.system);
    if let Some(n) = args.steps {
        inputs.truncate(n);
    }
    if inputs.is_empty() {
        return Err(CliError::EmptyHorizon);
    }
    Ok(Prepared {
        loaded,
        profile_path,
        mode,
        inputs,
    })
}

fn manifest(command: &str, args: &CommonArgs, prepared: &Prepared) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        config: args.config.display().to_string(),
        profile: prepared.profile_path.display().to_string(),
        profile_mode: prepared.mode,
        price_unit: prepared.loaded.price_unit,
        output_dir: args.out.display().to_string(),
        steps: args.steps,
        scenarios: Vec::new(),
        outage_start: None,
        outage_hours: None,
        random_free: true,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub const TRACE_HEADER: [&str; 19] = [
    "index",
    "demand_kw",
    "price",
    "grid_available",
    "pv_kw",
    "wind_kw",
    "pv_used_kw",
    "wind_used_kw",
    "curtailed_kw",
    "battery_charge_kw",
    "battery_discharge_kw",
    "dg_kw",
    "grid_import_kw",
    "grid_export_kw",
    "unserved_kw",
    "soc",
    "energy_kwh",
    "threshold",
    "mode",
];

/// Renders a trace as CSV, one row per step.
pub fn trace_csv(inputs: &[StepInput], trace: &Trace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    let threshold = trace.threshold.value().to_string();
    for (input, step) in inputs.iter().zip(&trace.steps) {
        let d = &step.decision;
        let row = [
            input.index.to_string(),
            input.demand_kw.to_string(),
            input.price.to_string(),
            fmt_bool(input.grid_available).to_string(),
            input.pv_kw.to_string(),
            input.wind_kw.to_string(),
            d.pv_used_kw.to_string(),
            d.wind_used_kw.to_string(),
            d.curtailed_kw.to_string(),
            d.battery_charge_kw.to_string(),
            d.battery_discharge_kw.to_string(),
            d.dg_kw.to_string(),
            d.grid_import_kw.to_string(),
            d.grid_export_kw.to_string(),
            d.unserved_kw.to_string(),
            step.state.soc.to_string(),
            step.state.energy_kwh.to_string(),
            threshold.clone(),
            d.mode.as_str().to_string(),
        ];
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Renders the scenario delta matrix.
pub fn matrix_csv(matrix: &Matrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["scenario", "status"];
    header.extend(DELTA_METRICS);
    header.push("message");
    w.write_record(&header).expect("in-memory write");
    for (id, outcome) in &matrix.outcomes {
        let mut row = vec![id.to_string()];
        match outcome {
            Ok(o) => {
                row.push("ok".into());
                row.extend(o.deltas.iter().map(|d| d.map(|v| v.to_string()).unwrap_or_default()));
                row.push(String::new());
            }
            Err(e) => {
                row.push("error".into());
                row.extend(DELTA_METRICS.iter().map(|_| String::new()));
                row.push(e.to_string());
            }
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

fn run_files(prefix: &str, run: &Run) -> [(String, String); 2] {
    [
        (format!("{prefix}trace.csv"), trace_csv(&run.inputs, &run.trace)),
        (format!("{prefix}report.json"), to_json(&run.report)),
    ]
}

/// Writes every file only after all of them have been rendered, so a failed
/// run leaves nothing behind.
fn write_outputs(out: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    for (rel, contents) in files {
        let path = out.join(rel);
        let dir = path.parent().unwrap_or(out);
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        std::fs::write(&path, contents).map_err(|source| CliError::Write { path, source })?;
    }
    Ok(())
}

fn cmd_validate(args: &CommonArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let prepared = prepare(args)?;
    let c = &prepared.loaded.system;
    let prices: Vec<f64> = prepared.inputs.iter().map(|s| s.price).collect();
    let threshold = price_threshold(&prices, &c.ems).map_err(ScenarioError::from)?;
    let mut s = String::new();
    let _ = writeln!(s, "configuration: {} (clean)", args.config.display());
    let _ = writeln!(s, "profile: {} ({} mode)", prepared.profile_path.display(), prepared.mode);
    let _ = writeln!(
        s,
        "horizon: {} steps of {} h ({} h)",
        prepared.inputs.len(),
        c.step_hours,
        prepared.inputs.len() as f64 * c.step_hours
    );
    match prepared.loaded.price_unit {
        PriceUnit::Cents => {
            let _ = writeln!(s, "prices: cents per kWh converted to currency per kWh (÷100)");
        }
        PriceUnit::Currency => {
            let _ = writeln!(s, "prices: currency per kWh (no conversion)");
        }
    }
    let rule = match c.ems.threshold_mode {
        crate::model::ThresholdMode::PricePercentile => {
            format!("percentile {} of {} prices", c.ems.percentile.unwrap_or_default(), prices.len())
        }
        mode => mode.to_string(),
    };
    let _ = writeln!(s, "threshold: {threshold} ({rule})");
    let _ = writeln!(s, "pv: {} kW, derating {}", c.pv.capacity_kw, c.pv.derating_factor);
    let _ = writeln!(s, "wind: {} kW in {} kW units", c.wind.capacity_kw, c.wind.unit_rated_kw);
    let _ = writeln!(s, "diesel: {} kW", c.diesel.capacity_kw);
    let _ = writeln!(
        s,
        "battery: {} kWh, soc band [{}, {}], charge {} kW, discharge {} kW",
        c.battery.capacity_kwh, c.battery.soc_min, c.battery.soc_max, c.battery.max_charge_kw, c.battery.max_discharge_kw
    );
    let _ = writeln!(s, "grid: import {} kW, export {} kW", c.grid.import_limit_kw, c.grid.export_limit_kw);
    stdout.write_all(s.as_bytes()).map_err(|source| CliError::Write {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn cmd_simulate(args: &CommonArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let prepared = prepare(args)?;
    let run = simulate(prepared.inputs.clone(), prepared.loaded.system.clone())?;
    let mut files = run_files("", &run).to_vec();
    files.push(("manifest.json".into(), to_json(&manifest("simulate", args, &prepared))));
    write_outputs(&args.out, &files)?;
    let _ = writeln!(
        stdout,
        "simulated {} steps; peak import {} kW; unserved {} kWh; wrote {}",
        run.trace.steps.len(),
        run.report.peak_grid_import_kw,
        run.report.energy.unserved_kwh,
        args.out.display()
    );
    Ok(())
}

fn select_scenarios(args: &ScenarioArgs, prepared: &Prepared) -> Result<Vec<Scenario>, CliError> {
    let loaded = &prepared.loaded;
    let dt = loaded.system.step_hours;
    let ids: Vec<String> = if args.scenarios.trim() == "all" {
        let mut v: Vec<String> = ["S1", "S2", "S3", "S4"].iter().map(|s| s.to_string()).collect();
        v.extend(loaded.custom_scenarios.keys().cloned());
        v
    } else {
        args.scenarios.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    };
    let outage_start = args.outage_start.or(loaded.outage.start);
    let outage_hours = args.outage_hours.or(loaded.outage.hours);
    let mut out = Vec::new();
    for raw in ids {
        let id: ScenarioId = raw.parse().expect("infallible");
        let scenario = match &id {
            ScenarioId::Custom(name) => loaded
                .custom_scenarios
                .get(name)
                .ok_or_else(|| CliError::UnknownScenario(name.clone()))?
                .to_scenario(name, dt)?,
            ScenarioId::Base => return Err(CliError::UnknownScenario(raw)),
            ScenarioId::S3 => {
                let mut s = builtin_scenario(id.clone(), dt)?;
                s.outage_window = Some(OutageWindow {
                    start: outage_start.map_or(OutageStart::FirstPeak, OutageStart::Step),
                    duration_steps: hours_to_steps(outage_hours.unwrap_or(S3_OUTAGE_HOURS), dt)?,
                });
                s
            }
            _ => builtin_scenario(id.clone(), dt)?,
        };
        if !out.iter().any(|s: &Scenario| s.id == scenario.id) {
            out.push(scenario);
        }
    }
    Ok(out)
}

fn cmd_scenarios(args: &ScenarioArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let prepared = prepare(&args.common)?;
    let scenarios = select_scenarios(args, &prepared)?;
    let matrix = run_matrix(&prepared.inputs, &prepared.loaded.system, &scenarios, Execution::Parallel)?;

    let mut files: Vec<(String, String)> = run_files("base/", &matrix.base).to_vec();
    let mut status = EXIT_OK;
    for (id, outcome) in &matrix.outcomes {
        match outcome {
            Ok(o) => files.extend(run_files(&format!("{id}/"), &o.run)),
            Err(e) => {
                let _ = writeln!(stderr, "scenario {id} failed: {e}");
                status = status.max(scenario_exit_code(e));
            }
        }
    }
    files.push(("matrix.csv".into(), matrix_csv(&matrix)));
    let mut m = manifest("scenarios", &args.common, &prepared);
    m.scenarios = scenarios.iter().map(|s| s.id.to_string()).collect();
    m.outage_start = args.outage_start.or(prepared.loaded.outage.start);
    m.outage_hours = args.outage_hours.or(prepared.loaded.outage.hours);
    files.push(("manifest.json".into(), to_json(&m)));
    write_outputs(&args.common.out, &files)?;
    let ok = matrix.outcomes.values().filter(|o| o.is_ok()).count();
    let _ = writeln!(
        stdout,
        "ran base + {} scenarios ({} ok); wrote {}",
        matrix.outcomes.len(),
        ok,
        args.common.out.display()
    );
    Ok(status)
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Validate(a) => cmd_validate(a, stdout).map(|_| EXIT_OK),
        Command::Simulate(a) => cmd_simulate(a, stdout).map(|_| EXIT_OK),
        Command::Scenarios(a) => cmd_scenarios(a, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
