//! Run configuration files and command dispatch for the command-line front
//! end.
//!
//! A run is described by one flat TOML file; command-line flags override file
//! values, which override defaults. The fully resolved configuration is
//! echoed into every JSON artifact and written next to the outputs, so a run
//! can always be reproduced from its own files.

use crate::classical;
use crate::quantum::{lossy_table, AssignmentPolicy, DeviceModel};
use crate::scenario::PhaseConfig;
use crate::sim::{
    self, estimate_table, run_experiment_with, Accounting, PreparationDraw, RunOptions,
    SweepSource, SweepSpec,
};
use crate::table::ProbabilityTable;
use crate::witness::{self, WitnessKind, WitnessResult};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parse: {0}")]
    Parse(String),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("{field} {reason}")]
    Validation { field: &'static str, reason: String },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{module}/{operation}: {cause}")]
    Module { module: &'static str, operation: &'static str, cause: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn module(module: &'static str, operation: &'static str) -> impl FnOnce(String) -> CliError {
        move |cause| CliError::Module { module, operation, cause }
    }

    /// Machine-readable error record with module, operation, and cause.
    pub fn to_json(&self) -> Value {
        let (module, operation, cause) = match self {
            CliError::Config(e) => ("cli", "load_config", e.to_string()),
            CliError::Module { module, operation, cause } => (*module, *operation, cause.clone()),
            CliError::Io(e) => ("cli", "write_outputs", e.to_string()),
        };
        json!({ "error": { "module": module, "operation": operation, "cause": cause } })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Predict,
    Bounds,
    Optimize,
    Simulate,
    Sweep,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Command::Predict => "predict",
            Command::Bounds => "bounds",
            Command::Optimize => "optimize",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
        };
        write!(f, "{name}")
    }
}

impl Command {
    /// Commands whose results depend on the seed.
    pub fn randomized(&self) -> bool {
        !matches!(self, Command::Predict)
    }
}

/// Source selector for the sweep command.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    #[default]
    Analytic,
    Simulated,
}

impl FromStr for SourceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(SourceKind::Analytic),
            "simulated" => Ok(SourceKind::Simulated),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

/// One flat configuration covering every command; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Preparation phases in radians; required by predict and simulate.
    pub phi: Vec<f64>,
    /// Measurement phases in radians.
    pub sigma: Vec<f64>,
    pub eta: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub visibility: f64,
    pub policy: AssignmentPolicy,
    pub accounting: Accounting,
    pub x_draw: PreparationDraw,
    /// Total runs for simulate.
    pub trials: u64,
    /// Runs per (grid value, measurement) setting for simulated sweeps.
    pub trials_per_setting: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessKind>,
    /// Hold the measurement phases fixed during optimization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fix_sigma: Option<(f64, f64)>,
    /// Coarse grid resolution of the optimizer, per free phase.
    pub grid_n: usize,
    /// Number of grid values for sweep.
    pub grid_points: usize,
    pub bins: usize,
    pub source: SourceKind,
    pub out_dir: PathBuf,
    /// Worker threads; 0 keeps the library default. Results never depend on
    /// the thread count.
    pub threads: usize,
    /// Refuse randomized commands without an explicit seed.
    pub strict_repro: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            phi: Vec::new(),
            sigma: vec![FRAC_PI_2, 0.0],
            eta: 1.0,
            t_a: 1.0,
            t_b: 1.0,
            visibility: 1.0,
            policy: AssignmentPolicy::PostSelected,
            accounting: Accounting::PerTrigger,
            x_draw: PreparationDraw::RoundRobin,
            trials: 100_000,
            trials_per_setting: 10_000,
            seed: None,
            witness: None,
            fix_sigma: None,
            grid_n: 10,
            grid_points: 70,
            bins: 100,
            source: SourceKind::Analytic,
            out_dir: PathBuf::from("out"),
            threads: 0,
            strict_repro: false,
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "phi",
    "sigma",
    "eta",
    "t_a",
    "t_b",
    "visibility",
    "policy",
    "accounting",
    "x_draw",
    "trials",
    "trials_per_setting",
    "seed",
    "witness",
    "fix_sigma",
    "grid_n",
    "grid_points",
    "bins",
    "source",
    "out_dir",
    "threads",
    "strict_repro",
];

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("eta", self.eta),
            ("t_a", self.t_a),
            ("t_b", self.t_b),
            ("visibility", self.visibility),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Validation { field, reason: "out of [0,1]".into() });
            }
        }
        for &p in self.phi.iter().chain(self.sigma.iter()) {
            if !p.is_finite() {
                return Err(ConfigError::Validation {
                    field: "phi",
                    reason: format!("phase {p} is not finite"),
                });
            }
        }
        if self.sigma.is_empty() {
            return Err(ConfigError::Validation { field: "sigma", reason: "must be nonempty".into() });
        }
        if self.trials == 0 {
            return Err(ConfigError::Validation { field: "trials", reason: "must be >= 1".into() });
        }
        if self.trials_per_setting == 0 {
            return Err(ConfigError::Validation {
                field: "trials_per_setting",
                reason: "must be >= 1".into(),
            });
        }
        if !(8..=16).contains(&self.grid_n) {
            return Err(ConfigError::Validation {
                field: "grid_n",
                reason: format!("must be in 8..=16, got {}", self.grid_n),
            });
        }
        if self.grid_points == 0 {
            return Err(ConfigError::Validation {
                field: "grid_points",
                reason: "must be >= 1".into(),
            });
        }
        if self.bins == 0 {
            return Err(ConfigError::Validation { field: "bins", reason: "must be >= 1".into() });
        }
        if let Some((a, b)) = self.fix_sigma {
            if !a.is_finite() || !b.is_finite() {
                return Err(ConfigError::Validation {
                    field: "fix_sigma",
                    reason: "phases must be finite".into(),
                });
            }
        }
        Ok(())
    }

    fn device(&self) -> DeviceModel {
        DeviceModel {
            eta: self.eta,
            t_a: self.t_a,
            t_b: self.t_b,
            visibility: self.visibility,
            policy: self.policy,
        }
    }
}

/// Parse a configuration document, rejecting unknown keys.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigError::Parse(e.to_string())
    })?;
    for key in table.keys() {
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
    }
    let config: RunConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Load and validate a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// Command-line overrides; precedence is flag > file > default.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub trials_per_setting: Option<u64>,
    pub eta: Option<f64>,
    pub t_a: Option<f64>,
    pub t_b: Option<f64>,
    pub visibility: Option<f64>,
    pub policy: Option<AssignmentPolicy>,
    pub accounting: Option<Accounting>,
    pub x_draw: Option<PreparationDraw>,
    pub witness: Option<WitnessKind>,
    pub fix_sigma: Option<(f64, f64)>,
    pub grid_n: Option<usize>,
    pub grid_points: Option<usize>,
    pub bins: Option<usize>,
    pub source: Option<SourceKind>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub strict_repro: bool,
}

pub fn apply_overrides(mut config: RunConfig, o: &Overrides) -> RunConfig {
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = &o.$field {
                config.$field = v.clone();
            }
        };
    }
    take!(trials);
    take!(trials_per_setting);
    take!(eta);
    take!(t_a);
    take!(t_b);
    take!(visibility);
    take!(policy);
    take!(accounting);
    take!(x_draw);
    take!(grid_n);
    take!(grid_points);
    take!(bins);
    take!(source);
    take!(out_dir);
    take!(threads);
    if let Some(seed) = o.seed {
        config.seed = Some(seed);
    }
    if let Some(witness) = o.witness {
        config.witness = Some(witness);
    }
    if let Some(fix_sigma) = o.fix_sigma {
        config.fix_sigma = Some(fix_sigma);
    }
    config.strict_repro |= o.strict_repro;
    config
}

fn infer_witness(config: &RunConfig) -> Option<WitnessKind> {
    config.witness.or(match config.phi.len() {
        3 => Some(WitnessKind::Idw),
        4 => Some(WitnessKind::W2),
        _ => None,
    })
}

fn phase_config(config: &RunConfig) -> Result<PhaseConfig, CliError> {
    if config.phi.is_empty() {
        return Err(ConfigError::Validation {
            field: "phi",
            reason: "required for this command".into(),
        }
        .into());
    }
    PhaseConfig::new(config.phi.clone(), config.sigma.clone())
        .map_err(|e| CliError::module("scenario", "phase_config")(e.to_string()))
}

fn write_output(dir: &Path, name: &str, contents: &str, outputs: &mut Vec<String>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    outputs.push(path.to_string_lossy().into_owned());
    Ok(())
}

fn witness_json(result: &WitnessResult, config_value: &Value) -> String {
    let mut v = result.to_json();
    v["config"] = config_value.clone();
    v.to_string()
}

/// Run a command against a validated configuration.
///
/// On success the declared output files exist under `out_dir` and the
/// returned one-line JSON summary lists them together with the key results
/// and the fully resolved configuration.
pub fn dispatch(config: &RunConfig, command: Command) -> Result<Value, CliError> {
    config.validate()?;
    let mut effective = config.clone();
    if effective.seed.is_none() {
        if effective.strict_repro && command.randomized() {
            return Err(ConfigError::Validation {
                field: "seed",
                reason: "required when strict_repro is set".into(),
            }
            .into());
        }
        effective.seed = Some(0);
    }

    if effective.threads > 0 {
        let threads = effective.threads;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::module("cli", "dispatch")(e.to_string()))?;
        pool.install(|| run_command(&effective, command))
    } else {
        run_command(&effective, command)
    }
}

fn run_command(config: &RunConfig, command: Command) -> Result<Value, CliError> {
    let seed = config.seed.expect("seed resolved in dispatch");
    let out_dir = config.out_dir.clone();
    fs::create_dir_all(&out_dir)?;
    let config_value = serde_json::to_value(config)
        .map_err(|e| CliError::module("cli", "dispatch")(e.to_string()))?;
    let mut outputs = Vec::new();

    let config_toml = toml::to_string(config)
        .map_err(|e| CliError::module("cli", "dispatch")(e.to_string()))?;
    write_output(&out_dir, "run_config.toml", &config_toml, &mut outputs)?;

    let mut results = serde_json::Map::new();
    match command {
        Command::Predict => {
            let phases = phase_config(config)?;
            let table = lossy_table(&phases, &config.device());
            write_table(&out_dir, &table, &mut outputs)?;
            if let Some(kind) = infer_witness_for_table(config, &table) {
                let result = analytic_witness(kind, &table, &phases)?;
                write_output(&out_dir, "witness.json", &witness_json(&result, &config_value), &mut outputs)?;
                results.insert("witness".into(), json!(kind.to_string()));
                results.insert("value".into(), json!(result.value));
            }
        }
        Command::Bounds => {
            let kind = config.witness.ok_or(ConfigError::Validation {
                field: "witness",
                reason: "required for bounds (w2 or idw)".into(),
            })?;
            let scenario = match kind {
                WitnessKind::Idw => crate::scenario::PamScenario::idw(),
                WitnessKind::W2 => crate::scenario::PamScenario::w2(),
            };
            let (classical, _) = classical::classical_max(
                |t| match kind {
                    WitnessKind::Idw => witness::i_dw(t).expect("enumerated shape"),
                    WitnessKind::W2 => witness::det_w2(t).expect("enumerated shape").abs(),
                },
                &scenario,
            )
            .map_err(|e| CliError::module("classical", "classical_max")(e.to_string()))?;
            let quantum = witness::maximize_quantum(kind, None, config.grid_n, seed);
            results.insert("witness".into(), json!(kind.to_string()));
            results.insert("classical".into(), json!(classical));
            results.insert("quantum".into(), json!(quantum.value));
            let mut bounds = json!({
                "witness": kind.to_string(),
                "classical": classical,
                "quantum": quantum.value,
            });
            if kind == WitnessKind::W2 {
                let (correlated, _) = classical::correlated_det_search(2, 50, seed);
                bounds["correlated_supremum"] = json!(correlated);
                results.insert("correlated_supremum".into(), json!(correlated));
            }
            bounds["config"] = config_value.clone();
            write_output(&out_dir, "bounds.json", &bounds.to_string(), &mut outputs)?;
        }
        Command::Optimize => {
            let kind = config.witness.ok_or(ConfigError::Validation {
                field: "witness",
                reason: "required for optimize (w2 or idw)".into(),
            })?;
            let result = witness::maximize_quantum(kind, config.fix_sigma, config.grid_n, seed);
            write_output(&out_dir, "optimum.json", &witness_json(&result, &config_value), &mut outputs)?;
            results.insert("witness".into(), json!(kind.to_string()));
            results.insert("value".into(), json!(result.value));
            if let Some(best) = &result.maximizing_config {
                results.insert("phases".into(), json!(best.phi()));
                results.insert("sigma".into(), json!(best.sigma()));
            }
        }
        Command::Simulate => {
            let phases = phase_config(config)?;
            let options = RunOptions { accounting: config.accounting, x_draw: config.x_draw };
            let ledger =
                run_experiment_with(&phases, &config.device(), config.trials, seed, options);
            write_output(
                &out_dir,
                "ledger.csv",
                &ledger.to_csv_string().map_err(|e| CliError::module("sim", "ledger_csv")(e.to_string()))?,
                &mut outputs,
            )?;
            let table = estimate_table(&ledger, config.policy)
                .map_err(|e| CliError::module("sim", "estimate_table")(e.to_string()))?;
            write_table(&out_dir, &table, &mut outputs)?;
            if let Some(kind) = infer_witness_for_table(config, &table) {
                let result = witness::witness_stderr(&ledger, kind, config.policy)
                    .map_err(|e| CliError::module("witness", "witness_stderr")(e.to_string()))?;
                write_output(&out_dir, "witness.json", &witness_json(&result, &config_value), &mut outputs)?;
                results.insert("witness".into(), json!(kind.to_string()));
                results.insert("value".into(), json!(result.value));
                results.insert("stderr".into(), json!(result.stderr));
            }
        }
        Command::Sweep => {
            if config.sigma.len() != 2 {
                return Err(ConfigError::Validation {
                    field: "sigma",
                    reason: format!("sweep needs exactly 2 phases, got {}", config.sigma.len()),
                }
                .into());
            }
            let source = match config.source {
                SourceKind::Analytic => SweepSource::Analytic,
                SourceKind::Simulated => SweepSource::Simulated {
                    device: config.device(),
                    trials_per_setting: config.trials_per_setting,
                    seed,
                },
            };
            let spec = SweepSpec::new(
                SweepSpec::uniform_grid(config.grid_points),
                (config.sigma[0], config.sigma[1]),
                source,
                config.bins,
            )
            .map_err(|e| CliError::module("sim", "sweep_spec")(e.to_string()))?;
            let result = sim::sweep_idw(&spec)
                .map_err(|e| CliError::module("sim", "sweep_idw")(e.to_string()))?;
            write_output(
                &out_dir,
                "histogram.csv",
                &result
                    .histogram
                    .to_csv_string()
                    .map_err(|e| CliError::module("sim", "histogram_csv")(e.to_string()))?,
                &mut outputs,
            )?;
            let mut sweep = result.summary_json();
            sweep["config"] = config_value.clone();
            write_output(&out_dir, "sweep.json", &sweep.to_string(), &mut outputs)?;
            results.insert("max".into(), json!(result.max_value));
            results.insert("fraction_above_3".into(), json!(result.fraction_above_classical));
            results.insert("n_tuples".into(), json!(result.n_tuples));
        }
    }

    Ok(json!({
        "command": command.to_string(),
        "status": "ok",
        "outputs": outputs,
        "results": Value::Object(results),
        "config": config_value,
    }))
}

fn write_table(
    dir: &Path,
    table: &ProbabilityTable,
    outputs: &mut Vec<String>,
) -> Result<(), CliError> {
    let csv = table
        .to_csv_string()
        .map_err(|e| CliError::module("table", "to_csv")(e.to_string()))?;
    write_output(dir, "table.csv", &csv, outputs)?;
    let json = table
        .to_json_string()
        .map_err(|e| CliError::module("table", "to_json")(e.to_string()))?;
    write_output(dir, "table.json", &json, outputs)?;
    Ok(())
}

fn infer_witness_for_table(config: &RunConfig, table: &ProbabilityTable) -> Option<WitnessKind> {
    let kind = infer_witness(config)?;
    (kind.shape() == (table.n_x(), table.n_y())).then_some(kind)
}

fn analytic_witness(
    kind: WitnessKind,
    table: &ProbabilityTable,
    phases: &PhaseConfig,
) -> Result<WitnessResult, CliError> {
    let value = match kind {
        WitnessKind::Idw => witness::i_dw(table),
        WitnessKind::W2 => witness::det_w2(table).map(f64::abs),
    }
    .map_err(|e| CliError::module("witness", "evaluate")(e.to_string()))?;
    Ok(WitnessResult {
        witness: kind,
        value,
        stderr: 0.0,
        degenerate: false,
        maximizing_config: Some(phases.clone()),
    })
}
