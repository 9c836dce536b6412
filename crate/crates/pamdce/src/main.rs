//! Thin command-line front end; all behavior lives in the library.

use clap::{Parser, Subcommand};
use pamdce::cli::{self, Command, Overrides, RunConfig, SourceKind};
use pamdce::quantum::AssignmentPolicy;
use pamdce::sim::{Accounting, PreparationDraw};
use pamdce::witness::WitnessKind;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "pamdce",
    version,
    about = "Prepare-and-measure delayed-choice simulator and witness certification toolkit"
)]
struct Args {
    #[command(subcommand)]
    command: CommandArg,

    /// Run configuration file (TOML); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Total simulated runs.
    #[arg(long, global = true)]
    trials: Option<u64>,

    /// Runs per setting for simulated sweeps.
    #[arg(long, global = true)]
    trials_per_setting: Option<u64>,

    /// Detector efficiency in [0,1].
    #[arg(long, global = true)]
    eta: Option<f64>,

    /// Trigger-arm transmittance in [0,1].
    #[arg(long, global = true)]
    t_a: Option<f64>,

    /// Signal-arm transmittance in [0,1].
    #[arg(long, global = true)]
    t_b: Option<f64>,

    /// Interference visibility in [0,1].
    #[arg(long, global = true)]
    visibility: Option<f64>,

    /// Outcome assignment: post-selected | inclusive-assignment.
    #[arg(long, global = true, value_parser = AssignmentPolicy::from_str)]
    policy: Option<AssignmentPolicy>,

    /// Run accounting: per-trigger | per-pair.
    #[arg(long, global = true, value_parser = Accounting::from_str)]
    accounting: Option<Accounting>,

    /// Preparation choice: round-robin | uniform.
    #[arg(long, global = true, value_parser = PreparationDraw::from_str)]
    x_draw: Option<PreparationDraw>,

    /// Optimizer coarse grid resolution per free phase (8..=16).
    #[arg(long, global = true)]
    grid_n: Option<usize>,

    /// Number of sweep grid values.
    #[arg(long, global = true)]
    grid_points: Option<usize>,

    /// Histogram bins over [0, 5].
    #[arg(long, global = true)]
    bins: Option<usize>,

    /// Sweep source: analytic | simulated.
    #[arg(long, global = true, value_parser = SourceKind::from_str)]
    source: Option<SourceKind>,

    /// Worker threads (0 = library default); results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Refuse randomized commands without an explicit seed.
    #[arg(long, global = true)]
    strict_repro: bool,
}

#[derive(Subcommand)]
enum CommandArg {
    /// Analytic probability table and witness value for the configured phases
    Predict,
    /// Classical and quantum bounds of a witness
    Bounds {
        #[arg(long, value_parser = WitnessKind::from_str)]
        witness: WitnessKind,
    },
    /// Search for the phases maximizing a witness
    Optimize {
        #[arg(long, value_parser = WitnessKind::from_str)]
        witness: WitnessKind,
        /// Fix the measurement phases, e.g. --fix-sigma 1.5708,0
        #[arg(long, value_parser = parse_phase_pair)]
        fix_sigma: Option<(f64, f64)>,
    },
    /// Simulate a counting run and estimate its witness
    Simulate,
    /// Histogram the linear witness over all preparation tuples of a grid
    Sweep,
}

fn parse_phase_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected \"a,b\", got {s:?}"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("bad phase {a:?}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("bad phase {b:?}: {e}"))?;
    Ok((a, b))
}

fn main() {
    let args = Args::parse();
    match run(args) {
        Ok(summary) => println!("{summary}"),
        Err(error) => {
            eprintln!("{}", error.to_json());
            std::process::exit(1);
        }
    }
}

fn run(args: Args) -> Result<serde_json::Value, cli::CliError> {
    let base = match &args.config {
        Some(path) => cli::load_config(path)?,
        None => RunConfig::default(),
    };

    let mut overrides = Overrides {
        seed: args.seed,
        trials: args.trials,
        trials_per_setting: args.trials_per_setting,
        eta: args.eta,
        t_a: args.t_a,
        t_b: args.t_b,
        visibility: args.visibility,
        policy: args.policy,
        accounting: args.accounting,
        x_draw: args.x_draw,
        grid_n: args.grid_n,
        grid_points: args.grid_points,
        bins: args.bins,
        source: args.source,
        out_dir: args.out,
        threads: args.threads,
        strict_repro: args.strict_repro,
        ..Default::default()
    };

    let command = match args.command {
        CommandArg::Predict => Command::Predict,
        CommandArg::Bounds { witness } => {
            overrides.witness = Some(witness);
            Command::Bounds
        }
        CommandArg::Optimize { witness, fix_sigma } => {
            overrides.witness = Some(witness);
            overrides.fix_sigma = fix_sigma;
            Command::Optimize
        }
        CommandArg::Simulate => Command::Simulate,
        CommandArg::Sweep => Command::Sweep,
    };

    let config = cli::apply_overrides(base, &overrides);
    cli::dispatch(&config, command)
}
