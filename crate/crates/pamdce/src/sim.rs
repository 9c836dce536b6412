//! Monte Carlo simulation of the full counting experiment and the
//! phase-sweep histogram engine.
//!
//! A run is one trigger event: the measurement phase is chosen by a fair
//! QRNG, the preparation phase cycles round-robin (or is drawn uniformly),
//! the signal photon survives the arm with probability `t_b`, the detector
//! fires with probability `eta`, and a detected photon lands on D0 with the
//! visibility-damped interference probability. Every random decision comes
//! from a per-setting stream of a counter-based generator, so ledgers are
//! reproducible bit for bit regardless of scheduling.

use crate::quantum::{interference_probability, AssignmentPolicy, DeviceModel};
use crate::scenario::{reduce_phase, PhaseConfig};
use crate::table::ProbabilityTable;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Stream id reserved for distributing trials over settings; per-setting
/// chains use the setting index itself.
const ASSIGNMENT_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("setting (x={x}, y={y}) has no usable events")]
    EmptySetting { x: usize, y: usize },
    #[error("ledger needs {expected} settings, got {got}")]
    LedgerShape { expected: usize, got: usize },
    #[error("setting (x={x}, y={y}) breaks conservation: {d0} + {d1} + {lost} != {trigger}")]
    Conservation { x: usize, y: usize, trigger: u64, d0: u64, d1: u64, lost: u64 },
    #[error("duplicate ledger row for (x={x}, y={y})")]
    DuplicateRow { x: usize, y: usize },
    #[error("missing ledger row for (x={x}, y={y})")]
    MissingRow { x: usize, y: usize },
    #[error("sweep grid must be nonempty")]
    EmptyGrid,
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Event counts for one (x, y) setting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingCounts {
    /// Runs (trigger clicks, or generated pairs under per-pair accounting).
    pub trigger: u64,
    /// Coincidences with detector D0.
    pub d0: u64,
    /// Coincidences with detector D1.
    pub d1: u64,
    /// Runs with no signal-side detection.
    pub lost: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LedgerRow {
    x: usize,
    y: usize,
    trigger: u64,
    d0: u64,
    d1: u64,
    lost: u64,
}

/// Per-setting event bookkeeping for a whole run.
///
/// Invariant: `d0 + d1 + lost == trigger` for every setting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountLedger {
    n_x: usize,
    n_y: usize,
    counts: Vec<SettingCounts>,
}

impl CountLedger {
    pub fn from_counts(
        n_x: usize,
        n_y: usize,
        counts: Vec<SettingCounts>,
    ) -> Result<Self, SimError> {
        if counts.len() != n_x * n_y {
            return Err(SimError::LedgerShape { expected: n_x * n_y, got: counts.len() });
        }
        let ledger = Self { n_x, n_y, counts };
        ledger.check_conservation()?;
        Ok(ledger)
    }

    fn check_conservation(&self) -> Result<(), SimError> {
        for x in 0..self.n_x {
            for y in 0..self.n_y {
                let c = self.get(x, y);
                if c.d0 + c.d1 + c.lost != c.trigger {
                    return Err(SimError::Conservation {
                        x,
                        y,
                        trigger: c.trigger,
                        d0: c.d0,
                        d1: c.d1,
                        lost: c.lost,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    /// Counts for one setting. Panics if an index is out of range.
    pub fn get(&self, x: usize, y: usize) -> SettingCounts {
        assert!(x < self.n_x && y < self.n_y, "setting (x={x}, y={y}) out of range");
        self.counts[x * self.n_y + y]
    }

    pub fn counts(&self) -> &[SettingCounts] {
        &self.counts
    }

    /// Whether every setting satisfies `d0 + d1 + lost == trigger`.
    pub fn conserved(&self) -> bool {
        self.check_conservation().is_ok()
    }

    /// CSV with header `x,y,trigger,d0,d1,lost` in (x, y) order.
    pub fn to_csv_string(&self) -> Result<String, SimError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for x in 0..self.n_x {
            for y in 0..self.n_y {
                let c = self.get(x, y);
                writer.serialize(LedgerRow {
                    x,
                    y,
                    trigger: c.trigger,
                    d0: c.d0,
                    d1: c.d1,
                    lost: c.lost,
                })?;
            }
        }
        let bytes = writer.into_inner().map_err(|e| SimError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv_str(text: &str) -> Result<Self, SimError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut cells: BTreeMap<(usize, usize), SettingCounts> = BTreeMap::new();
        for row in reader.deserialize() {
            let row: LedgerRow = row?;
            let counts =
                SettingCounts { trigger: row.trigger, d0: row.d0, d1: row.d1, lost: row.lost };
            if cells.insert((row.x, row.y), counts).is_some() {
                return Err(SimError::DuplicateRow { x: row.x, y: row.y });
            }
        }
        let n_x = cells.keys().map(|&(x, _)| x + 1).max().unwrap_or(0);
        let n_y = cells.keys().map(|&(_, y)| y + 1).max().unwrap_or(0);
        let mut counts = Vec::with_capacity(n_x * n_y);
        for x in 0..n_x {
            for y in 0..n_y {
                counts.push(*cells.get(&(x, y)).ok_or(SimError::MissingRow { x, y })?);
            }
        }
        Self::from_counts(n_x, n_y, counts)
    }
}

/// What one row of the ledger counts.
///
/// `PerTrigger` defines a run by a trigger click, so the trigger-arm
/// transmittance never enters. `PerPair` counts every generated pair as a
/// run: the heralding click itself succeeds with probability `t_a` and a
/// missing herald is a lost run (the measurement choice is still treated as
/// defined for every pair). Per-pair accounting is what carries the full
/// `eta^2 t_a^2 t_b^2` scaling of the determinant witness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accounting {
    #[default]
    PerTrigger,
    PerPair,
}

impl FromStr for Accounting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "per-trigger" => Ok(Accounting::PerTrigger),
            "per-pair" => Ok(Accounting::PerPair),
            other => Err(format!("unknown accounting {other:?}")),
        }
    }
}

impl fmt::Display for Accounting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Accounting::PerTrigger => write!(f, "per-trigger"),
            Accounting::PerPair => write!(f, "per-pair"),
        }
    }
}

/// How the preparation input is chosen per run. Cycling maximizes per-setting
/// counts without bias; uniform drawing is available for strict sampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreparationDraw {
    #[default]
    RoundRobin,
    Uniform,
}

impl FromStr for PreparationDraw {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "round-robin" => Ok(PreparationDraw::RoundRobin),
            "uniform" => Ok(PreparationDraw::Uniform),
            other => Err(format!("unknown preparation draw {other:?}")),
        }
    }
}

impl fmt::Display for PreparationDraw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreparationDraw::RoundRobin => write!(f, "round-robin"),
            PreparationDraw::Uniform => write!(f, "uniform"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub accounting: Accounting,
    pub x_draw: PreparationDraw,
}

/// Simulate `trials` runs with default options (per-trigger accounting,
/// round-robin preparations). Deterministic for a fixed seed.
pub fn run_experiment(
    config: &PhaseConfig,
    device: &DeviceModel,
    trials: u64,
    seed: u64,
) -> CountLedger {
    run_experiment_with(config, device, trials, seed, RunOptions::default())
}

pub fn run_experiment_with(
    config: &PhaseConfig,
    device: &DeviceModel,
    trials: u64,
    seed: u64,
    options: RunOptions,
) -> CountLedger {
    let n_x = config.n_x();
    let n_y = config.n_y();

    // Distribute runs over settings: the QRNG draws y for every run; x
    // cycles or is drawn depending on the options.
    let mut assign = ChaCha12Rng::seed_from_u64(seed);
    assign.set_stream(ASSIGNMENT_STREAM);
    let mut assigned = vec![0u64; n_x * n_y];
    for t in 0..trials {
        let x = match options.x_draw {
            PreparationDraw::RoundRobin => (t % n_x as u64) as usize,
            PreparationDraw::Uniform => assign.random_range(0..n_x),
        };
        let y = assign.random_range(0..n_y);
        assigned[x * n_y + y] += 1;
    }

    // Each setting consumes its own stream, so settings can run in parallel
    // without affecting the outcome.
    let counts: Vec<SettingCounts> = (0..n_x * n_y)
        .into_par_iter()
        .map(|setting| {
            let x = setting / n_y;
            let y = setting % n_y;
            let p0 = interference_probability(
                config.phi()[x],
                config.sigma()[y],
                device.visibility,
            );
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(setting as u64);
            let mut c = SettingCounts { trigger: assigned[setting], ..Default::default() };
            for _ in 0..c.trigger {
                if options.accounting == Accounting::PerPair
                    && rng.random::<f64>() >= device.t_a
                {
                    c.lost += 1;
                    continue;
                }
                if rng.random::<f64>() >= device.t_b {
                    c.lost += 1;
                    continue;
                }
                if rng.random::<f64>() >= device.eta {
                    c.lost += 1;
                    continue;
                }
                if rng.random::<f64>() < p0 {
                    c.d0 += 1;
                } else {
                    c.d1 += 1;
                }
            }
            c
        })
        .collect();

    CountLedger { n_x, n_y, counts }
}

/// Empirical probability table from a ledger under an assignment policy.
///
/// Post-selection keeps coincidences only: `p(0) = d0 / (d0 + d1)`. The
/// inclusive assignment maps the D0 coincidence to outcome 1 and everything
/// else to outcome 0: `p(1) = d0 / trigger`, `p(0) = (d1 + lost) / trigger`.
/// The outcome labels deliberately flip between the two policies; both
/// witnesses are invariant under a global flip.
pub fn estimate_table(
    ledger: &CountLedger,
    policy: AssignmentPolicy,
) -> Result<ProbabilityTable, SimError> {
    let n_x = ledger.n_x();
    let n_y = ledger.n_y();
    let mut entries = vec![0.0; 2 * n_x * n_y];
    for x in 0..n_x {
        for y in 0..n_y {
            let c = ledger.get(x, y);
            let (p0, p1) = match policy {
                AssignmentPolicy::PostSelected => {
                    let coincidences = c.d0 + c.d1;
                    if coincidences == 0 {
                        return Err(SimError::EmptySetting { x, y });
                    }
                    (c.d0 as f64 / coincidences as f64, c.d1 as f64 / coincidences as f64)
                }
                AssignmentPolicy::InclusiveAssignment => {
                    if c.trigger == 0 {
                        return Err(SimError::EmptySetting { x, y });
                    }
                    (
                        (c.d1 + c.lost) as f64 / c.trigger as f64,
                        c.d0 as f64 / c.trigger as f64,
                    )
                }
            };
            entries[(x * n_y) + y] = p0;
            entries[(n_x + x) * n_y + y] = p1;
        }
    }
    Ok(ProbabilityTable::from_entries(n_x, n_y, entries).expect("consistent shape"))
}

/// Where the per-grid-point probabilities of a sweep come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SweepSource {
    /// Ideal quantum predictions.
    Analytic,
    /// One simulated run per (grid value, measurement) setting.
    Simulated { device: DeviceModel, trials_per_setting: u64, seed: u64 },
}

/// A sweep evaluates the linear witness over every tuple of preparation
/// phases drawn from `grid`, with the two measurement phases fixed. Each grid
/// value is measured (or computed) once per measurement setting and shared by
/// all tuples containing it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub grid: Vec<f64>,
    pub sigma: (f64, f64),
    pub source: SweepSource,
    pub bins: usize,
}

impl SweepSpec {
    pub const DEFAULT_BINS: usize = 100;

    pub fn new(
        grid: Vec<f64>,
        sigma: (f64, f64),
        source: SweepSource,
        bins: usize,
    ) -> Result<Self, SimError> {
        if grid.is_empty() {
            return Err(SimError::EmptyGrid);
        }
        if bins == 0 {
            return Err(SimError::NoBins);
        }
        Ok(Self {
            grid: grid.into_iter().map(reduce_phase).collect(),
            sigma: (reduce_phase(sigma.0), reduce_phase(sigma.1)),
            source,
            bins,
        })
    }

    /// Uniform grid of `n` phases over [0, 2*pi).
    pub fn uniform_grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 * std::f64::consts::TAU / n as f64).collect()
    }
}

/// Fixed-range histogram over the witness value axis [0, 5].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self { lo, hi, counts: vec![0; bins] }
    }

    pub fn add(&mut self, value: f64) {
        let bins = self.counts.len();
        let width = (self.hi - self.lo) / bins as f64;
        let index = (((value - self.lo) / width) as usize).min(bins - 1);
        self.counts[index] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        debug_assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV with header `bin_low,bin_high,count,frequency`.
    pub fn to_csv_string(&self) -> Result<String, SimError> {
        let total = self.total().max(1) as f64;
        let bins = self.counts.len();
        let width = (self.hi - self.lo) / bins as f64;
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(["bin_low", "bin_high", "count", "frequency"])?;
        for (i, &count) in self.counts.iter().enumerate() {
            writer.write_record(&[
                (self.lo + i as f64 * width).to_string(),
                (self.lo + (i + 1) as f64 * width).to_string(),
                count.to_string(),
                (count as f64 / total).to_string(),
            ])?;
        }
        let bytes = writer.into_inner().map_err(|e| SimError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Outcome of a phase sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub histogram: Histogram,
    pub max_value: f64,
    /// Fraction of tuples strictly above the classical bound 3.
    pub fraction_above_classical: f64,
    pub n_tuples: u64,
}

impl SweepResult {
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "max": self.max_value,
            "fraction_above_3": self.fraction_above_classical,
            "n_tuples": self.n_tuples,
        })
    }
}

/// Evaluate the linear witness over all `grid^3` preparation tuples.
///
/// Per-tuple work is table lookups only: each grid value is resolved to its
/// two expectations once, then tuples combine them.
pub fn sweep_idw(spec: &SweepSpec) -> Result<SweepResult, SimError> {
    if spec.grid.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    if spec.bins == 0 {
        return Err(SimError::NoBins);
    }
    let grid_len = spec.grid.len();
    let sigma = [spec.sigma.0, spec.sigma.1];

    // Expectations e[g][y] per grid value, shared by all tuples.
    let expectations: Vec<[f64; 2]> = match &spec.source {
        SweepSource::Analytic => spec
            .grid
            .iter()
            .map(|&phi| [(phi + sigma[0]).cos(), (phi + sigma[1]).cos()])
            .collect(),
        SweepSource::Simulated { device, trials_per_setting, seed } => {
            let config = PhaseConfig::new(spec.grid.clone(), sigma.to_vec())
                .expect("grid phases are finite");
            let trials = trials_per_setting * grid_len as u64 * 2;
            let ledger = run_experiment(&config, device, trials, *seed);
            let table = estimate_table(&ledger, device.policy)?;
            (0..grid_len).map(|g| [table.expectation(g, 0), table.expectation(g, 1)]).collect()
        }
    };

    let merged = (0..grid_len)
        .into_par_iter()
        .map(|g1| {
            let mut histogram = Histogram::new(0.0, 5.0, spec.bins);
            let mut max_value = f64::NEG_INFINITY;
            let mut above = 0u64;
            let e1 = expectations[g1];
            for e2 in &expectations {
                let partial = e1[0] + e1[1] + e2[0] - e2[1];
                for e3 in &expectations {
                    let value = (partial - e3[0]).abs();
                    histogram.add(value);
                    if value > max_value {
                        max_value = value;
                    }
                    if value > 3.0 {
                        above += 1;
                    }
                }
            }
            (histogram, max_value, above)
        })
        .reduce(
            || (Histogram::new(0.0, 5.0, spec.bins), f64::NEG_INFINITY, 0u64),
            |mut a, b| {
                a.0.merge(&b.0);
                (a.0, a.1.max(b.1), a.2 + b.2)
            },
        );

    let n_tuples = (grid_len as u64).pow(3);
    Ok(SweepResult {
        histogram: merged.0,
        max_value: merged.1,
        fraction_above_classical: merged.2 as f64 / n_tuples as f64,
        n_tuples,
    })
}
