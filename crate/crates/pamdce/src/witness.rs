//! The two dimension witnesses, counting-uncertainty propagation, and the
//! derivative-free search for their quantum maxima.
//!
//! The determinant witness reads a 4-preparation, 2-measurement table as the
//! 2x2 matrix of probability differences; it vanishes for every classical
//! bit model with independent devices. The linear witness combines five
//! expectations of a 3-preparation, 2-measurement table; its classical bound
//! is 3 and its qubit bound `1 + 2 sqrt(2)`, with the algebraic ceiling at 5.

use crate::quantum::AssignmentPolicy;
use crate::scenario::{reduce_phase, PhaseConfig};
use crate::sim::CountLedger;
use crate::table::ProbabilityTable;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Classical (d = 2) bound of the linear witness.
pub const IDW_CLASSICAL_BOUND: f64 = 3.0;
/// Qubit bound of the linear witness, 1 + 2 sqrt(2).
pub const IDW_QUANTUM_BOUND: f64 = 3.8284271247461903;
/// Algebraic ceiling of the linear witness (five unit expectations).
pub const IDW_ALGEBRAIC_MAX: f64 = 5.0;
/// Qubit maximum of the determinant witness.
pub const W2_QUANTUM_BOUND: f64 = 1.0;

/// Number of refinement starts used by `maximize_quantum` (half taken from
/// the best coarse-grid points, half drawn from the seeded generator).
pub const MULTISTARTS: usize = 20;

/// Local refinement stops once the coordinate step shrinks below this.
pub const REFINE_MIN_STEP: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum WitnessError {
    #[error("{witness} needs a ({want_x}, {want_y}) table, got ({n_x}, {n_y})")]
    Shape { witness: &'static str, want_x: usize, want_y: usize, n_x: usize, n_y: usize },
    #[error("setting (x={x}, y={y}) has no usable events")]
    EmptySetting { x: usize, y: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WitnessKind {
    W2,
    Idw,
}

impl fmt::Display for WitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WitnessKind::W2 => write!(f, "w2"),
            WitnessKind::Idw => write!(f, "idw"),
        }
    }
}

impl FromStr for WitnessKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "w2" => Ok(WitnessKind::W2),
            "idw" => Ok(WitnessKind::Idw),
            other => Err(format!("unknown witness {other:?}, expected \"w2\" or \"idw\"")),
        }
    }
}

impl WitnessKind {
    /// Table shape (n_x, n_y) the witness reads.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            WitnessKind::W2 => (4, 2),
            WitnessKind::Idw => (3, 2),
        }
    }
}

/// A witness value with its propagated counting uncertainty and, for
/// optimization results, the phases that achieve it.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessResult {
    pub witness: WitnessKind,
    pub value: f64,
    /// Zero for analytic tables; first-order propagated otherwise.
    pub stderr: f64,
    /// Set when some setting had all counts on one outcome, which makes the
    /// propagated variance vanish there.
    pub degenerate: bool,
    pub maximizing_config: Option<PhaseConfig>,
}

impl WitnessResult {
    /// JSON form `{witness, value, stderr, degenerate, phases, sigma}`.
    pub fn to_json(&self) -> serde_json::Value {
        let (phases, sigma) = match &self.maximizing_config {
            Some(config) => (
                serde_json::json!(config.phi()),
                serde_json::json!(config.sigma()),
            ),
            None => (serde_json::Value::Null, serde_json::Value::Null),
        };
        serde_json::json!({
            "witness": self.witness.to_string(),
            "value": self.value,
            "stderr": self.stderr,
            "degenerate": self.degenerate,
            "phases": phases,
            "sigma": sigma,
        })
    }
}

fn check_shape(
    witness: &'static str,
    want: (usize, usize),
    got: (usize, usize),
) -> Result<(), WitnessError> {
    if got != want {
        return Err(WitnessError::Shape {
            witness,
            want_x: want.0,
            want_y: want.1,
            n_x: got.0,
            n_y: got.1,
        });
    }
    Ok(())
}

/// Signed determinant of the 2x2 difference matrix
/// `[[p(0|0,0)-p(0|1,0), p(0|2,0)-p(0|3,0)], [p(0|0,1)-p(0|1,1), p(0|2,1)-p(0|3,1)]]`.
/// The witness statistic is the absolute value.
pub fn det_w2(table: &ProbabilityTable) -> Result<f64, WitnessError> {
    check_shape("w2", (4, 2), (table.n_x(), table.n_y()))?;
    let m = |pair: usize, y: usize| table.p0(2 * pair, y) - table.p0(2 * pair + 1, y);
    Ok(m(0, 0) * m(1, 1) - m(1, 0) * m(0, 1))
}

/// Signed five-term combination `<B00> + <B01> + <B10> - <B11> - <B20>`.
pub(crate) fn i_dw_signed(table: &ProbabilityTable) -> Result<f64, WitnessError> {
    check_shape("idw", (3, 2), (table.n_x(), table.n_y()))?;
    let e = |x: usize, y: usize| table.expectation(x, y);
    Ok(e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1) - e(2, 0))
}

/// The linear witness `|<B00> + <B01> + <B10> - <B11> - <B20>|`. The table
/// entry at (x=2, y=1) is never read.
pub fn i_dw(table: &ProbabilityTable) -> Result<f64, WitnessError> {
    Ok(i_dw_signed(table)?.abs())
}

/// Per-setting counts assigned to the two outcomes under a policy.
fn assigned_counts(
    ledger: &CountLedger,
    x: usize,
    y: usize,
    policy: AssignmentPolicy,
) -> Result<(f64, f64), WitnessError> {
    let c = ledger.get(x, y);
    if c.trigger == 0 {
        return Err(WitnessError::EmptySetting { x, y });
    }
    match policy {
        AssignmentPolicy::PostSelected => {
            if c.d0 + c.d1 == 0 {
                return Err(WitnessError::EmptySetting { x, y });
            }
            Ok((c.d0 as f64, c.d1 as f64))
        }
        // Outcome 1 is the D0 coincidence; everything else, lost runs
        // included, is outcome 0.
        AssignmentPolicy::InclusiveAssignment => Ok(((c.d1 + c.lost) as f64, c.d0 as f64)),
    }
}

/// Witness value from empirical frequencies with first-order uncertainty
/// propagation.
///
/// Each setting contributes a binomial variance
/// `Var(<B>) = 4 n0 n1 / (n0 + n1)^3`; settings are treated as independent
/// and the propagation runs through the signed witness, so the reported
/// stderr is that of the signed quantity even though `value` is its absolute
/// value.
pub fn witness_stderr(
    ledger: &CountLedger,
    kind: WitnessKind,
    policy: AssignmentPolicy,
) -> Result<WitnessResult, WitnessError> {
    let want = kind.shape();
    check_shape(
        match kind {
            WitnessKind::W2 => "w2",
            WitnessKind::Idw => "idw",
        },
        want,
        (ledger.n_x(), ledger.n_y()),
    )?;

    let (n_x, n_y) = want;
    let mut p0 = vec![0.0; n_x * n_y];
    let mut var_p0 = vec![0.0; n_x * n_y];
    let mut degenerate = false;
    for x in 0..n_x {
        for y in 0..n_y {
            let (n0, n1) = assigned_counts(ledger, x, y, policy)?;
            let total = n0 + n1;
            p0[x * n_y + y] = n0 / total;
            var_p0[x * n_y + y] = n0 * n1 / (total * total * total);
            if n0 == 0.0 || n1 == 0.0 {
                degenerate = true;
            }
        }
    }
    let p = |x: usize, y: usize| p0[x * n_y + y];
    let v = |x: usize, y: usize| var_p0[x * n_y + y];

    let (value, variance) = match kind {
        WitnessKind::Idw => {
            let e = |x: usize, y: usize| 2.0 * p(x, y) - 1.0;
            let signed = e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1) - e(2, 0);
            // Var(<B>) = 4 Var(p0); coefficients are all +/-1.
            let variance =
                4.0 * (v(0, 0) + v(0, 1) + v(1, 0) + v(1, 1) + v(2, 0));
            (signed.abs(), variance)
        }
        WitnessKind::W2 => {
            let m00 = p(0, 0) - p(1, 0);
            let m01 = p(2, 0) - p(3, 0);
            let m10 = p(0, 1) - p(1, 1);
            let m11 = p(2, 1) - p(3, 1);
            let det = m00 * m11 - m01 * m10;
            let variance = m11 * m11 * (v(0, 0) + v(1, 0))
                + m10 * m10 * (v(2, 0) + v(3, 0))
                + m01 * m01 * (v(0, 1) + v(1, 1))
                + m00 * m00 * (v(2, 1) + v(3, 1));
            (det.abs(), variance)
        }
    };

    Ok(WitnessResult {
        witness: kind,
        value,
        stderr: variance.sqrt(),
        degenerate,
        maximizing_config: None,
    })
}

/// Closed-form witness value at given phases, used by the optimizer.
fn phase_objective(kind: WitnessKind, phi: &[f64], sigma: &[f64]) -> f64 {
    match kind {
        WitnessKind::Idw => {
            let e = |x: usize, y: usize| (phi[x] + sigma[y]).cos();
            (e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1) - e(2, 0)).abs()
        }
        WitnessKind::W2 => {
            let p = |x: usize, y: usize| 0.5 * (1.0 + (phi[x] + sigma[y]).cos());
            let m00 = p(0, 0) - p(1, 0);
            let m01 = p(2, 0) - p(3, 0);
            let m10 = p(0, 1) - p(1, 1);
            let m11 = p(2, 1) - p(3, 1);
            (m00 * m11 - m01 * m10).abs()
        }
    }
}

fn split_vars<'a>(
    kind: WitnessKind,
    z: &'a [f64],
    fixed_sigma: &Option<(f64, f64)>,
) -> (&'a [f64], [f64; 2]) {
    let n_phi = kind.shape().0;
    match fixed_sigma {
        Some((a, b)) => (&z[..n_phi], [*a, *b]),
        None => (&z[..n_phi], [z[n_phi], z[n_phi + 1]]),
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Compass search on the periodic domain: tries +/- step on each coordinate,
/// rides improving directions, halves the step when a sweep stalls.
fn refine(
    eval: &(impl Fn(&[f64]) -> f64 + Sync),
    start: &[f64],
    initial_step: f64,
) -> (f64, Vec<f64>) {
    let mut z = start.to_vec();
    let mut value = eval(&z);
    let mut step = initial_step;
    while step >= REFINE_MIN_STEP {
        let mut improved = false;
        for i in 0..z.len() {
            for dir in [1.0, -1.0] {
                let original = z[i];
                z[i] = reduce_phase(original + dir * step);
                let trial = eval(&z);
                if trial > value {
                    value = trial;
                    improved = true;
                    loop {
                        let here = z[i];
                        z[i] = reduce_phase(here + dir * step);
                        let further = eval(&z);
                        if further > value {
                            value = further;
                        } else {
                            z[i] = here;
                            break;
                        }
                    }
                    break;
                }
                z[i] = original;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (value, z)
}

/// Numerically maximize a witness over the free phases.
///
/// A coarse scan over `grid_n` points per free coordinate seeds half of the
/// `MULTISTARTS` refinement starts; the other half are uniform draws from the
/// seeded generator. Each start is refined by compass search until the step
/// falls below `REFINE_MIN_STEP`. Exact value ties are broken towards the
/// lexicographically smallest reduced phase tuple.
///
/// Panics if `grid_n < 8`.
pub fn maximize_quantum(
    kind: WitnessKind,
    fixed_sigma: Option<(f64, f64)>,
    grid_n: usize,
    seed: u64,
) -> WitnessResult {
    assert!(grid_n >= 8, "grid_n must be at least 8, got {grid_n}");
    let n_phi = kind.shape().0;
    let dim = n_phi + if fixed_sigma.is_some() { 0 } else { 2 };
    let fixed = fixed_sigma.map(|(a, b)| (reduce_phase(a), reduce_phase(b)));
    let eval = move |z: &[f64]| {
        let (phi, sigma) = split_vars(kind, z, &fixed);
        phase_objective(kind, phi, &sigma)
    };
    let spacing = TAU / grid_n as f64;

    // Coarse scan, keeping the best grid points as refinement starts.
    let keep = MULTISTARTS / 2;
    let mut top: Vec<(f64, Vec<f64>)> = Vec::with_capacity(keep + 1);
    let mut z = vec![0.0; dim];
    let mut counter = vec![0usize; dim];
    loop {
        let value = eval(&z);
        if top.len() < keep || value > top.last().expect("nonempty").0 {
            let position = top
                .iter()
                .position(|(v, _)| value > *v)
                .unwrap_or(top.len());
            top.insert(position, (value, z.clone()));
            top.truncate(keep);
        }
        // Odometer over the grid.
        let mut i = 0;
        loop {
            if i == dim {
                break;
            }
            counter[i] += 1;
            if counter[i] < grid_n {
                z[i] = counter[i] as f64 * spacing;
                break;
            }
            counter[i] = 0;
            z[i] = 0.0;
            i += 1;
        }
        if i == dim {
            break;
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut starts: Vec<Vec<f64>> = top.into_iter().map(|(_, z)| z).collect();
    while starts.len() < MULTISTARTS {
        starts.push((0..dim).map(|_| rng.random_range(0.0..TAU)).collect());
    }

    let refined: Vec<(f64, Vec<f64>)> = starts
        .par_iter()
        .map(|start| refine(&eval, start, spacing))
        .collect();

    let mut best_value = f64::NEG_INFINITY;
    let mut best_z: Vec<f64> = vec![0.0; dim];
    for (value, z) in refined {
        let z: Vec<f64> = z.into_iter().map(reduce_phase).collect();
        if value > best_value || (value == best_value && lex_less(&z, &best_z)) {
            best_value = value;
            best_z = z;
        }
    }

    let (phi, sigma) = split_vars(kind, &best_z, &fixed);
    let config = PhaseConfig::new(phi.to_vec(), vec![sigma[0], sigma[1]])
        .expect("optimizer phases are finite");
    WitnessResult {
        witness: kind,
        value: best_value,
        stderr: 0.0,
        degenerate: false,
        maximizing_config: Some(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::ideal_table;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_table(rng: &mut ChaCha12Rng, n_x: usize, n_y: usize) -> ProbabilityTable {
        let values: Vec<f64> = (0..n_x * n_y).map(|_| rng.random_range(0.0..=1.0)).collect();
        ProbabilityTable::from_p0(n_x, n_y, |x, y| values[x * n_y + y])
    }

    #[test]
    fn det_matches_hand_expansion_on_random_tables() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = random_table(&mut rng, 4, 2);
            let hand = (t.p0(0, 0) - t.p0(1, 0)) * (t.p0(2, 1) - t.p0(3, 1))
                - (t.p0(2, 0) - t.p0(3, 0)) * (t.p0(0, 1) - t.p0(1, 1));
            assert!((det_w2(&t).unwrap() - hand).abs() < 1e-12);
        }
    }

    #[test]
    fn idw_matches_hand_expansion_on_random_tables() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let t = random_table(&mut rng, 3, 2);
            let e = |x: usize, y: usize| t.p0(x, y) - t.get(1, x, y);
            let hand = (e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1) - e(2, 0)).abs();
            let got = i_dw(&t).unwrap();
            assert!((got - hand).abs() < 1e-12);
            assert!(got <= IDW_ALGEBRAIC_MAX + 1e-12);
        }
    }

    #[test]
    fn witness_shapes_are_enforced() {
        let uniform32 = ProbabilityTable::from_p0(3, 2, |_, _| 0.5);
        assert!(matches!(det_w2(&uniform32), Err(WitnessError::Shape { .. })));
        let uniform42 = ProbabilityTable::from_p0(4, 2, |_, _| 0.5);
        assert!(matches!(i_dw(&uniform42), Err(WitnessError::Shape { .. })));
    }

    #[test]
    fn uniform_tables_score_zero() {
        assert_eq!(det_w2(&ProbabilityTable::from_p0(4, 2, |_, _| 0.5)).unwrap(), 0.0);
        assert_eq!(i_dw(&ProbabilityTable::from_p0(3, 2, |_, _| 0.5)).unwrap(), 0.0);
    }

    #[test]
    fn constant_zero_outcome_scores_one_on_linear_witness() {
        let table = ProbabilityTable::from_p0(3, 2, |_, _| 1.0);
        assert_eq!(i_dw(&table).unwrap(), 1.0);
    }

    #[test]
    fn quantum_point_saturates_linear_witness() {
        let config = PhaseConfig::new(
            vec![7.0 * PI / 4.0, 5.0 * PI / 4.0, FRAC_PI_2],
            vec![FRAC_PI_2, 0.0],
        )
        .unwrap();
        let value = i_dw(&ideal_table(&config)).unwrap();
        assert!((value - IDW_QUANTUM_BOUND).abs() < 1e-12);
        assert!((IDW_QUANTUM_BOUND - (1.0 + 2.0 * 2.0f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn phase_shift_invariance_of_both_witnesses() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        for _ in 0..1000 {
            let c = rng.random_range(-TAU..TAU);
            let phi4: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..TAU)).collect();
            let sigma: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..TAU)).collect();
            let config4 = PhaseConfig::new(phi4.clone(), sigma.clone()).unwrap();
            let det_a = det_w2(&ideal_table(&config4)).unwrap();
            let det_b = det_w2(&ideal_table(&config4.shifted(c))).unwrap();
            assert!((det_a - det_b).abs() < 1e-12);

            let config3 = PhaseConfig::new(phi4[..3].to_vec(), sigma).unwrap();
            let idw_a = i_dw(&ideal_table(&config3)).unwrap();
            let idw_b = i_dw(&ideal_table(&config3.shifted(c))).unwrap();
            assert!((idw_a - idw_b).abs() < 1e-12);
        }
    }

    #[test]
    fn optimizer_recovers_linear_witness_quantum_bound() {
        let result = maximize_quantum(WitnessKind::Idw, None, 10, 7);
        assert!((result.value - IDW_QUANTUM_BOUND).abs() < 1e-6, "got {}", result.value);
        assert!(result.value <= IDW_QUANTUM_BOUND + 1e-9);
        // The reported config reproduces the reported value through the
        // full Born pipeline.
        let config = result.maximizing_config.unwrap();
        let table_value = i_dw(&ideal_table(&config)).unwrap();
        assert!((table_value - result.value).abs() < 1e-9);
    }

    #[test]
    fn optimizer_recovers_determinant_quantum_bound() {
        let result = maximize_quantum(WitnessKind::W2, None, 8, 7);
        assert!((result.value - W2_QUANTUM_BOUND).abs() < 1e-6, "got {}", result.value);
        let config = result.maximizing_config.unwrap();
        let table_value = det_w2(&ideal_table(&config)).unwrap().abs();
        assert!((table_value - result.value).abs() < 1e-9);
    }

    #[test]
    fn optimizer_with_equal_measurements_collapses_to_classical_value() {
        // Dense-grid oracle over the three preparation phases.
        let sigma = [1.1, 1.1];
        let mut oracle = 0.0f64;
        let n = 120;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let phi = [
                        i as f64 * TAU / n as f64,
                        j as f64 * TAU / n as f64,
                        k as f64 * TAU / n as f64,
                    ];
                    oracle = oracle.max(phase_objective(WitnessKind::Idw, &phi, &sigma));
                }
            }
        }
        assert!(oracle <= 3.0 + 1e-9);

        let result = maximize_quantum(WitnessKind::Idw, Some((1.1, 1.1)), 10, 3);
        assert!((result.value - 3.0).abs() < 1e-6, "got {}", result.value);
        assert!(result.value + 1e-9 >= oracle);
    }

    #[test]
    fn stderr_for_balanced_counts_is_inverse_sqrt_n() {
        use crate::sim::SettingCounts;
        let n = 10_000u64;
        let ledger = CountLedger::from_counts(
            3,
            2,
            vec![
                SettingCounts { trigger: n, d0: n / 2, d1: n / 2, lost: 0 };
                6
            ],
        )
        .unwrap();
        let result = witness_stderr(&ledger, WitnessKind::Idw, AssignmentPolicy::PostSelected)
            .unwrap();
        // Five settings, each with Var(<B>) = 1/n.
        let expected = (5.0 / n as f64).sqrt();
        assert!((result.stderr - expected).abs() < 1e-12);
        assert_eq!(result.value, 0.0);
        assert!(!result.degenerate);
    }

    #[test]
    fn stderr_degenerate_setting_is_flagged() {
        use crate::sim::SettingCounts;
        let mut counts = vec![SettingCounts { trigger: 100, d0: 50, d1: 50, lost: 0 }; 6];
        counts[0] = SettingCounts { trigger: 100, d0: 100, d1: 0, lost: 0 };
        let ledger = CountLedger::from_counts(3, 2, counts).unwrap();
        let result = witness_stderr(&ledger, WitnessKind::Idw, AssignmentPolicy::PostSelected)
            .unwrap();
        assert!(result.degenerate);
        assert!((result.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stderr_empty_setting_is_an_error() {
        use crate::sim::SettingCounts;
        let mut counts = vec![SettingCounts { trigger: 100, d0: 50, d1: 50, lost: 0 }; 6];
        counts[3] = SettingCounts { trigger: 100, d0: 0, d1: 0, lost: 100 };
        let ledger = CountLedger::from_counts(3, 2, counts).unwrap();
        assert!(matches!(
            witness_stderr(&ledger, WitnessKind::Idw, AssignmentPolicy::PostSelected),
            Err(WitnessError::EmptySetting { x: 1, y: 1 })
        ));
        // The inclusive assignment uses every trigger, so it still works.
        let inclusive =
            witness_stderr(&ledger, WitnessKind::Idw, AssignmentPolicy::InclusiveAssignment);
        assert!(inclusive.is_ok());
    }

    #[test]
    fn witness_result_json_shape() {
        let result = WitnessResult {
            witness: WitnessKind::Idw,
            value: 3.5,
            stderr: 0.01,
            degenerate: false,
            maximizing_config: None,
        };
        let json = result.to_json();
        assert_eq!(json["witness"], "idw");
        assert_eq!(json["phases"], serde_json::Value::Null);
        assert!(json["value"].as_f64().unwrap() > 0.0);
    }
}
