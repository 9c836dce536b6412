//! Classical hidden-variable strategies of bounded message dimension.
//!
//! A deterministic strategy is an encoder `x -> lambda` into `{0, ..., d-1}`
//! plus a decoder `(lambda, y) -> b`. Mixtures of deterministic strategies
//! exhaust the classical set. Two flavours of randomness matter here:
//! independent randomness on each device (which keeps the determinant witness
//! at zero) and shared randomness correlating the two devices (which defeats
//! it) - the linear witness survives both.

use crate::scenario::PamScenario;
use crate::table::ProbabilityTable;
use crate::witness;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Enumeration refuses to materialize more strategies than this by default.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Default cardinality of the shared-randomness variable in searches. Four
/// components already saturate the 2x2 determinant objective; the bound is a
/// practical cap, not a theorem.
pub const DEFAULT_COMPONENT_CAP: usize = 4;

/// Weights of a mixture must sum to 1 within this tolerance.
pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ClassicalError {
    #[error("enumeration would produce {required} strategies, above the cap {cap}")]
    CapExceeded { required: u128, cap: u128 },
    #[error("encoder must map {expected} inputs into 0..{dim}, got {got:?}")]
    BadEncoder { expected: usize, dim: usize, got: Vec<usize> },
    #[error("decoder must define {expected} binary outcomes, got {got}")]
    BadDecoder { expected: usize, got: usize },
    #[error("mixture weights sum to {0}, not 1")]
    BadWeights(f64),
    #[error("mixture needs at least one component")]
    EmptyMixture,
    #[error("mixture components have mismatched shapes")]
    MixedShapes,
}

/// Deterministic encoder/decoder pair for a given scenario shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    dim: usize,
    n_y: usize,
    /// Message sent for each preparation input, `encoder[x] in 0..dim`.
    encoder: Vec<usize>,
    /// Outcome for each (message, measurement) pair, `decoder[lambda * n_y + y]`.
    decoder: Vec<u8>,
}

impl DeterministicStrategy {
    pub fn new(
        dim: usize,
        n_y: usize,
        encoder: Vec<usize>,
        decoder: Vec<u8>,
    ) -> Result<Self, ClassicalError> {
        if encoder.is_empty() || encoder.iter().any(|&m| m >= dim) {
            return Err(ClassicalError::BadEncoder { expected: encoder.len(), dim, got: encoder });
        }
        if decoder.len() != dim * n_y || decoder.iter().any(|&b| b > 1) {
            return Err(ClassicalError::BadDecoder { expected: dim * n_y, got: decoder.len() });
        }
        Ok(Self { dim, n_y, encoder, decoder })
    }

    pub fn n_x(&self) -> usize {
        self.encoder.len()
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoder(&self) -> &[usize] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[u8] {
        &self.decoder
    }

    /// Outcome produced for preparation `x` and measurement `y`.
    pub fn outcome(&self, x: usize, y: usize) -> u8 {
        self.decoder[self.encoder[x] * self.n_y + y]
    }

    /// The 0/1 probability table this strategy generates.
    pub fn table(&self) -> ProbabilityTable {
        ProbabilityTable::from_p0(self.n_x(), self.n_y, |x, y| {
            if self.outcome(x, y) == 0 {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Mixture of deterministic strategies correlated through shared randomness:
/// one hidden value selects the component on both devices at once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedStrategy {
    components: Vec<(f64, DeterministicStrategy)>,
}

impl CorrelatedStrategy {
    pub fn new(components: Vec<(f64, DeterministicStrategy)>) -> Result<Self, ClassicalError> {
        let first = components.first().ok_or(ClassicalError::EmptyMixture)?.1.clone();
        if components.iter().any(|(_, s)| {
            s.n_x() != first.n_x() || s.n_y() != first.n_y() || s.dim() != first.dim()
        }) {
            return Err(ClassicalError::MixedShapes);
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > WEIGHT_TOL || components.iter().any(|(w, _)| *w < 0.0) {
            return Err(ClassicalError::BadWeights(total));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[(f64, DeterministicStrategy)] {
        &self.components
    }

    /// Weighted mixture of the component tables.
    pub fn table(&self) -> ProbabilityTable {
        let tables: Vec<(f64, ProbabilityTable)> =
            self.components.iter().map(|(w, s)| (*w, s.table())).collect();
        let refs: Vec<(f64, &ProbabilityTable)> = tables.iter().map(|(w, t)| (*w, t)).collect();
        ProbabilityTable::mix(&refs).expect("components validated at construction")
    }
}

/// Number of deterministic strategies, `d^n_x * 2^(d * n_y)`.
pub fn strategy_count(scenario: &PamScenario) -> Option<u128> {
    let encoders = (scenario.dim() as u128).checked_pow(scenario.n_x() as u32)?;
    let decoders = 2u128.checked_pow((scenario.dim() * scenario.n_y()) as u32)?;
    encoders.checked_mul(decoders)
}

/// All deterministic strategies in lexicographic (encoder, decoder) order,
/// refusing to run above `DEFAULT_ENUMERATION_CAP`.
pub fn enumerate_deterministic(
    scenario: &PamScenario,
) -> Result<Vec<DeterministicStrategy>, ClassicalError> {
    enumerate_deterministic_with_cap(scenario, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_deterministic_with_cap(
    scenario: &PamScenario,
    cap: u128,
) -> Result<Vec<DeterministicStrategy>, ClassicalError> {
    let required = strategy_count(scenario)
        .ok_or(ClassicalError::CapExceeded { required: u128::MAX, cap })?;
    if required > cap {
        return Err(ClassicalError::CapExceeded { required, cap });
    }
    let d = scenario.dim();
    let n_x = scenario.n_x();
    let n_y = scenario.n_y();
    let n_encoders = (d as u128).pow(n_x as u32) as usize;
    let n_decoders = 2usize.pow((d * n_y) as u32);

    let mut strategies = Vec::with_capacity(required as usize);
    for enc_id in 0..n_encoders {
        // Base-d digits, x = 0 most significant, so the order is lexicographic.
        let mut encoder = vec![0usize; n_x];
        let mut rest = enc_id;
        for x in (0..n_x).rev() {
            encoder[x] = rest % d;
            rest /= d;
        }
        for dec_id in 0..n_decoders {
            let mut decoder = vec![0u8; d * n_y];
            let mut rest = dec_id;
            for slot in (0..d * n_y).rev() {
                decoder[slot] = (rest % 2) as u8;
                rest /= 2;
            }
            strategies.push(DeterministicStrategy { dim: d, n_y, encoder: encoder.clone(), decoder });
        }
    }
    Ok(strategies)
}

/// Maximum of a witness over all deterministic strategies, together with the
/// first (lexicographically smallest) maximizer.
///
/// Both witnesses used here are convex in the table, so this maximum also
/// bounds every independent-device mixture.
pub fn classical_max(
    witness: impl Fn(&ProbabilityTable) -> f64,
    scenario: &PamScenario,
) -> Result<(f64, DeterministicStrategy), ClassicalError> {
    let strategies = enumerate_deterministic(scenario)?;
    let mut best_value = f64::NEG_INFINITY;
    let mut best: Option<DeterministicStrategy> = None;
    for strategy in strategies {
        let value = witness(&strategy.table());
        if value > best_value {
            best_value = value;
            best = Some(strategy);
        }
    }
    Ok((best_value, best.expect("at least one strategy exists")))
}

/// Table of an independent-device classical model: a mixture over encoders on
/// the preparation side and an independent mixture over decoders on the
/// measurement side, combined as a product.
///
/// `encoders` holds `(weight, encoder)` with each encoder of length `n_x`;
/// `decoders` holds `(weight, decoder)` with each decoder of length
/// `dim * n_y`, flattened as `lambda * n_y + y`.
pub fn independent_mixture_table(
    encoders: &[(f64, Vec<usize>)],
    decoders: &[(f64, Vec<u8>)],
    scenario: &PamScenario,
) -> Result<ProbabilityTable, ClassicalError> {
    if encoders.is_empty() || decoders.is_empty() {
        return Err(ClassicalError::EmptyMixture);
    }
    let d = scenario.dim();
    let n_x = scenario.n_x();
    let n_y = scenario.n_y();
    for (_, encoder) in encoders {
        if encoder.len() != n_x || encoder.iter().any(|&m| m >= d) {
            return Err(ClassicalError::BadEncoder {
                expected: n_x,
                dim: d,
                got: encoder.clone(),
            });
        }
    }
    for (_, decoder) in decoders {
        if decoder.len() != d * n_y || decoder.iter().any(|&b| b > 1) {
            return Err(ClassicalError::BadDecoder { expected: d * n_y, got: decoder.len() });
        }
    }
    for weights in [
        encoders.iter().map(|(w, _)| *w).sum::<f64>(),
        decoders.iter().map(|(w, _)| *w).sum::<f64>(),
    ] {
        if (weights - 1.0).abs() > WEIGHT_TOL {
            return Err(ClassicalError::BadWeights(weights));
        }
    }

    // p(lambda|x) from the encoder mixture.
    let mut message_dist = vec![0.0; n_x * d];
    for (w, encoder) in encoders {
        for (x, &lambda) in encoder.iter().enumerate() {
            message_dist[x * d + lambda] += w;
        }
    }
    // p(0|lambda, y) from the decoder mixture.
    let mut outcome_dist = vec![0.0; d * n_y];
    for (w, decoder) in decoders {
        for (slot, &b) in decoder.iter().enumerate() {
            if b == 0 {
                outcome_dist[slot] += w;
            }
        }
    }
    Ok(ProbabilityTable::from_p0(n_x, n_y, |x, y| {
        (0..d).map(|lambda| message_dist[x * d + lambda] * outcome_dist[lambda * n_y + y]).sum()
    }))
}

/// |det W2| of an independent-device product mixture. The difference matrix of
/// a product model has rank at most one, so the result is zero up to roundoff.
pub fn independent_det_w2(
    encoders: &[(f64, Vec<usize>)],
    decoders: &[(f64, Vec<u8>)],
) -> Result<f64, ClassicalError> {
    let scenario = PamScenario::w2();
    let table = independent_mixture_table(encoders, decoders, &scenario)?;
    Ok(witness::det_w2(&table).expect("table has W2 shape").abs())
}

/// Two-component shared-randomness strategy achieving |det W2| = 1 exactly.
///
/// Both components separate preparations 1/2 on the first measurement and 3/4
/// on the second; they disagree on the cross terms, which cancel in the
/// equal-weight mixture and leave the identity as the difference matrix.
pub fn correlated_certificate() -> CorrelatedStrategy {
    let first = DeterministicStrategy::new(2, 2, vec![0, 1, 0, 1], vec![0, 0, 1, 1]).unwrap();
    let second = DeterministicStrategy::new(2, 2, vec![0, 1, 1, 0], vec![0, 1, 1, 0]).unwrap();
    CorrelatedStrategy::new(vec![(0.5, first), (0.5, second)]).unwrap()
}

/// Randomized hill-climbing search for the largest |det W2| reachable with
/// `n_components` shared-randomness components in the 4x2, d = 2 scenario.
///
/// Each pass re-optimizes one component exhaustively (256 encoder/decoder
/// combinations) given the others, then tries weight transfers with a
/// shrinking step; passes repeat until no move improves. Deterministic for a
/// fixed seed. A single component is a rank-one model, so `n_components = 1`
/// always yields zero; two components suffice to reach the supremum 1.
pub fn correlated_det_search(
    n_components: usize,
    restarts: usize,
    seed: u64,
) -> (f64, CorrelatedStrategy) {
    assert!(n_components >= 1, "need at least one component");
    let scenario = PamScenario::w2();
    let n_x = scenario.n_x();
    let n_y = scenario.n_y();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let objective = |components: &[(f64, DeterministicStrategy)]| -> f64 {
        let tables: Vec<(f64, ProbabilityTable)> =
            components.iter().map(|(w, s)| (*w, s.table())).collect();
        let refs: Vec<(f64, &ProbabilityTable)> = tables.iter().map(|(w, t)| (*w, t)).collect();
        let table = ProbabilityTable::mix(&refs).expect("uniform shapes");
        witness::det_w2(&table).expect("W2 shape").abs()
    };

    let all_strategies: Vec<DeterministicStrategy> = enumerate_deterministic(&scenario)
        .expect("256 strategies is far below the cap");

    let mut best_value = f64::NEG_INFINITY;
    let mut best: Option<Vec<(f64, DeterministicStrategy)>> = None;

    for _ in 0..restarts.max(1) {
        let mut components: Vec<(f64, DeterministicStrategy)> = (0..n_components)
            .map(|_| {
                let strategy = DeterministicStrategy {
                    dim: 2,
                    n_y,
                    encoder: (0..n_x).map(|_| rng.random_range(0..2usize)).collect(),
                    decoder: (0..2 * n_y).map(|_| rng.random_range(0..2u8)).collect(),
                };
                (1.0 / n_components as f64, strategy)
            })
            .collect();
        let mut value = objective(&components);

        loop {
            let mut improved = false;

            // Exhaustive block update of each component's encoder/decoder.
            for slot in 0..n_components {
                let mut slot_best = value;
                let mut slot_choice: Option<DeterministicStrategy> = None;
                for candidate in &all_strategies {
                    let previous =
                        std::mem::replace(&mut components[slot].1, candidate.clone());
                    let trial = objective(&components);
                    if trial > slot_best + 1e-15 {
                        slot_best = trial;
                        slot_choice = Some(candidate.clone());
                    }
                    components[slot].1 = previous;
                }
                if let Some(choice) = slot_choice {
                    components[slot].1 = choice;
                    value = slot_best;
                    improved = true;
                }
            }

            // Pairwise weight transfers with shrinking steps.
            for from in 0..n_components {
                for to in 0..n_components {
                    if from == to {
                        continue;
                    }
                    for step in [0.5f64, 0.25, 0.1, 0.05, 0.02, 0.01] {
                        let delta = step.min(components[from].0);
                        if delta <= 0.0 {
                            continue;
                        }
                        components[from].0 -= delta;
                        components[to].0 += delta;
                        let trial = objective(&components);
                        if trial > value + 1e-15 {
                            value = trial;
                            improved = true;
                        } else {
                            components[from].0 += delta;
                            components[to].0 -= delta;
                        }
                    }
                }
            }

            if !improved {
                break;
            }
        }

        if value > best_value {
            best_value = value;
            best = Some(components);
        }
    }

    let components = best.expect("at least one restart ran");
    // Weights stay on the simplex throughout the moves; renormalize residue.
    let total: f64 = components.iter().map(|(w, _)| w).sum();
    let normalized: Vec<(f64, DeterministicStrategy)> =
        components.into_iter().map(|(w, s)| (w / total, s)).collect();
    (best_value, CorrelatedStrategy::new(normalized).expect("valid mixture"))
}

/// Minimal retro-causal influence of the measurement choice on the hidden
/// variable required to classically explain a linear-witness value:
/// `max((value - 3) / 4, 0)`.
pub fn min_retrocausality(i_dw_value: f64) -> f64 {
    ((i_dw_value - 3.0) / 4.0).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::witness::{det_w2, i_dw};
    use rand::Rng;

    #[test]
    fn enumeration_counts_match_formula() {
        // d^n_x * 2^(d n_y), checked by exhaustive generation.
        let idw = enumerate_deterministic(&PamScenario::idw()).unwrap();
        assert_eq!(idw.len(), 128);
        let w2 = enumerate_deterministic(&PamScenario::w2()).unwrap();
        assert_eq!(w2.len(), 256);
        let trivial = enumerate_deterministic(&PamScenario::new(2, 2, 1).unwrap()).unwrap();
        assert_eq!(trivial.len(), 4);
    }

    #[test]
    fn enumeration_is_distinct_and_lexicographic() {
        let strategies = enumerate_deterministic(&PamScenario::idw()).unwrap();
        for pair in strategies.windows(2) {
            let a = (&pair[0].encoder, &pair[0].decoder);
            let b = (&pair[1].encoder, &pair[1].decoder);
            assert!(a < b, "not strictly increasing: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn enumeration_cap_enforced() {
        let big = PamScenario::new(12, 4, 4).unwrap();
        assert!(matches!(
            enumerate_deterministic(&big),
            Err(ClassicalError::CapExceeded { .. })
        ));
    }

    #[test]
    fn constant_strategy_table() {
        let strategy = DeterministicStrategy::new(2, 2, vec![0, 0, 0], vec![0, 0, 0, 0]).unwrap();
        let table = strategy.table();
        for x in 0..3 {
            for y in 0..2 {
                assert_eq!(table.p0(x, y), 1.0);
            }
        }
    }

    #[test]
    fn equal_mixture_of_constant_strategies_is_uniform() {
        let zeros = DeterministicStrategy::new(2, 2, vec![0, 0, 0], vec![0, 0, 0, 0]).unwrap();
        let ones = DeterministicStrategy::new(2, 2, vec![0, 0, 0], vec![1, 1, 1, 1]).unwrap();
        let mixture = CorrelatedStrategy::new(vec![(0.5, zeros), (0.5, ones)]).unwrap();
        let table = mixture.table();
        for x in 0..3 {
            for y in 0..2 {
                assert_eq!(table.p0(x, y), 0.5);
            }
        }
    }

    #[test]
    fn parity_strategy_table() {
        // encoder lambda = x mod 2, decoder b = lambda.
        let strategy = DeterministicStrategy::new(2, 2, vec![0, 1], vec![0, 0, 1, 1]).unwrap();
        let table = strategy.table();
        for y in 0..2 {
            assert_eq!(table.p0(0, y), 1.0);
            assert_eq!(table.p0(1, y), 0.0);
        }
    }

    #[test]
    fn strategy_tables_validate() {
        let scenario = PamScenario::idw();
        for strategy in enumerate_deterministic(&scenario).unwrap() {
            strategy.table().validate(&scenario).unwrap();
        }
    }

    #[test]
    fn classical_maximum_of_linear_witness_is_three() {
        let (value, maximizer) =
            classical_max(|t| i_dw(t).unwrap(), &PamScenario::idw()).unwrap();
        assert_eq!(value, 3.0);
        assert_eq!(i_dw(&maximizer.table()).unwrap(), 3.0);
    }

    #[test]
    fn classical_maximum_of_constant_witness() {
        let (value, _) = classical_max(|_| 0.25, &PamScenario::idw()).unwrap();
        assert_eq!(value, 0.25);
    }

    #[test]
    fn every_deterministic_w2_determinant_vanishes() {
        for strategy in enumerate_deterministic(&PamScenario::w2()).unwrap() {
            let det = det_w2(&strategy.table()).unwrap();
            assert_eq!(det, 0.0, "strategy {strategy:?}");
        }
    }

    #[test]
    fn independent_product_mixtures_stay_rank_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n_enc = rng.random_range(1..=4);
            let n_dec = rng.random_range(1..=4);
            let encoders = random_simplex_mix(&mut rng, n_enc, |rng| {
                (0..4).map(|_| rng.random_range(0..2usize)).collect::<Vec<_>>()
            });
            let decoders = random_simplex_mix(&mut rng, n_dec, |rng| {
                (0..4).map(|_| rng.random_range(0..2u8)).collect::<Vec<_>>()
            });
            let det = independent_det_w2(&encoders, &decoders).unwrap();
            assert!(det <= 1e-12, "det = {det}");
        }
    }

    #[test]
    fn uniform_mixture_table_has_zero_determinant() {
        let encoders = vec![(0.5, vec![0, 0, 0, 0]), (0.5, vec![1, 1, 1, 1])];
        let decoders = vec![(0.5, vec![0, 0, 1, 1]), (0.5, vec![1, 1, 0, 0])];
        let det = independent_det_w2(&encoders, &decoders).unwrap();
        assert!(det <= 1e-12);
    }

    fn random_simplex_mix<T>(
        rng: &mut ChaCha12Rng,
        n: usize,
        mut gen: impl FnMut(&mut ChaCha12Rng) -> T,
    ) -> Vec<(f64, T)> {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| (w / total, gen(rng))).collect()
    }

    #[test]
    fn certificate_reaches_unit_determinant() {
        let certificate = correlated_certificate();
        let det = det_w2(&certificate.table()).unwrap();
        assert_eq!(det.abs(), 1.0);
    }

    #[test]
    fn single_component_search_is_stuck_at_zero() {
        let (value, _) = correlated_det_search(1, 10, 5);
        assert_eq!(value, 0.0);
    }

    #[test]
    fn two_component_search_beats_independent_bound() {
        let (value, strategy) = correlated_det_search(2, 50, 5);
        assert!(value >= 0.99, "search reached only {value}");
        let table_det = det_w2(&strategy.table()).unwrap().abs();
        assert!((table_det - value).abs() < 1e-12);
    }

    #[test]
    fn search_is_deterministic_for_fixed_seed() {
        let (a, sa) = correlated_det_search(2, 5, 1234);
        let (b, sb) = correlated_det_search(2, 5, 1234);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn retrocausality_measure_values() {
        assert!((min_retrocausality(3.822) - 0.2055).abs() < 1e-4);
        assert_eq!(min_retrocausality(3.0), 0.0);
        assert_eq!(min_retrocausality(2.0), 0.0);
    }

    #[test]
    fn retrocausality_measure_is_monotone_with_kink_at_three() {
        let mut previous = min_retrocausality(0.0);
        let mut v = 0.0;
        while v <= 5.0 {
            let current = min_retrocausality(v);
            assert!(current + 1e-15 >= previous);
            if v < 3.0 {
                assert_eq!(current, 0.0);
            }
            previous = current;
            v += 0.01;
        }
        assert!((min_retrocausality(5.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn strategies_serialize_for_audit() {
        let certificate = correlated_certificate();
        let json = serde_json::to_string(&certificate).unwrap();
        let back: CorrelatedStrategy = serde_json::from_str(&json).unwrap();
        assert_eq!(certificate, back);
    }
}
