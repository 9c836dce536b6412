//! Qubit states and measurement effects of the polarization Mach-Zehnder
//! interferometer, and the probability tables they generate.
//!
//! The preparation stage puts the photon in the balanced superposition
//! `(|0> + e^{i phi}|1>)/sqrt(2)`; the measurement stage closes the
//! interferometer after an extra phase `sigma` and projects onto
//! `(|0> +/- e^{-i sigma}|1>)/sqrt(2)`. Composing the two gives the closed
//! form `p(0|x,y) = (1 + cos(phi_x + sigma_y)) / 2`, which fixes the
//! detector-labelling convention used throughout: outcome 0 is the "+1"
//! outcome of every expectation value.

use crate::mat2::Mat2;
use crate::scenario::PhaseConfig;
use crate::table::ProbabilityTable;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for Hermiticity, trace, and eigenvalue checks on 2x2 matrices.
pub const MATRIX_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum QuantumError {
    #[error("state is not Hermitian (defect {0:e})")]
    StateNotHermitian(f64),
    #[error("state trace is {0}, not 1")]
    StateTraceNotOne(f64),
    #[error("state has negative eigenvalue {0:e}")]
    StateNotPositive(f64),
    #[error("effect is not Hermitian (defect {0:e})")]
    EffectNotHermitian(f64),
    #[error("effect eigenvalue {0} outside [0, 1]")]
    EffectOutOfRange(f64),
    #[error("device field {field} = {value} outside [0, 1]")]
    DeviceFieldOutOfRange { field: &'static str, value: f64 },
}

/// A qubit density matrix, Hermitian, unit trace, positive semidefinite.
///
/// Validity is enforced at construction, so every held value satisfies the
/// invariants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitState {
    rho: Mat2,
}

impl QubitState {
    pub fn from_matrix(rho: Mat2) -> Result<Self, QuantumError> {
        let defect = rho.hermiticity_defect();
        if defect > MATRIX_TOL {
            return Err(QuantumError::StateNotHermitian(defect));
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > MATRIX_TOL || trace.im.abs() > MATRIX_TOL {
            return Err(QuantumError::StateTraceNotOne(trace.re));
        }
        let (low, _) = rho.hermitian_eigenvalues();
        if low < -MATRIX_TOL {
            return Err(QuantumError::StateNotPositive(low));
        }
        Ok(Self { rho })
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.rho
    }
}

/// A binary-measurement effect: positive, bounded above by the identity.
/// `complement` gives the partner effect; the pair sums to the identity
/// exactly by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementEffect {
    m: Mat2,
}

impl MeasurementEffect {
    pub fn from_matrix(m: Mat2) -> Result<Self, QuantumError> {
        let defect = m.hermiticity_defect();
        if defect > MATRIX_TOL {
            return Err(QuantumError::EffectNotHermitian(defect));
        }
        let (low, high) = m.hermitian_eigenvalues();
        if low < -MATRIX_TOL || high > 1.0 + MATRIX_TOL {
            let off = if low < -MATRIX_TOL { low } else { high };
            return Err(QuantumError::EffectOutOfRange(off));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.m
    }

    /// The partner effect `I - M`.
    pub fn complement(&self) -> MeasurementEffect {
        MeasurementEffect { m: Mat2::identity() - self.m }
    }
}

/// How outcomes are assigned from raw coincidence counts.
///
/// `PostSelected` keeps only runs with a signal-side detection (the
/// fair-sampling analysis); `InclusiveAssignment` assigns an outcome to every
/// trigger event, mapping the D0 coincidence to b = 1 and everything else,
/// lost photons included, to b = 0 (the detection-loophole-free analysis).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentPolicy {
    PostSelected,
    InclusiveAssignment,
}

impl std::fmt::Display for AssignmentPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AssignmentPolicy::PostSelected => write!(f, "post-selected"),
            AssignmentPolicy::InclusiveAssignment => write!(f, "inclusive-assignment"),
        }
    }
}

impl std::str::FromStr for AssignmentPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "post-selected" | "postselected" | "post_selected" => {
                Ok(AssignmentPolicy::PostSelected)
            }
            "inclusive-assignment" | "inclusive" | "inclusive_assignment" => {
                Ok(AssignmentPolicy::InclusiveAssignment)
            }
            other => Err(format!(
                "unknown policy {other:?}, expected \"post-selected\" or \"inclusive-assignment\""
            )),
        }
    }
}

/// Detector and transmission imperfections of the apparatus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    /// Signal detector efficiency.
    pub eta: f64,
    /// Trigger-arm transmittance.
    pub t_a: f64,
    /// Signal-arm transmittance.
    pub t_b: f64,
    /// Interference visibility; scales the cosine term only.
    pub visibility: f64,
    pub policy: AssignmentPolicy,
}

impl DeviceModel {
    /// Lossless device with perfect visibility.
    pub fn ideal(policy: AssignmentPolicy) -> Self {
        Self { eta: 1.0, t_a: 1.0, t_b: 1.0, visibility: 1.0, policy }
    }

    pub fn new(
        eta: f64,
        t_a: f64,
        t_b: f64,
        visibility: f64,
        policy: AssignmentPolicy,
    ) -> Result<Self, QuantumError> {
        let device = Self { eta, t_a, t_b, visibility, policy };
        device.validate()?;
        Ok(device)
    }

    pub fn validate(&self) -> Result<(), QuantumError> {
        for (field, value) in [
            ("eta", self.eta),
            ("t_a", self.t_a),
            ("t_b", self.t_b),
            ("visibility", self.visibility),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(QuantumError::DeviceFieldOutOfRange { field, value });
            }
        }
        Ok(())
    }
}

/// The prepared state `(|0> + e^{i phi}|1>)/sqrt(2)` as a density matrix.
pub fn prepare_state(phi: f64) -> QubitState {
    let amp = Complex64::new(0.5f64.sqrt(), 0.0);
    let v = [amp, Complex64::from_polar(0.5f64.sqrt(), phi)];
    QubitState { rho: Mat2::outer(v) }
}

/// Projectors onto `(|0> +/- e^{-i sigma}|1>)/sqrt(2)`; the first element is
/// the b = 0 effect and the second is its exact complement.
pub fn measurement_effects(sigma: f64) -> (MeasurementEffect, MeasurementEffect) {
    let amp = Complex64::new(0.5f64.sqrt(), 0.0);
    let v = [amp, Complex64::from_polar(0.5f64.sqrt(), -sigma)];
    let m0 = MeasurementEffect { m: Mat2::outer(v) };
    (m0, m0.complement())
}

/// Born-rule probability Tr(rho M), clamped to [0,1] against roundoff.
pub fn born_probability(state: &QubitState, effect: &MeasurementEffect) -> f64 {
    let p = state.rho.trace_mul(&effect.m).re;
    debug_assert!(p > -MATRIX_TOL && p < 1.0 + MATRIX_TOL);
    p.clamp(0.0, 1.0)
}

/// Closed-form interference probability `(1 + v cos(phi + sigma)) / 2`.
pub fn interference_probability(phi: f64, sigma: f64, visibility: f64) -> f64 {
    0.5 * (1.0 + visibility * (phi + sigma).cos())
}

/// Ideal (lossless, unit-visibility) table via the Born-rule pipeline.
pub fn ideal_table(config: &PhaseConfig) -> ProbabilityTable {
    let states: Vec<QubitState> = config.phi().iter().map(|&phi| prepare_state(phi)).collect();
    let effects: Vec<(MeasurementEffect, MeasurementEffect)> =
        config.sigma().iter().map(|&sigma| measurement_effects(sigma)).collect();
    let n_x = config.n_x();
    let n_y = config.n_y();
    let mut entries = vec![0.0; 2 * n_x * n_y];
    for (x, state) in states.iter().enumerate() {
        for (y, (m0, m1)) in effects.iter().enumerate() {
            entries[(x * n_y) + y] = born_probability(state, m0);
            entries[(n_x + x) * n_y + y] = born_probability(state, m1);
        }
    }
    ProbabilityTable::from_entries(n_x, n_y, entries).expect("consistent shape")
}

/// Table predicted under the device model.
///
/// With visibility `v` the interference term is damped:
/// `p_v(0|x,y) = (1 + v cos(phi_x + sigma_y)) / 2`.
///
/// Under `PostSelected` the losses cancel and the damped table is returned
/// directly. Under `InclusiveAssignment` outcome 1 is the D0 coincidence, so
/// `p(1|x,y) = eta * t_a * t_b * p_v(0|x,y)` and `p(0|x,y)` is the rest;
/// the run set here is the generated pairs (per-pair accounting), which is
/// what makes the full `eta^2 t_a^2 t_b^2` determinant scaling appear.
pub fn lossy_table(config: &PhaseConfig, device: &DeviceModel) -> ProbabilityTable {
    let v = device.visibility;
    match device.policy {
        AssignmentPolicy::PostSelected => ProbabilityTable::from_p0(
            config.n_x(),
            config.n_y(),
            |x, y| interference_probability(config.phi()[x], config.sigma()[y], v),
        ),
        AssignmentPolicy::InclusiveAssignment => {
            let survive = device.eta * device.t_a * device.t_b;
            let n_x = config.n_x();
            let n_y = config.n_y();
            let mut entries = vec![0.0; 2 * n_x * n_y];
            for x in 0..n_x {
                for y in 0..n_y {
                    let p1 =
                        survive * interference_probability(config.phi()[x], config.sigma()[y], v);
                    entries[(x * n_y) + y] = 1.0 - p1;
                    entries[(n_x + x) * n_y + y] = p1;
                }
            }
            ProbabilityTable::from_entries(n_x, n_y, entries).expect("consistent shape")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::PamScenario;
    use crate::witness;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    #[test]
    fn prepare_state_at_zero_is_plus() {
        let rho = *prepare_state(0.0).matrix();
        for i in 0..2 {
            for j in 0..2 {
                assert!((rho.e[i][j] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn prepare_state_at_pi_is_minus() {
        let rho = *prepare_state(PI).matrix();
        assert!((rho.e[0][0].re - 0.5).abs() < 1e-15);
        assert!((rho.e[1][1].re - 0.5).abs() < 1e-15);
        assert!((rho.e[0][1].re + 0.5).abs() < 1e-12);
        assert!(rho.e[0][1].im.abs() < 1e-12);
    }

    #[test]
    fn prepare_state_at_half_pi_has_imaginary_coherences() {
        // Direct evaluation of |psi><psi| at phi = pi/2: off-diagonals -i/2, +i/2.
        let rho = *prepare_state(FRAC_PI_2).matrix();
        assert!((rho.e[0][1] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((rho.e[1][0] - Complex64::new(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn effects_sum_to_identity_exactly() {
        for k in 0..32 {
            let sigma = k as f64 * TAU / 32.0 - PI;
            let (m0, m1) = measurement_effects(sigma);
            let sum = *m0.matrix() + *m1.matrix();
            assert_eq!(sum, Mat2::identity());
        }
    }

    #[test]
    fn effects_at_zero_project_onto_plus_minus() {
        let (m0, _) = measurement_effects(0.0);
        // Projector onto |+>: all entries 1/2.
        for i in 0..2 {
            for j in 0..2 {
                assert!((m0.matrix().e[i][j] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn born_on_own_projector_is_one() {
        let state = prepare_state(1.234);
        let effect = MeasurementEffect::from_matrix(*state.matrix()).unwrap();
        assert!((born_probability(&state, &effect) - 1.0).abs() < 1e-12);
        let orthogonal = effect.complement();
        assert!(born_probability(&state, &orthogonal) < 1e-12);
    }

    #[test]
    fn born_half_probability_case() {
        // Born-rule evaluation: sigma = pi/2 on the phi = 0 state gives 1/2.
        let (m0, _) = measurement_effects(FRAC_PI_2);
        let p = born_probability(&prepare_state(0.0), &m0);
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn born_matches_first_optimal_expectation() {
        // (1 + 1/sqrt(2))/2 at phi = 7pi/4, sigma = pi/2.
        let (m0, _) = measurement_effects(FRAC_PI_2);
        let p = born_probability(&prepare_state(7.0 * PI / 4.0), &m0);
        let expected = 0.5 * (1.0 + 0.5f64.sqrt());
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn pipeline_matches_closed_form_on_random_phases() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let phi = rng.random_range(-TAU..TAU);
            let sigma = rng.random_range(-TAU..TAU);
            let (m0, _) = measurement_effects(sigma);
            let pipeline = born_probability(&prepare_state(phi), &m0);
            let closed = interference_probability(phi, sigma, 1.0);
            assert!(
                (pipeline - closed).abs() < 1e-12,
                "phi={phi} sigma={sigma}: {pipeline} vs {closed}"
            );
        }
    }

    #[test]
    fn ideal_table_is_normalized_and_constructive_at_zero_sum() {
        let config = PhaseConfig::new(vec![0.0, 1.0], vec![0.0, TAU - 1.0]).unwrap();
        let table = ideal_table(&config);
        table.validate(&PamScenario::new(2, 2, 2).unwrap()).unwrap();
        // phi + sigma = 0 (mod 2pi) gives certainty for outcome 0.
        assert!((table.p0(0, 0) - 1.0).abs() < 1e-12);
        assert!((table.p0(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ideal_table_reproduces_optimal_expectations() {
        let config = PhaseConfig::new(
            vec![7.0 * PI / 4.0, 5.0 * PI / 4.0, FRAC_PI_2],
            vec![FRAC_PI_2, 0.0],
        )
        .unwrap();
        let table = ideal_table(&config);
        let inv_sqrt2 = 0.5f64.sqrt();
        let expected = [
            ((0, 0), inv_sqrt2),
            ((0, 1), inv_sqrt2),
            ((1, 0), inv_sqrt2),
            ((1, 1), -inv_sqrt2),
            ((2, 0), -1.0),
        ];
        for ((x, y), want) in expected {
            assert!(
                (table.expectation(x, y) - want).abs() < 1e-12,
                "<B_{}{}> = {}, want {want}",
                x + 1,
                y + 1,
                table.expectation(x, y)
            );
        }
    }

    #[test]
    fn ideal_table_reaches_unit_determinant_witness() {
        let config =
            PhaseConfig::new(vec![0.0, PI, -FRAC_PI_2, FRAC_PI_2], vec![FRAC_PI_2, 0.0]).unwrap();
        let table = ideal_table(&config);
        let det = witness::det_w2(&table).unwrap();
        assert!((det.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lossy_ideal_device_post_selected_equals_ideal() {
        let config = PhaseConfig::new(vec![0.3, 2.2, 4.0], vec![1.0, 5.5]).unwrap();
        let device = DeviceModel::ideal(AssignmentPolicy::PostSelected);
        let lossy = lossy_table(&config, &device);
        let ideal = ideal_table(&config);
        for x in 0..3 {
            for y in 0..2 {
                assert!((lossy.p0(x, y) - ideal.p0(x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lossy_blind_detector_gives_constant_zero_outcome() {
        let config = PhaseConfig::new(vec![0.3, 2.2, 4.0], vec![1.0, 5.5]).unwrap();
        let device = DeviceModel::new(0.0, 1.0, 1.0, 1.0, AssignmentPolicy::InclusiveAssignment)
            .unwrap();
        let table = lossy_table(&config, &device);
        for x in 0..3 {
            for y in 0..2 {
                assert_eq!(table.p0(x, y), 1.0);
            }
        }
    }

    #[test]
    fn determinant_scaling_at_quoted_efficiency() {
        // Scaling law |det| = eta^2 t_a^2 t_b^2 |det_ideal| at eta = 0.025.
        let config =
            PhaseConfig::new(vec![0.0, PI, -FRAC_PI_2, FRAC_PI_2], vec![FRAC_PI_2, 0.0]).unwrap();
        let device = DeviceModel::new(0.025, 1.0, 1.0, 1.0, AssignmentPolicy::InclusiveAssignment)
            .unwrap();
        let det = witness::det_w2(&lossy_table(&config, &device)).unwrap();
        assert!((det.abs() - 6.25e-4).abs() < 1e-12);
    }

    #[test]
    fn determinant_scaling_law_on_random_devices() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            let phi: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..TAU)).collect();
            let sigma: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..TAU)).collect();
            let config = PhaseConfig::new(phi, sigma).unwrap();
            let eta = rng.random_range(0.01..1.0);
            let t_a = rng.random_range(0.01..1.0);
            let t_b = rng.random_range(0.01..1.0);
            let device =
                DeviceModel::new(eta, t_a, t_b, 1.0, AssignmentPolicy::InclusiveAssignment)
                    .unwrap();
            let ideal = witness::det_w2(&ideal_table(&config)).unwrap().abs();
            let lossy = witness::det_w2(&lossy_table(&config, &device)).unwrap().abs();
            let factor = (eta * t_a * t_b).powi(2);
            assert!(
                (lossy - factor * ideal).abs() < 1e-10,
                "eta={eta} t_a={t_a} t_b={t_b}: {lossy} vs {}",
                factor * ideal
            );
        }
    }

    #[test]
    fn visibility_contracts_every_expectation() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..200 {
            let phi: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..TAU)).collect();
            let sigma: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..TAU)).collect();
            let config = PhaseConfig::new(phi, sigma).unwrap();
            let v = rng.random_range(0.0..1.0);
            let device = DeviceModel::new(1.0, 1.0, 1.0, v, AssignmentPolicy::PostSelected)
                .unwrap();
            let damped = lossy_table(&config, &device);
            let ideal = ideal_table(&config);
            for x in 0..3 {
                for y in 0..2 {
                    let want = v * ideal.expectation(x, y);
                    assert!((damped.expectation(x, y) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn invalid_state_and_effect_rejected() {
        let mut bad_trace = Mat2::identity();
        bad_trace.e[0][0] = Complex64::new(0.75, 0.0);
        assert!(matches!(
            QubitState::from_matrix(bad_trace),
            Err(QuantumError::StateTraceNotOne(_))
        ));

        let not_hermitian = Mat2::new(
            Complex64::new(0.5, 0.0),
            Complex64::new(0.5, 0.1),
            Complex64::new(0.5, 0.1),
            Complex64::new(0.5, 0.0),
        );
        assert!(QubitState::from_matrix(not_hermitian).is_err());

        let too_large = Mat2::identity().scale(1.5);
        assert!(matches!(
            MeasurementEffect::from_matrix(too_large),
            Err(QuantumError::EffectOutOfRange(_))
        ));
    }

    #[test]
    fn device_model_rejects_out_of_range_fields() {
        assert!(matches!(
            DeviceModel::new(1.5, 1.0, 1.0, 1.0, AssignmentPolicy::PostSelected),
            Err(QuantumError::DeviceFieldOutOfRange { field: "eta", .. })
        ));
        assert!(DeviceModel::new(0.025, 0.9, 0.8, 0.97, AssignmentPolicy::PostSelected).is_ok());
    }
}
