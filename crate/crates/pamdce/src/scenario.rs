//! Prepare-and-measure scenario dimensions and interferometer phase settings.
//!
//! A scenario is fixed by the number of preparation inputs `n_x`, measurement
//! inputs `n_y`, outcomes `n_b` (always 2 here), and the classical message
//! dimension `d`. Phase settings are stored reduced to `[0, 2*pi)` so that
//! equal physical settings compare and serialize identically.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("{field} must be at least 1, got {value}")]
    InvalidCardinality { field: &'static str, value: usize },
    #[error("only binary outcomes are supported, got n_b = {0}")]
    UnsupportedOutcomes(usize),
    #[error("phase {index} is not finite: {value}")]
    NonFinitePhase { index: usize, value: f64 },
    #[error("expected {expected} {field} phases, got {got}")]
    PhaseCountMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Cardinalities of a prepare-and-measure scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PamScenario {
    n_x: usize,
    n_y: usize,
    n_b: usize,
    dim: usize,
}

impl PamScenario {
    /// Binary-outcome scenario with `n_x` preparations, `n_y` measurements and
    /// classical message dimension `dim`.
    pub fn new(n_x: usize, n_y: usize, dim: usize) -> Result<Self, ScenarioError> {
        if n_x < 1 {
            return Err(ScenarioError::InvalidCardinality { field: "n_x", value: n_x });
        }
        if n_y < 1 {
            return Err(ScenarioError::InvalidCardinality { field: "n_y", value: n_y });
        }
        if dim < 1 {
            return Err(ScenarioError::InvalidCardinality { field: "dim", value: dim });
        }
        Ok(Self { n_x, n_y, n_b: 2, dim })
    }

    /// The 3-preparation, 2-measurement scenario of the linear witness.
    pub fn idw() -> Self {
        Self { n_x: 3, n_y: 2, n_b: 2, dim: 2 }
    }

    /// The 4-preparation, 2-measurement scenario of the determinant witness.
    pub fn w2() -> Self {
        Self { n_x: 4, n_y: 2, n_b: 2, dim: 2 }
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_settings(&self) -> usize {
        self.n_x * self.n_y
    }
}

/// Reduce an angle to the canonical interval `[0, 2*pi)`.
pub fn reduce_phase(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Preparation phases `phi_x` and measurement phases `sigma_y`, in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    phi: Vec<f64>,
    sigma: Vec<f64>,
}

impl PhaseConfig {
    /// Build a configuration, reducing every phase to `[0, 2*pi)`.
    pub fn new(phi: Vec<f64>, sigma: Vec<f64>) -> Result<Self, ScenarioError> {
        if phi.is_empty() {
            return Err(ScenarioError::InvalidCardinality { field: "phi", value: 0 });
        }
        if sigma.is_empty() {
            return Err(ScenarioError::InvalidCardinality { field: "sigma", value: 0 });
        }
        for (index, &value) in phi.iter().chain(sigma.iter()).enumerate() {
            if !value.is_finite() {
                return Err(ScenarioError::NonFinitePhase { index, value });
            }
        }
        Ok(Self {
            phi: phi.into_iter().map(reduce_phase).collect(),
            sigma: sigma.into_iter().map(reduce_phase).collect(),
        })
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn n_x(&self) -> usize {
        self.phi.len()
    }

    pub fn n_y(&self) -> usize {
        self.sigma.len()
    }

    /// The qubit-against-bit scenario these settings live in (d = 2).
    pub fn scenario(&self) -> PamScenario {
        PamScenario {
            n_x: self.phi.len(),
            n_y: self.sigma.len(),
            n_b: 2,
            dim: 2,
        }
    }

    /// Check the phase counts against a scenario's cardinalities.
    pub fn check_shape(&self, scenario: &PamScenario) -> Result<(), ScenarioError> {
        if self.phi.len() != scenario.n_x() {
            return Err(ScenarioError::PhaseCountMismatch {
                field: "phi",
                expected: scenario.n_x(),
                got: self.phi.len(),
            });
        }
        if self.sigma.len() != scenario.n_y() {
            return Err(ScenarioError::PhaseCountMismatch {
                field: "sigma",
                expected: scenario.n_y(),
                got: self.sigma.len(),
            });
        }
        Ok(())
    }

    /// Add `c` to every preparation phase and subtract it from every
    /// measurement phase. Only the sums `phi_x + sigma_y` enter any
    /// probability, so this leaves every prediction unchanged.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            phi: self.phi.iter().map(|&p| reduce_phase(p + c)).collect(),
            sigma: self.sigma.iter().map(|&s| reduce_phase(s - c)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn scenario_rejects_zero_cardinalities() {
        assert!(PamScenario::new(0, 2, 2).is_err());
        assert!(PamScenario::new(3, 0, 2).is_err());
        assert!(PamScenario::new(3, 2, 0).is_err());
        let s = PamScenario::new(3, 2, 2).unwrap();
        assert_eq!(s.n_b(), 2);
        assert_eq!(s.n_settings(), 6);
    }

    #[test]
    fn phases_reduce_to_canonical_interval() {
        let config = PhaseConfig::new(vec![-FRAC_PI_2, 3.0 * TAU + 0.25, TAU], vec![0.0]).unwrap();
        assert!((config.phi()[0] - (TAU - FRAC_PI_2)).abs() < 1e-15);
        assert!((config.phi()[1] - 0.25).abs() < 1e-12);
        assert_eq!(config.phi()[2], 0.0);
    }

    #[test]
    fn reduction_preserves_cosine_of_sum() {
        let raw = [-FRAC_PI_2, 7.0 * PI, -12.3, 100.0];
        for &angle in &raw {
            let reduced = reduce_phase(angle);
            assert!((0.0..TAU).contains(&reduced));
            assert!((angle.cos() - reduced.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_phase_rejected() {
        assert!(PhaseConfig::new(vec![f64::NAN], vec![0.0]).is_err());
        assert!(PhaseConfig::new(vec![0.0], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn shape_check_reports_mismatch() {
        let config = PhaseConfig::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0]).unwrap();
        assert!(config.check_shape(&PamScenario::idw()).is_ok());
        assert!(matches!(
            config.check_shape(&PamScenario::w2()),
            Err(ScenarioError::PhaseCountMismatch { field: "phi", .. })
        ));
    }
}
