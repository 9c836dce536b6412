//! Simulator and certification toolkit for a delayed-choice experiment cast
//! as a prepare-and-measure scenario.
//!
//! The model is a polarization Mach-Zehnder interferometer: input `x` selects
//! a preparation phase, input `y` a delayed measurement phase, and the binary
//! outcome `b` is read from two detectors. The crate predicts the quantum
//! statistics via the Born rule, enumerates classical bounded-dimension
//! strategies, evaluates the determinant (`W2`) and linear (`I_DW`) dimension
//! witnesses with their classical and quantum bounds, models detector losses
//! under post-selected and loophole-free outcome assignment, and reproduces
//! counting experiments by seeded Monte Carlo, including the phase-sweep
//! histogram over all preparation tuples.
//!
//! Start with the runnable examples (`cargo run --release --example
//! quantum_predictions`) or the `pamdce` binary, which exposes the same
//! capabilities as subcommands.

pub mod classical;
pub mod cli;
pub mod mat2;
pub mod quantum;
pub mod scenario;
pub mod sim;
pub mod table;
pub mod witness;

pub use classical::{
    correlated_det_search, enumerate_deterministic, min_retrocausality, CorrelatedStrategy,
    DeterministicStrategy,
};
pub use quantum::{
    born_probability, ideal_table, lossy_table, measurement_effects, prepare_state,
    AssignmentPolicy, DeviceModel, MeasurementEffect, QubitState,
};
pub use scenario::{PamScenario, PhaseConfig};
pub use sim::{estimate_table, run_experiment, sweep_idw, CountLedger, SweepSpec};
pub use table::ProbabilityTable;
pub use witness::{det_w2, i_dw, maximize_quantum, witness_stderr, WitnessKind, WitnessResult};
