//! Statevector-level simulation of the quantum functional estimator.

pub mod linear;
pub mod measure;
pub mod pipeline;
pub mod state_prep;
pub mod statevector;

pub use linear::{apply_sparse_nonunitary, build_r_state, input_error_propagation, simulated_qle};
pub use measure::{
    estimate_norm, hadamard_test_estimate, swap_test_estimate, FixedState, SampleBudget, SolverSource, StateSource,
};
pub use pipeline::{estimate_functional, FunctionalEstimate};
pub use state_prep::{
    darboux_load_entry, exact_weight_s, grover_rudolph_prepare, grover_rudolph_prepare_with, FemLoadWeights,
    LoadSquareSums, NoisyWeights, PrepConfig, Prepared, TreeWeights, WeightOracle,
};
pub use statevector::{qubits_for, Statevector};
