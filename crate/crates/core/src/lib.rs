//! Local hidden-variable theories for the EPRB experiment: a model type,
//! locality audits, instruction-set derivation, Bell tests and a Monte Carlo
//! harness.
//!
//! Probabilities are [`Prob`] values: exact rationals when the input is
//! rational, `f64` otherwise. Exact inputs are decided with no tolerance.

pub mod audit;
pub mod bell;
pub mod document;
pub mod error;
pub mod generate;
pub mod instructions;
mod lp;
pub mod model;
pub mod montecarlo;
pub mod prob;
pub mod report;
pub mod singlet;

pub use audit::{
    check_anticorrelation, check_bell_locality, check_signal_locality, detect_equal_axes,
    AntiCorrelationReport, AxisPair, LocalityReport, LocalityVerdict, SignalReport, SignalVerdict,
};
pub use bell::{
    bell1964, bell_test, chsh, local_polytope_membership, max_local_chsh, BellTestOptions,
    BellTestResult, ChshSettings, MembershipCertificate,
};
pub use document::{parse_theory, read_theory, theory_to_json};
pub use error::{Error, Result};
pub use instructions::{
    classify_states, derive_instruction_sets, realize_model, ClassPartition, Derivation,
    DerivationFailure, InstructionSet,
};
pub use model::{
    behavior, validate_theory, BehaviorTable, HiddenState, HiddenStateEnsemble, JointDist,
    Outcome, Scenario, Setting, Side, TheoryModel, ValidationReport,
};
pub use montecarlo::{run_experiment, summarize, ExperimentStats, SettingPolicy, TrialRecord};
pub use prob::{Prob, DEFAULT_TOL};
pub use report::{run_pipeline, PipelineOptions, RunReport};
pub use singlet::{make_quantum_theory, singlet_joint_prob, SingletSpec};
