use thiserror::Error;

use crate::model::{Side, ValidationReport};

#[derive(Debug, Error)]
pub enum Error {
    #[error("model failed validation:\n{0}")]
    InvalidModel(ValidationReport),

    #[error("unknown {side} setting `{id}`")]
    UnknownSetting { side: Side, id: String },

    #[error("unknown hidden state `{0}`")]
    UnknownState(String),

    #[error("setting `{id}` has no direction vector")]
    MissingDirection { id: String },

    #[error("direction {label} is not unit length (norm {norm})")]
    NonUnitVector { label: String, norm: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("{0}")]
    ScenarioShape(String),

    #[error(
        "enumeration limit: {alice}x{bob} settings exceeds {limit} per side",
        limit = crate::bell::MAX_SETTINGS_PER_SIDE
    )]
    EnumerationLimit { alice: usize, bob: usize },

    #[error("anti-correlation precondition failed on axis {alice}={bob}: E = {correlator}; use the CHSH test instead")]
    AntiCorrelationRequired {
        alice: String,
        bob: String,
        correlator: f64,
    },

    #[error("instruction set for state `{state}` does not determine {side} setting `{setting}`")]
    IncompleteInstructions {
        state: String,
        side: Side,
        setting: String,
    },

    #[error("instruction set for state `{state}` is not anti-correlated on axis {axis}")]
    InconsistentInstructions { state: String, axis: String },

    #[error("{0}")]
    EmptyInput(&'static str),

    #[error("setting sequence: {0}")]
    Sequence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
