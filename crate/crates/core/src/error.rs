use std::path::PathBuf;

use crate::model::ModelVariant;
use crate::protocol::Protocol;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("protocol {protocol} cannot run in the {variant} model (it needs {expected})")]
    VariantMismatch {
        protocol: Protocol,
        variant: ModelVariant,
        expected: ModelVariant,
    },

    /// A lone node in `BL_cd` cannot tell whether it beeped alone.
    #[error("protocol blcd needs n >= 2: with a single node, the node cannot decide whether it is alone")]
    SingleNodeUndecidable,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant violated in phase {phase}: {detail}")]
    Invariant { phase: u64, detail: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV at line {line}: {message}")]
    MalformedCsv {
        path: PathBuf,
        line: u64,
        message: String,
    },
}
