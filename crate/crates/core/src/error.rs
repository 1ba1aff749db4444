use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("register name `{0}` appears more than once")]
    DuplicateRegister(String),

    #[error("unknown register `{0}`")]
    UnknownRegister(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("basis string has {got} bits, layout expects {expected}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),

    #[error("map on register `{register}` is not unitary (deviation {deviation:.3e})")]
    NonUnitary { register: String, deviation: f64 },

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("randomness value {r} outside the enumerated space of size {size}")]
    RandomnessOutOfRange { r: u64, size: u64 },

    #[error("malformed query: {0}")]
    MalformedQuery(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("degenerate plan: every reconstruction vector is zero")]
    DegeneratePlan,

    #[error("recovery is not deterministic (best outcome probability {0:.6})")]
    NonUnitRecovery(f64),

    #[error("{0}")]
    InvalidParameter(String),

    #[error("residual work state differs across branches: {0}")]
    ResidualMismatch(String),

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("transcript schema version `{found}` does not match `{expected}`")]
    SchemaVersion { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
