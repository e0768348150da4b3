use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing field: {0}")]
    MissingField(String),
    #[error("unresolved id `{id}` referenced by {context}")]
    UnresolvedId { id: String, context: String },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("edge `{0}` has both ends at the same vertex (self-loops are not allowed)")]
    SelfLoop(String),
    #[error("graph is not connected ({components} components)")]
    Disconnected { components: usize },
    #[error("edge `{id}` has invalid length {length}")]
    InvalidLength { id: String, length: f64 },
    #[error("edge `{0}` is semi-infinite; only finite edges are supported")]
    SemiInfinite(String),
    #[error("graph has no edges")]
    Empty,
    #[error("invalid vertex condition at `{vertex}`: {reason}")]
    InvalidCondition { vertex: String, reason: String },
    #[error("grid spacing {h} is too coarse for edge `{edge}` of length {length}")]
    GridTooCoarse { h: f64, edge: String, length: f64 },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("singular linear system at pivot {0}")]
    Singular(usize),
    #[error("density {density:.3e} below floor {floor:.3e} at edge {edge}, x = {x}, t = {t}")]
    NodeEncounter {
        edge: usize,
        x: f64,
        t: f64,
        density: f64,
        floor: f64,
    },
    #[error("zero density at lattice site {site}, t = {t}")]
    ZeroDensity { site: usize, t: f64 },
    #[error("stalled vertex {vertex} at t = {t}: all edge currents vanish")]
    StalledVertex { vertex: usize, t: f64 },
    #[error("integrator step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("edge {0} has fewer than 3 grid points")]
    EdgeTooShort(usize),
    #[error("kernel infeasible: {0}")]
    InfeasibleKernel(String),
    #[error("empty row {0} in joint distribution")]
    EmptyRow(usize),
    #[error("time {0} is outside the evolution record")]
    TimeOutOfRange(f64),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Short machine-readable tag used by the CLI and the C API.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "syntax",
            Error::MissingField(_) => "missing-field",
            Error::UnresolvedId { .. } => "unresolved-id",
            Error::DuplicateId { .. } => "duplicate-id",
            Error::SelfLoop(_) => "self-loop",
            Error::Disconnected { .. } => "disconnected",
            Error::InvalidLength { .. } => "invalid-length",
            Error::SemiInfinite(_) => "semi-infinite",
            Error::Empty => "empty-graph",
            Error::InvalidCondition { .. } => "invalid-condition",
            Error::GridTooCoarse { .. } => "grid-too-coarse",
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::Eigen(_) => "eigensolver",
            Error::Singular(_) => "singular",
            Error::NodeEncounter { .. } => "node-encounter",
            Error::ZeroDensity { .. } => "zero-density",
            Error::StalledVertex { .. } => "stalled-vertex",
            Error::StepUnderflow(_) => "step-underflow",
            Error::EdgeTooShort(_) => "edge-too-short",
            Error::InfeasibleKernel(_) => "infeasible-kernel",
            Error::EmptyRow(_) => "empty-row",
            Error::TimeOutOfRange(_) => "time-out-of-range",
            Error::Construction(_) => "construction",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
