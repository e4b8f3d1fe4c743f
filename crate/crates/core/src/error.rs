use serde_json::json;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the CLI (exit codes) and the HTTP layer (status codes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or invalid query text.
    Query,
    /// Schema, data, model or configuration problems.
    Data,
    /// Failures while evaluating a well-formed query.
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("value `{value}` of {relation}.{attr} in row {row} lies outside the declared domain")]
    ValueOutsideDomain {
        relation: String,
        row: usize,
        attr: String,
        value: String,
    },
    #[error("duplicate key {key} in relation {relation}")]
    DuplicateKey { relation: String, key: String },
    #[error("schema is not a star: {0}")]
    NonStarSchema(String),
    #[error("attribute `{0}` is immutable")]
    ImmutableAttribute(String),
    #[error("updated value {value} for `{attr}` lies outside its domain")]
    UpdateValueOutsideDomain { attr: String, value: String },
    #[error("causal graph has a cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("causal graph references undeclared attribute `{0}`")]
    DanglingAttribute(String),
    #[error("empty join group for {relation} tuple {key}")]
    EmptyJoinGroup { relation: String, key: String },
    #[error("syntax error at line {line}, column {col}: {message}")]
    SyntaxError {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("update target `{0}` is not a mutable attribute")]
    ImmutableUpdateTarget(String),
    #[error("WHEN may only reference PRE values (POST found at line {line}, column {col})")]
    PostInWhen { line: usize, col: usize },
    #[error("updated attributes `{from}` and `{to}` are connected by a causal path")]
    PathBetweenUpdates { from: String, to: String },
    #[error("FOR predicate expansion exceeds the cap of {cap} conjunct atoms")]
    DomainTooLarge { cap: usize },
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("no support for conditioning values {0}")]
    ZeroSupport(String),
    #[error("invalid backdoor set: {0}")]
    InvalidBackdoorSet(String),
    #[error("unsupported aggregate: {0}")]
    UnsupportedAggregate(String),
    #[error("possible-world enumeration needs {needed} worlds, above the cap of {cap}")]
    WorldCapExceeded { cap: u128, needed: u128 },
    #[error("no candidate update satisfies the LIMIT constraints")]
    EmptyCandidateSet,
    #[error("integer program is infeasible: {0}")]
    Infeasible(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("structural model does not match the causal graph: {0}")]
    ScmMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownAttribute(_) => "UnknownAttribute",
            Error::ValueOutsideDomain { .. } => "ValueOutsideDomain",
            Error::DuplicateKey { .. } => "DuplicateKey",
            Error::NonStarSchema(_) => "NonStarSchema",
            Error::ImmutableAttribute(_) => "ImmutableAttribute",
            Error::UpdateValueOutsideDomain { .. } => "UpdateValueOutsideDomain",
            Error::CycleDetected(_) => "CycleDetected",
            Error::DanglingAttribute(_) => "DanglingAttribute",
            Error::EmptyJoinGroup { .. } => "EmptyJoinGroup",
            Error::SyntaxError { .. } => "SyntaxError",
            Error::ImmutableUpdateTarget(_) => "ImmutableUpdateTarget",
            Error::PostInWhen { .. } => "PostInWhen",
            Error::PathBetweenUpdates { .. } => "PathBetweenUpdates",
            Error::DomainTooLarge { .. } => "DomainTooLarge",
            Error::EmptySample => "EmptySample",
            Error::ZeroSupport(_) => "ZeroSupport",
            Error::InvalidBackdoorSet(_) => "InvalidBackdoorSet",
            Error::UnsupportedAggregate(_) => "UnsupportedAggregate",
            Error::WorldCapExceeded { .. } => "WorldCapExceeded",
            Error::EmptyCandidateSet => "EmptyCandidateSet",
            Error::Infeasible(_) => "Infeasible",
            Error::TypeMismatch(_) => "TypeMismatch",
            Error::InvalidQuery(_) => "InvalidQuery",
            Error::ScmMismatch(_) => "ScmMismatch",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::SyntaxError { .. }
            | Error::UnknownAttribute(_)
            | Error::ImmutableUpdateTarget(_)
            | Error::PostInWhen { .. }
            | Error::PathBetweenUpdates { .. }
            | Error::TypeMismatch(_)
            | Error::UnsupportedAggregate(_)
            | Error::InvalidQuery(_) => ErrorClass::Query,
            Error::ValueOutsideDomain { .. }
            | Error::DuplicateKey { .. }
            | Error::NonStarSchema(_)
            | Error::CycleDetected(_)
            | Error::DanglingAttribute(_)
            | Error::ScmMismatch(_)
            | Error::Config(_)
            | Error::Io(_) => ErrorClass::Data,
            _ => ErrorClass::Evaluation,
        }
    }

    /// Structured representation used on stderr and in HTTP error bodies.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            Error::SyntaxError { line, col, .. } | Error::PostInWhen { line, col } => {
                body["line"] = json!(line);
                body["col"] = json!(col);
            }
            Error::ValueOutsideDomain {
                relation, row, attr, ..
            } => {
                body["relation"] = json!(relation);
                body["row"] = json!(row);
                body["attr"] = json!(attr);
            }
            _ => {}
        }
        json!({ "error": body })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
