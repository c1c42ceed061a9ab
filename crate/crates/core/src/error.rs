use thiserror::Error;

use crate::ids::UserId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("unsupported security parameter: {0} bits")]
    UnsupportedSecurityParameter(u32),
    #[error("invalid group parameters: {0}")]
    InvalidGroup(&'static str),
    #[error("malformed group element: {0}")]
    MalformedElement(&'static str),
    #[error("malformed scalar")]
    MalformedScalar,
    #[error("element to encrypt is empty")]
    EmptyElement,
    #[error("prf key must be {expected} bytes, got {actual}")]
    BadPrfKey { expected: usize, actual: usize },
    #[error("malformed binary encoding: {0}")]
    Decode(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("duplicate {kind}: {value}")]
    Duplicate { kind: &'static str, value: String },
    #[error("gate has no children")]
    ChildlessGate,
    #[error("threshold {k} out of range for {children} children")]
    ThresholdOutOfRange { k: usize, children: usize },
    #[error("threshold gates cannot be evaluated by the server")]
    ThresholdUnsupported,
    #[error("bit width {0} outside [2, 32]")]
    BitWidth(u32),
    #[error("value {value} does not fit in {bit_width} bits")]
    ValueOutOfRange { value: u64, bit_width: u32 },
    #[error("expected a {0} attribute")]
    WrongAttributeKind(&'static str),
    #[error("unknown role: {0}")]
    UnknownRole(String),
    #[error("role hierarchy contains a cycle through {0}")]
    Cycle(String),
    #[error("invalid attribute assertion: {0}")]
    BadAssertion(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("no server key set for user {0} (unknown or revoked)")]
    KeyNotFound(UserId),
    #[error("threshold gate reached the encrypted evaluator")]
    UnsupportedGate,
    #[error("malformed bundle: {0}")]
    MalformedBundle(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}
