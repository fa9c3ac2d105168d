use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed model: {0}")]
    MalformedSpec(String),

    #[error("state {state} has zero escape rate")]
    ZeroEscapeRate { state: usize },

    #[error("unknown model `{0}` (expected one of two_state, ring_current, birth_death)")]
    UnknownModel(String),

    #[error("bad model parameters: {0}")]
    BadParams(String),

    #[error("tilt out of floating point range: |k*g| = {0:e} exceeds 700")]
    NonFinite(f64),

    #[error("base chain is not irreducible (state {unreachable} cannot be reached from state 0 or cannot reach it)")]
    NotIrreducible { unreachable: usize },

    #[error("principal eigenvalue is numerically degenerate (gap {0:e})")]
    NoGap(f64),

    #[error("marginal integration did not converge after {halvings} step halvings")]
    StepTooCoarse { halvings: u32 },

    #[error("out of range: {0}")]
    Range(String),

    #[error("overflow in log-sum-exp accumulation")]
    Overflow,

    #[error("clone size mean {mean} at state {state} requires support {support} > N = {n}")]
    MeanTooLarge {
        state: usize,
        mean: f64,
        support: usize,
        n: usize,
    },

    #[error("ensemble of {n} particles is smaller than the clone support bound K = {k}")]
    EnsembleTooSmall { n: usize, k: usize },

    #[error("insufficient replicas: {0}")]
    InsufficientReplicas(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
