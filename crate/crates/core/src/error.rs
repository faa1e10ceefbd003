use thiserror::Error;

use crate::model::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("points are not strictly increasing at index {index}")]
    NonMonotonePoints { index: usize },
    #[error("time scale needs at least 4 points, got {got}")]
    TooFewPoints { got: usize },
    #[error("degenerate interval: end {end} <= start {start}")]
    DegenerateInterval { start: f64, end: f64 },
    #[error("quantum base must exceed 1, got {q}")]
    InvalidBase { q: f64 },
    #[error("non-finite point at index {index}")]
    NonFinitePoint { index: usize },
    #[error("index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("support too small: need {needed} points, have {have}")]
    EmptySupport { needed: usize, have: usize },
    #[error("bad integration range [{lo}, {hi}] for support [{support_lo}, {support_hi}]")]
    BadRange {
        lo: usize,
        hi: usize,
        support_lo: usize,
        support_hi: usize,
    },
    #[error("support mismatch: expected [{expected_lo}, {expected_hi}], got [{lo}, {hi}]")]
    SupportMismatch {
        expected_lo: usize,
        expected_hi: usize,
        lo: usize,
        hi: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("grid functions live on different time scales")]
    ScaleMismatch,
    #[error("non-finite value at index {index}, component {component}")]
    NonFiniteValue { index: usize, component: usize },

    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("unknown variable '{name}'")]
    UnknownVariable { name: String },
    #[error("domain violation: {reason}")]
    DomainViolation { reason: String },
    #[error("non-finite result evaluating f_{component} at t = {t}")]
    NonFiniteResult { component: usize, t: f64 },
    #[error("invalid exponent declaration: {reason}")]
    ShapeViolation { reason: String },
    #[error("invalid problem: {reason}")]
    InvalidProblem { reason: String },

    #[error("lower bound exceeds upper bound at index {index}, component {component}")]
    BracketViolation { index: usize, component: usize },
    #[error("invalid solver configuration: {reason}")]
    InvalidConfig { reason: String },

    #[error("refinement family too short: need at least {needed} members, got {got}")]
    FamilyTooShort { needed: usize, got: usize },
    #[error("criterion not satisfied for component {component}: {reason}")]
    CriterionNotSatisfied { component: usize, reason: String },
    #[error("right endpoint σ²(b) = {value} is not positive")]
    NonpositiveEndpoint { value: f64 },
    #[error("bound order violation for component {component}: m = {m} > M = {big_m}")]
    BoundOrderViolation { component: usize, m: f64, big_m: f64 },
    #[error("envelope violated at index {index}, component {component} (slack {slack:e})")]
    EnvelopeViolation { index: usize, component: usize, slack: f64 },
}

impl Error {
    pub(crate) fn domain(reason: impl Into<String>) -> Self {
        Error::DomainViolation { reason: reason.into() }
    }
}
