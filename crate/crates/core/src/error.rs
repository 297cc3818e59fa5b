use alloc::string::String;

use crate::lp::LpStatus;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("expected frame length must be at least 1, got {0}")]
    FrameLengthBelowOne(f64),
    #[error("action index {index} out of range for a system with {count} actions")]
    InvalidAction { index: usize, count: usize },
    #[error("action set is empty")]
    EmptyActionSet,
    #[error("model list is empty")]
    EmptyModelList,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("trade-off parameter V must be positive, got {0}")]
    NonPositiveTradeoff(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid stationary weights: {0}")]
    InvalidWeights(String),
    #[error("simulation needs at least one slot")]
    ZeroSlots,
    #[error("brute-force grid too large: {points} grid points exceeds the limit of {limit}")]
    GridTooLarge { points: f64, limit: f64 },
    #[error("LP solution is not optimal (status {0:?})")]
    NotOptimal(LpStatus),
    #[error("invalid scheduling mode {mode} for {classes} classes")]
    InvalidMode { mode: usize, classes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
