use thiserror::Error;

pub type Result<T> = std::result::Result<T, ReplayError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("priority must be a finite non-negative number, got {0}")]
    InvalidPriority(f64),
    #[error("slot {slot} out of range for capacity {capacity}")]
    SlotOutOfRange { slot: usize, capacity: usize },
    #[error("slot {0} holds no transition")]
    UnoccupiedSlot(usize),
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("cannot sample from an empty buffer")]
    EmptyBuffer,
    #[error("batch of {batch} distinct slots requested but only {available} are eligible")]
    BatchTooLarge { batch: usize, available: usize },
    #[error("total priority is zero")]
    ZeroTotalPriority,
    #[error("query {u} outside [0, {total})")]
    QueryOutOfRange { u: f64, total: f64 },
    #[error("mask length {got} does not match capacity {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("without-replacement resampling did not fill the batch after {0} passes")]
    ResampleExhausted(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("oracle not applicable: {0}")]
    OracleDomain(String),
}
