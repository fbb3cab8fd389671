use thiserror::Error;

/// Errors raised by the planning pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tile ({col},{row}) is outside the {u_h}x{u_v} grid")]
    TileOutOfBounds { col: u32, row: u32, u_h: u32, u_v: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("quality level {level} is outside the ladder 1..={levels}")]
    QualityOutOfRange { level: usize, levels: usize },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(&'static str),

    #[error("beam direction is orthogonal to the channel of user {user}")]
    InfeasibleDirection { user: usize },

    #[error("message {message} cannot be served: {reason}")]
    Infeasible { message: usize, reason: &'static str },

    #[error("instance too large for exhaustive search ({assignments} assignments)")]
    InstanceTooLarge { assignments: f64 },

    #[error("missing beam entry for message {message} on subcarrier {subcarrier}")]
    MissingBeam { message: usize, subcarrier: usize },

    #[error("every message scored -inf on subcarrier {subcarrier}")]
    NoAssignment { subcarrier: usize },

    #[error("expected exactly {expected} base directions, got {got}")]
    WrongDirectionCount { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
