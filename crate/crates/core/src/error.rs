use crate::lattice::ModeIndex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cut-off must be at least 1, got {0}")]
    ZeroCutoff(u32),

    #[error("the zero wavenumber has no Fourier mode")]
    ZeroMode,

    #[error("mode {0} lies outside the truncation |k|_inf <= {1}")]
    OutsideTruncation(ModeIndex, u32),

    #[error("tangent field must be supported on a single mode, found {0} modes")]
    NotSingleMode(usize),

    #[error("noise matrix {part} at mode {mode}: {reason}")]
    InvalidNoise {
        mode: ModeIndex,
        part: &'static str,
        reason: String,
    },

    #[error("noise spec and state use different truncations (cut-off {expected} vs {found})")]
    TruncationMismatch { expected: u32, found: u32 },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("state became non-finite at t = {time} (step {step}); reduce dt")]
    BlowUp { time: f64, step: u64 },

    #[error("closure did not reach a fixpoint within {0} sweeps")]
    ClosureDiverged(usize),

    #[error("invalid control signal: {0}")]
    InvalidControl(String),

    #[error("malformed state record: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
