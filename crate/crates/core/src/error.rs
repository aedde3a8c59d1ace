use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum DdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pulse {pulse_index} needs {required} time units but only {available} are available in the adjacent delays")]
    InfeasibleSchedule {
        pulse_index: usize,
        required: f64,
        available: f64,
    },

    #[error("pulse {index} has flip angle {flip_deg} deg; only pi pulses can be wrapped")]
    NotAPiPulse { index: usize, flip_deg: f64 },

    #[error("noise trajectory covers [{start}, {end}] but the schedule spans [0, {span}]")]
    CoverageMismatch { start: f64, end: f64, span: f64 },

    #[error("fidelity is undefined for a zero-norm operand")]
    ZeroNorm,

    #[error("trace sampling too coarse: step {step} exceeds {max_step} (8 samples per window of {window})")]
    InsufficientSampling { step: f64, max_step: f64, window: f64 },

    #[error("timeline parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("malformed configuration: {0}")]
    Config(String),

    #[error("cannot write output {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DdError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DdError::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            DdError::UnknownPreset(_) => 2,
            DdError::Output { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, DdError>;
