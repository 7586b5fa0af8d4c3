use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown technology preset `{0}` (expected one of TiO2, AgSi, TaOx, Spintronics, PCM)")]
    UnknownPreset(String),

    #[error("invalid technology profile: {0}")]
    InvalidProfile(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("weight matrix has no nonzero entry, quantizer scale is undefined")]
    ZeroMatrix,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("shadow state of layer {0} is stale, call Network::sync_shadow first")]
    StaleShadow(usize),

    #[error("conductance system is singular or badly conditioned (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("solver residual {residual:.3e} exceeds tolerance")]
    Residual { residual: f64 },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("oracle output is constant, NRMSD is undefined")]
    ConstantReference,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("IDX format error: {0}")]
    Idx(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end: 2 for configuration
    /// and input problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ZeroMatrix
            | Error::NonFinite(_)
            | Error::Singular { .. }
            | Error::Residual { .. }
            | Error::Diverged { .. }
            | Error::ConstantReference => 3,
            _ => 2,
        }
    }
}
