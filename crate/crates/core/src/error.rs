use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("graph generation failed after {attempts} consecutive disconnected draws")]
    GenerationFailure { attempts: usize },

    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("integration diverged: max_steps={max_steps} exceeded at t={t} after {nfev} evaluations")]
    Divergence { max_steps: usize, t: f64, nfev: u64 },

    #[error("solver timed out after {seconds:.1}s at t={t} ({nfev} evaluations)")]
    Timeout { seconds: f64, t: f64, nfev: u64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("stiff solver failed at t={t} (step {h} below floor)")]
    StiffnessFailure { t: f64, h: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("rollout diverged at step {step}")]
    RolloutDivergence { step: usize },

    #[error("degenerate loss: {0}")]
    DegenerateLoss(String),

    #[error("lyapunov fit window: {0}")]
    FitWindow(String),

    #[error("training aborted: non-finite loss at epoch {epoch}, step {step}")]
    NanLoss { epoch: usize, step: usize },

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
