use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Precondition of the stability analysis that a filter bank or graph failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityViolation {
    #[error("W_{k} has negative diagonal entry {value} at index {index}")]
    NegativeDiagonal { k: usize, index: usize, value: f64 },
    #[error("sum of ‖W_k‖_∞ is {sum}, must be < 1")]
    RowSumTooLarge { sum: f64 },
    #[error("receptive field of order {k} has spectral norm {norm} > 1")]
    FieldNorm { k: usize, norm: f64 },
    #[error("temporal response |Σ_k w_k,{channel} ψ_k(λ_{node})| = {value} is not < 1")]
    ChannelResponse {
        channel: usize,
        node: usize,
        value: f64,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("negative edge weight {value} at ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, value: f64 },
    #[error("matrix of order {n} exceeds the eigensolver cap of {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular matrix (zero pivot in column {column})")]
    Singular { column: usize },
    #[error("filter bank mode mismatch: {0}")]
    Mode(String),
    #[error("stability precondition violated: {0}")]
    Stability(#[from] StabilityViolation),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("label {label} out of range for {n_classes} classes")]
    Label { label: usize, n_classes: usize },
    #[error("parse error at byte {offset}{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        offset: usize,
        line: Option<usize>,
        msg: String,
    },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
