use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("truncation too small: {0}")]
    Truncation(String),

    #[error("Franck-Condon overflow at (n={n}, m={m}, lambda={lambda})")]
    Overflow { n: usize, m: usize, lambda: f64 },

    #[error("degenerate doublet at n={n}: detuning and drive both vanish")]
    DegenerateDetuning { n: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("dominant eigenvalue is ambiguous at chi={chi}: gap {gap:e}")]
    BranchAmbiguity { chi: f64, gap: f64 },

    #[error("division guard: {0}")]
    DivisionGuard(String),

    #[error("superoperator dimension {dim} exceeds budget {budget}")]
    Dimension { dim: usize, budget: usize },

    #[error("iterative solver did not converge: {0}")]
    Convergence(String),

    #[error("Wigner grid extent too small: boundary |W| = {boundary:e} vs max {max:e}")]
    Extent { boundary: f64, max: f64 },

    #[error("photon blockade violated: two-photon population {0:e}")]
    BlockadeViolation(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
