use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no sign change in bracket [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}")]
    NoSignChange { lo: f64, hi: f64, flo: f64, fhi: f64 },

    #[error("root search did not converge after {iters} iterations; best iterate {best} (|f|={residual})")]
    Convergence { iters: usize, best: f64, residual: f64 },

    #[error("degenerate channel realization (rank-deficient co-user matrix)")]
    DegenerateChannel,

    #[error("price/parameter assumptions violated: {0:?}")]
    Assumption(Vec<String>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
