use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range ({len} entries)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error(
        "solver did not converge after {iters} iterations \
         (gradient norm {grad_norm:.3e}, tolerance {tol:.3e})"
    )]
    NonConvergence {
        iters: usize,
        grad_norm: f64,
        tol: f64,
    },

    #[error("hessian is not positive definite; increase the regularization strength")]
    SingularHessian,

    #[error("model carries no cached hessian factorization")]
    MissingFactorization,

    #[error(
        "degenerate leverage {leverage} at sample {index}: \
         the leave-one-out hessian is numerically singular"
    )]
    DegenerateLeverage { index: usize, leverage: f64 },

    #[error(
        "leave-T-out hessian is indefinite (capacitance system not positive \
         definite); increase the regularization strength"
    )]
    IndefiniteLeaveOut,

    #[error("cannot aggregate attribution vectors of mixed methods")]
    MixedMethods,

    #[error("{0}")]
    Numerical(String),
}

impl Error {
    /// Process exit code: 2 for configuration/input problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_)
            | Error::Parse { .. }
            | Error::InvalidData(_)
            | Error::Config(_)
            | Error::Dimension(_)
            | Error::IndexOutOfRange { .. } => 2,
            Error::NonConvergence { .. }
            | Error::SingularHessian
            | Error::MissingFactorization
            | Error::DegenerateLeverage { .. }
            | Error::IndefiniteLeaveOut
            | Error::MixedMethods
            | Error::Numerical(_) => 3,
        }
    }
}
