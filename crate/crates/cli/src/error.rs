use activereg_bench::BenchError;
use activereg_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Bench(#[from] BenchError),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Domain(_) => EXIT_USAGE,
        CoreError::Schema(_)
        | CoreError::Shape(_)
        | CoreError::BasisMismatch { .. }
        | CoreError::Io(_)
        | CoreError::Json(_) => EXIT_DATA,
        CoreError::Numerical(_)
        | CoreError::Convergence { .. }
        | CoreError::SingularMatrix { .. }
        | CoreError::DegenerateUpdate { .. }
        | CoreError::Rank(_)
        | CoreError::Overflow { .. }
        | CoreError::BarrierViolation { .. }
        | CoreError::IterationCap { .. } => EXIT_NUMERICAL,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(e) | Self::Bench(BenchError::Core(e)) => core_exit_code(e),
            Self::Bench(BenchError::Config(_)) | Self::Usage(_) => EXIT_USAGE,
            Self::Bench(BenchError::Io(_) | BenchError::Csv(_) | BenchError::Json(_)) | Self::Io(_) | Self::Json(_) => {
                EXIT_DATA
            }
            Self::VerifyFailed(_) => EXIT_VERIFY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Core(CoreError::Schema("x".into())).exit_code(), EXIT_DATA);
        assert_eq!(CliError::Core(CoreError::Rank("x".into())).exit_code(), EXIT_NUMERICAL);
        assert_eq!(
            CliError::Bench(BenchError::Core(CoreError::Numerical("x".into()))).exit_code(),
            EXIT_NUMERICAL
        );
        assert_eq!(CliError::Bench(BenchError::Config("x".into())).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::VerifyFailed("x".into()).exit_code(), EXIT_VERIFY);
    }
}
