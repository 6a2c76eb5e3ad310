//! Library side of the `eitconv` command-line driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod engine;
pub mod figures;
pub mod pump;
pub mod sweep;

use config::FieldError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input:\n{}", format_fields(.0))]
    Validation(Vec<FieldError>),
    #[error(transparent)]
    Numerical(#[from] eitconv::Error),
    #[error("{0}")]
    Message(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_fields(errs: &[FieldError]) -> String {
    errs.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    /// 2 for bad input, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use eitconv::Error as E;
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(E::Convergence(_) | E::Stability { .. } | E::Aliasing { .. }) => 3,
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}
