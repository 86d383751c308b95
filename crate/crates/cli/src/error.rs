use std::path::{Path, PathBuf};

use pair_core::engine::{RunFailure, StepError};
use pair_core::selection::SelectionError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Transport(String),
    #[error("{0}")]
    Strategy(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Record { path: PathBuf, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Strategy(_) => 4,
            CliError::Io { .. } | CliError::Record { .. } => 5,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn from_run(failure: &RunFailure, run_id: &str) -> Self {
        let msg = format!("run {run_id}: {failure}");
        match failure {
            RunFailure::Config(_) => CliError::Config(msg),
            RunFailure::Step(StepError::Selection(SelectionError::Transport(_))) => CliError::Transport(msg),
            RunFailure::Step(_) => CliError::Strategy(msg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pair_core::selection::PlanViolation;

    #[test]
    fn run_failures_map_to_exit_codes() {
        let code = |f: RunFailure| CliError::from_run(&f, "r").exit_code();
        assert_eq!(code(RunFailure::Config("x".into())), 2);
        assert_eq!(code(RunFailure::Step(StepError::Selection(SelectionError::Transport("down".into())))), 3);
        let exhausted = SelectionError::Exhausted { attempts: 3, reason: "x".into(), last_raw: String::new() };
        assert_eq!(code(RunFailure::Step(StepError::Selection(exhausted))), 4);
        assert_eq!(code(RunFailure::Step(StepError::Plan(PlanViolation::SelfPair { pair: 0, id: 1 }))), 4);
    }
}
