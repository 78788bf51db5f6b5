//! Experiment runner for `zakai-core`: configuration files, convergence and
//! acceleration studies, corrector verification and their CSV outputs.

pub mod config;
pub mod experiment;
pub mod output;
pub mod selfcheck;

/// Process exit status of the `zakai` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    Fail = 1,
    SolverFailure = 2,
    ConfigError = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}
