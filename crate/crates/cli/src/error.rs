use std::path::PathBuf;

use swarm_core::netsim::SimError;
use swarm_core::sgd::SgdError;
use swarm_core::strategy::StrategyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Stalled(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Write { .. } => 2,
            CliError::Infeasible(_) => 3,
            CliError::Stalled(_) => 4,
        }
    }
}

impl From<StrategyError> for CliError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::BadServer { .. } => CliError::Input(e.to_string()),
            _ => CliError::Infeasible(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::TrainingStalled { .. } => CliError::Stalled(e.to_string()),
            SimError::Strategy(inner) => inner.into(),
            SimError::Groups(_) => CliError::Infeasible(e.to_string()),
            SimError::InvalidTrace(_) | SimError::UnknownPeer(_) | SimError::InvalidConfig(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<SgdError> for CliError {
    fn from(e: SgdError) -> Self {
        match e {
            SgdError::Diverged { .. } => CliError::Stalled(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}
