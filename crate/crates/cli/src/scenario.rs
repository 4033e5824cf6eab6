use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use swarm_core::model::SpecDocument;
use swarm_core::netsim::{ChurnTrace, TrainingConfig};
use swarm_core::CollaborationSpec;

use crate::error::CliError;
use crate::sgd::SgdConfig;

/// A scenario file: one collaboration plus optional per-command settings.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub spec: SpecDocument,
    #[serde(default)]
    pub trace: Option<ChurnTrace>,
    #[serde(default)]
    pub simulate: Option<TrainingConfig>,
    #[serde(default)]
    pub sgd: Option<SgdConfig>,
}

#[derive(Debug)]
pub struct Scenario {
    pub name: String,
    pub spec: CollaborationSpec,
    pub trace: Option<ChurnTrace>,
    pub simulate: TrainingConfig,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let file: ScenarioFile = read_json(path)?;
        let spec = CollaborationSpec::try_from(file.spec).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let ids: HashSet<&str> = spec.peers.iter().map(|p| p.id.0.as_str()).collect();
        if ids.len() != spec.peers.len() {
            return Err(CliError::Input("peer ids must be unique".into()));
        }
        if let Some(trace) = &file.trace {
            if let Some(e) = trace.events.iter().find(|e| !ids.contains(e.peer.0.as_str())) {
                return Err(CliError::Input(format!("trace mentions unknown peer {:?}", e.peer.0)));
            }
            trace.validate().map_err(|e| CliError::Input(e.to_string()))?;
        }
        Ok(Scenario {
            name: file.name,
            spec,
            trace: file.trace,
            simulate: file.simulate.unwrap_or_default(),
        })
    }
}
