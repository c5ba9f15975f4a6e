//! Process definition files.
//!
//! A process file is JSON with either explicit tables
//! (`states, actions, sigma0, transition[s][a][s'], reward[s][a]`) or an
//! embedded `maze` layout, plus the discount rate `gamma`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::StochasticAgent;
use crate::error::{Error, Result};
use crate::maze::{build_maze, MazeSpec};
use crate::process::{DecisionProcess, RewardSpec};

pub const PROCESS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maze: Option<MazeSpec>,
    pub gamma: f64,
}

impl ProcessFile {
    pub fn from_process(process: &DecisionProcess, spec: &RewardSpec) -> Self {
        let (n_s, n_a) = (process.n_states(), process.n_actions());
        ProcessFile {
            version: PROCESS_FORMAT_VERSION,
            name: Some(process.name().to_string()),
            states: Some(process.state_labels().to_vec()),
            actions: Some(process.action_labels().to_vec()),
            sigma0: Some(process.initial().to_vec()),
            transition: Some(
                (0..n_s)
                    .map(|s| (0..n_a).map(|a| process.transition(s, a).to_vec()).collect())
                    .collect(),
            ),
            reward: Some(
                (0..n_s)
                    .map(|s| (0..n_a).map(|a| process.reward(s, a)).collect())
                    .collect(),
            ),
            maze: None,
            gamma: spec.gamma,
        }
    }

    pub fn build(&self) -> Result<(DecisionProcess, RewardSpec)> {
        if self.version != PROCESS_FORMAT_VERSION {
            return Err(Error::InvalidProcess(format!(
                "unsupported process format version {}",
                self.version
            )));
        }
        let spec = RewardSpec::new(self.gamma)?;
        let tables = [
            self.states.is_some(),
            self.actions.is_some(),
            self.sigma0.is_some(),
            self.transition.is_some(),
            self.reward.is_some(),
        ];
        let process = match (&self.maze, tables.iter().any(|&x| x)) {
            (Some(maze), false) => build_maze(maze)?,
            (Some(_), true) => {
                return Err(Error::InvalidProcess(
                    "give either a maze or explicit tables, not both".into(),
                ))
            }
            (None, _) => {
                let missing: Vec<&str> = ["states", "actions", "sigma0", "transition", "reward"]
                    .iter()
                    .zip(tables)
                    .filter(|(_, present)| !present)
                    .map(|(n, _)| *n)
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::InvalidProcess(format!("missing fields: {}", missing.join(", "))));
                }
                DecisionProcess::new(
                    self.name.clone().unwrap_or_else(|| "process".into()),
                    self.states.clone().unwrap(),
                    self.actions.clone().unwrap(),
                    self.sigma0.clone().unwrap(),
                    self.transition.clone().unwrap(),
                    self.reward.clone().unwrap(),
                )?
            }
        };
        Ok((process, spec))
    }
}

pub fn parse_process(text: &str) -> Result<(DecisionProcess, RewardSpec)> {
    let file: ProcessFile = serde_json::from_str(text)?;
    file.build()
}

pub fn load_process(path: &Path) -> Result<(DecisionProcess, RewardSpec)> {
    parse_process(&std::fs::read_to_string(path)?)
}

pub fn load_agent(path: &Path) -> Result<StochasticAgent> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
