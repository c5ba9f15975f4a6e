//! Run configuration files for training.
//!
//! Configs are TOML or JSON. Parsing reports every problem it finds rather
//! than stopping at the first: unknown keys, ill-typed values and
//! out-of-range hyperparameters are collected into one [`Error::Config`].
//! File references are checked by [`RunConfig::resolve`] before anything
//! is computed.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agents::StochasticAgent;
use crate::error::{Error, Result};
use crate::exploration::{BonusConfig, StateHash};
use crate::io::load_process;
use crate::optimizer::{initial_locus, AgentInit, SroParams, TrainSettings};
use crate::process::{DecisionProcess, RewardSpec};
use crate::verify::CHECKS;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    /// Process file, relative to the config file.
    pub process: PathBuf,
    /// Overrides the discount rate of the process file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub seed: u64,
    pub epochs: u64,
    /// Softmax temperature of the locus.
    pub kappa: f64,
    /// Record wall-clock epoch times; off keeps metrics byte-reproducible.
    pub wall_clock: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Checks to run after training.
    pub verify: Vec<String>,
    pub agent: AgentInit,
    pub optimizer: SroParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bonus: Option<BonusConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_FORMAT_VERSION,
            process: PathBuf::new(),
            gamma: None,
            seed: 0,
            epochs: 100,
            kappa: 1.0,
            wall_clock: false,
            output: None,
            verify: Vec::new(),
            agent: AgentInit::Zero,
            optimizer: SroParams::default(),
            bonus: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    /// `.json` is JSON; anything else is read as TOML.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

fn keys_of<T: Serialize>(value: &T) -> Vec<String> {
    match serde_json::to_value(value) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Drops keys outside `known` from `obj`, reporting each one.
fn strip_unknown(obj: &mut Map<String, Value>, known: &[&str], at: &str, problems: &mut Vec<String>) {
    let unknown: Vec<String> = obj.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect();
    for k in unknown {
        problems.push(format!("unknown field `{at}{k}`; expected one of: {}", known.join(", ")));
        obj.remove(&k);
    }
}

/// Tagged enum tables: the keys allowed for the variant named by `kind`.
fn strip_tagged(value: &mut Value, variants: &[(&'static str, &'static [&'static str])], at: &str, problems: &mut Vec<String>) {
    let Value::Object(obj) = value else { return };
    let Some(kind) = obj.get("kind").and_then(Value::as_str) else { return };
    let Some((_, fields)) = variants.iter().find(|(k, _)| *k == kind) else { return };
    let known: Vec<&str> = std::iter::once("kind").chain(fields.iter().copied()).collect();
    strip_unknown(obj, &known, at, problems);
}

const AGENT_VARIANTS: &[(&str, &[&str])] = &[("zero", &[]), ("gaussian", &["scale"]), ("file", &["path"])];
const BONUS_VARIANTS: &[(&str, &[&str])] =
    &[("hash", &["kappa", "hash"]), ("entropy", &["kappa"]), ("dynamics", &["kappa", "decay"])];
const HASH_VARIANTS: &[(&str, &[&str])] = &[("identity", &[]), ("modulo", &["buckets"]), ("grid", &["cell"])];

/// Deserializes `T` from the single entry `key: value`, defaults filling
/// the rest, so each field's error is reported on its own.
fn one_field<T: DeserializeOwned>(key: &str, value: &Value, at: &str, problems: &mut Vec<String>) -> Option<T> {
    let mut m = Map::new();
    m.insert(key.to_string(), value.clone());
    match serde_json::from_value::<T>(Value::Object(m)) {
        Ok(t) => Some(t),
        Err(e) => {
            problems.push(format!("`{at}{key}`: {e}"));
            None
        }
    }
}

/// Parses and validates a config, collecting every problem.
pub fn parse_config(text: &str, format: Format) -> Result<RunConfig> {
    let mut value: Value = match format {
        Format::Json => serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("malformed JSON: {e}")]))?,
        Format::Toml => {
            let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(vec![format!("malformed TOML: {e}")]))?;
            serde_json::to_value(table)?
        }
    };
    let Value::Object(obj) = &mut value else {
        return Err(Error::Config(vec!["config must be a table".into()]));
    };
    let mut problems = Vec::new();
    let top = keys_of(&RunConfig {
        gamma: Some(0.5),
        output: Some(PathBuf::new()),
        bonus: Some(BonusConfig::Entropy { kappa: 0.0 }),
        ..RunConfig::default()
    });
    let top: Vec<&str> = top.iter().map(String::as_str).collect();
    strip_unknown(obj, &top, "", &mut problems);
    if let Some(Value::Object(opt)) = obj.get_mut("optimizer") {
        let known = keys_of(&SroParams {
            max_horizon: Some(1),
            ..SroParams::default()
        });
        let known: Vec<&str> = known.iter().map(String::as_str).collect();
        strip_unknown(opt, &known, "optimizer.", &mut problems);
    }
    if let Some(agent) = obj.get_mut("agent") {
        strip_tagged(agent, AGENT_VARIANTS, "agent.", &mut problems);
    }
    if let Some(bonus) = obj.get_mut("bonus") {
        strip_tagged(bonus, BONUS_VARIANTS, "bonus.", &mut problems);
        if let Some(hash) = bonus.get_mut("hash") {
            strip_tagged(hash, HASH_VARIANTS, "bonus.hash.", &mut problems);
        }
    }

    let mut config = RunConfig::default();
    for (key, v) in obj.iter() {
        if key == "optimizer" {
            if let Value::Object(opt) = v {
                for (k, ov) in opt {
                    if let Some(p) = one_field::<SroParams>(k, ov, "optimizer.", &mut problems) {
                        merge_optimizer(&mut config.optimizer, k, p);
                    }
                }
            } else {
                problems.push("`optimizer` must be a table".into());
            }
            continue;
        }
        if let Some(c) = one_field::<RunConfig>(key, v, "", &mut problems) {
            merge_top(&mut config, key, c);
        }
    }
    problems.extend(config.problems());
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(Error::Config(problems))
    }
}

fn merge_top(into: &mut RunConfig, key: &str, from: RunConfig) {
    match key {
        "version" => into.version = from.version,
        "process" => into.process = from.process,
        "gamma" => into.gamma = from.gamma,
        "seed" => into.seed = from.seed,
        "epochs" => into.epochs = from.epochs,
        "kappa" => into.kappa = from.kappa,
        "wall_clock" => into.wall_clock = from.wall_clock,
        "output" => into.output = from.output,
        "verify" => into.verify = from.verify,
        "agent" => into.agent = from.agent,
        "bonus" => into.bonus = from.bonus,
        _ => unreachable!("unknown keys are stripped"),
    }
}

fn merge_optimizer(into: &mut SroParams, key: &str, from: SroParams) {
    match key {
        "batch_size" => into.batch_size = from.batch_size,
        "noise_scale" => into.noise_scale = from.noise_scale,
        "learning_rate" => into.learning_rate = from.learning_rate,
        "novelty_weight" => into.novelty_weight = from.novelty_weight,
        "zeta_size" => into.zeta_size = from.zeta_size,
        "k_nearest" => into.k_nearest = from.k_nearest,
        "mirrored" => into.mirrored = from.mirrored,
        "shaping" => into.shaping = from.shaping,
        "metric" => into.metric = from.metric,
        "weight_decay" => into.weight_decay = from.weight_decay,
        "max_horizon" => into.max_horizon = from.max_horizon,
        _ => unreachable!("unknown keys are stripped"),
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read config {}: {e}", path.display())]))?;
    parse_config(&text, Format::from_path(path))
}

fn check_unit_interval(name: &str, gamma: f64, out: &mut Vec<String>) {
    if !(gamma > 0.0 && gamma < 1.0) {
        out.push(format!("{name} {gamma} must lie in (0, 1); Ω = 1/(1 − γ) is infinite at γ = 1"));
    }
}

/// The resolved inputs of a training run.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub process: DecisionProcess,
    pub spec: RewardSpec,
    pub locus: StochasticAgent,
    pub settings: TrainSettings,
}

impl RunConfig {
    /// Range and consistency problems; file references are checked by
    /// [`RunConfig::resolve`].
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.version != CONFIG_FORMAT_VERSION {
            out.push(format!(
                "unsupported config version {}; this build reads version {CONFIG_FORMAT_VERSION}",
                self.version
            ));
        }
        if self.process.as_os_str().is_empty() {
            out.push("missing field `process`: a process file is required".into());
        }
        if let Some(g) = self.gamma {
            check_unit_interval("gamma", g, &mut out);
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            out.push(format!("kappa {} must be positive", self.kappa));
        }
        if self.seed > i64::MAX as u64 {
            out.push(format!("seed {} must be below 2^63", self.seed));
        }
        if self.epochs > i64::MAX as u64 {
            out.push(format!("epochs {} must be below 2^63", self.epochs));
        }
        if let AgentInit::Gaussian { scale } = self.agent {
            if !(scale >= 0.0 && scale.is_finite()) {
                out.push(format!("agent scale {scale} must be nonnegative"));
            }
        }
        if let Some(bonus) = &self.bonus {
            let (BonusConfig::Hash { kappa, .. } | BonusConfig::Entropy { kappa } | BonusConfig::Dynamics { kappa, .. }) = bonus;
            if !(*kappa >= 0.0 && kappa.is_finite()) {
                out.push(format!("bonus kappa {kappa} must be nonnegative"));
            }
            match bonus {
                BonusConfig::Dynamics { decay, .. } if !(*decay > 0.0 && *decay <= 1.0) => {
                    out.push(format!("bonus decay {decay} must lie in (0, 1]"))
                }
                BonusConfig::Hash { hash: StateHash::Modulo { buckets: 0 }, .. } => {
                    out.push("bonus hash buckets must be positive".into())
                }
                BonusConfig::Hash { hash: StateHash::Grid { cell: 0 }, .. } => out.push("bonus hash cell must be positive".into()),
                _ => {}
            }
        }
        for name in &self.verify {
            if !CHECKS.contains(&name.as_str()) {
                out.push(format!("unknown check {name:?} in `verify`; known: {}", CHECKS.join(", ")));
            }
        }
        out.extend(self.optimizer.problems().into_iter().map(|p| format!("optimizer: {p}")));
        out
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![format!("cannot emit TOML: {e}")]))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Loads every referenced file relative to `base` and builds the run,
    /// reporting all missing or invalid files together.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedRun> {
        let mut problems = self.problems();
        let process_path = base.join(&self.process);
        let loaded = if self.process.as_os_str().is_empty() {
            None
        } else if !process_path.is_file() {
            problems.push(format!("process file {} does not exist", process_path.display()));
            None
        } else {
            match load_process(&process_path) {
                Ok(x) => Some(x),
                Err(e) => {
                    problems.push(format!("process file {}: {e}", process_path.display()));
                    None
                }
            }
        };
        let agent = match &self.agent {
            AgentInit::File { path } => {
                let full = base.join(path);
                if !full.is_file() {
                    problems.push(format!("agent file {} does not exist", full.display()));
                }
                AgentInit::File { path: full }
            }
            other => other.clone(),
        };
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let (process, mut spec) = loaded.expect("checked above");
        if let Some(g) = self.gamma {
            spec = RewardSpec::new(g)?;
        }
        let locus = initial_locus(&agent, &process, self.kappa, self.seed).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let mut settings = TrainSettings::new(self.optimizer.clone(), self.epochs, self.seed);
        settings.bonus = self.bonus;
        settings.wall_clock = self.wall_clock;
        Ok(ResolvedRun {
            config: self.clone(),
            process,
            spec,
            locus,
            settings,
        })
    }
}
