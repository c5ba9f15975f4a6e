//! Finite-difference evolution strategies and the strategy-and-reward
//! optimization loop, which adds agent-space novelty to the ES objective.
//!
//! One epoch: draw `batch_size` noise vectors (mirrored in `±ε` pairs by
//! default), roll each perturbed locus out once for its return, score its
//! novelty against the archived loci on `ζ`, combine the two by rank, and
//! step the locus along the finite-difference gradient. The old locus is
//! archived and `ζ` is redrawn from the new one.
//!
//! Every random draw is seeded from `(root seed, stream, epoch, slot)`, so
//! results are independent of thread scheduling.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{OutputFunction, StochasticAgent};
use crate::distances::ActionMetric;
use crate::error::{Error, Result};
use crate::exploration::{
    agent_space_novelty, entropy_bonus, ArchiveEntry, BehaviorDescriptor, BonusConfig, CountTable,
    DynamicsModel, NoveltyArchive, StateSample,
};
use crate::oracle::exact_expected_reward;
use crate::process::{sample_index, DecisionProcess, RewardSpec, State};
use crate::rng::{derive_seed, rng_from};

// Seed streams.
const NOISE: u64 = 1;
const ROLLOUT: u64 = 2;
const ZETA: u64 = 3;

/// How per-candidate scores become ES weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shaping {
    /// Centered ranks in `[−0.5, 0.5]`.
    #[default]
    Ranked,
    /// Raw `R + λN`.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SroParams {
    pub batch_size: usize,
    /// `σ_es`.
    pub noise_scale: f64,
    /// `α`.
    pub learning_rate: f64,
    /// `λ`; 0 is plain ES on reward.
    pub novelty_weight: f64,
    /// `K`, the size of `ζ`.
    pub zeta_size: usize,
    /// Nearest loci averaged for novelty; 1 is the minimum.
    pub k_nearest: usize,
    pub mirrored: bool,
    pub shaping: Shaping,
    pub metric: ActionMetric,
    /// L2 pull toward `θ = 0` applied with the update, `θ ← θ + α(g − wθ)`.
    /// Keeps softmax loci from saturating, where perturbations stop
    /// changing behavior.
    pub weight_decay: f64,
    /// Episode cap; by default the smallest horizon whose reward tail is
    /// below `1e-3`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_horizon: Option<usize>,
}

impl Default for SroParams {
    fn default() -> Self {
        Self {
            batch_size: 64,
            noise_scale: 0.5,
            learning_rate: 1.0,
            novelty_weight: 0.0,
            zeta_size: 50,
            k_nearest: 1,
            mirrored: true,
            shaping: Shaping::Ranked,
            metric: ActionMetric::TotalVariation,
            weight_decay: 0.0,
            max_horizon: None,
        }
    }
}

impl SroParams {
    /// Every problem, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.batch_size < 2 {
            out.push(format!("batch_size {} must be at least 2", self.batch_size));
        }
        if self.mirrored && !self.batch_size.is_multiple_of(2) {
            out.push(format!("mirrored sampling needs an even batch_size, got {}", self.batch_size));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            out.push(format!("noise_scale {} must be positive", self.noise_scale));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.novelty_weight >= 0.0 && self.novelty_weight.is_finite()) {
            out.push(format!("novelty_weight {} must be nonnegative", self.novelty_weight));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            out.push(format!("weight_decay {} must be nonnegative", self.weight_decay));
        }
        if self.zeta_size < 1 {
            out.push("zeta_size must be at least 1".into());
        }
        if self.k_nearest < 1 {
            out.push("k_nearest must be at least 1".into());
        }
        if self.max_horizon == Some(0) {
            out.push("max_horizon must be positive".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    fn horizon(&self, process: &DecisionProcess, spec: &RewardSpec) -> usize {
        self.max_horizon
            .unwrap_or_else(|| spec.horizon_for(spec.reward_bound(process), 1e-3).max(1))
    }
}

/// One batch slot of an epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub noise: Vec<f64>,
    pub reward: f64,
    pub novelty: f64,
    pub seed: u64,
}

/// Exploration bonus with its running statistics.
#[derive(Clone, Debug, PartialEq)]
pub enum BonusState {
    Hash(CountTable),
    Entropy { kappa: f64 },
    Dynamics(DynamicsModel),
}

impl BonusState {
    pub fn new(config: &BonusConfig, process: &DecisionProcess) -> Result<Self> {
        Ok(match *config {
            BonusConfig::Hash { kappa, hash } => BonusState::Hash(CountTable::new(process, hash, kappa)?),
            BonusConfig::Entropy { kappa } => BonusState::Entropy { kappa },
            BonusConfig::Dynamics { kappa, decay } => BonusState::Dynamics(DynamicsModel::new(
                process.n_states(),
                process.n_actions(),
                decay,
                kappa,
            )?),
        })
    }

    /// Bonus for one step, read from the snapshot taken at epoch start.
    fn step(&self, agent: &StochasticAgent, s: State, a: usize, next: State, epoch: u64) -> f64 {
        match self {
            BonusState::Hash(table) => table.peek_bonus(s),
            BonusState::Entropy { kappa } => entropy_bonus(agent.dist(s), *kappa),
            BonusState::Dynamics(model) => model.peek_bonus(s, a, next, epoch),
        }
    }

    fn absorb(&mut self, transitions: &[(State, usize, State)]) {
        match self {
            BonusState::Hash(table) => transitions.iter().for_each(|&(s, _, _)| table.record(s)),
            BonusState::Entropy { .. } => {}
            BonusState::Dynamics(model) => {
                transitions.iter().for_each(|&(s, a, n)| model.observe(s, a, n))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub locus: StochasticAgent,
    pub epoch: u64,
    pub archive: NoveltyArchive,
    pub zeta: StateSample,
    pub seed: u64,
    pub params: SroParams,
    pub bonus: Option<BonusState>,
    /// The records of the last epoch.
    pub last_batch: Vec<CandidateRecord>,
}

impl OptimizerState {
    pub fn new(
        locus: StochasticAgent,
        process: &DecisionProcess,
        spec: &RewardSpec,
        params: SroParams,
        bonus: Option<&BonusConfig>,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if locus.theta().is_none() {
            return Err(Error::InvalidAgent("the locus must be a parameterized agent".into()));
        }
        if locus.n_states() != process.n_states() || locus.n_actions() != process.n_actions() {
            return Err(Error::InvalidArgument(format!(
                "locus is {}x{} but the process is {}x{}",
                locus.n_states(),
                locus.n_actions(),
                process.n_states(),
                process.n_actions()
            )));
        }
        if !process.is_strictly_markov() {
            return Err(Error::NotMarkov);
        }
        let horizon = params.horizon(process, spec);
        let zeta = archive_zeta(process, &locus, &params, horizon, seed, 0)?;
        Ok(Self {
            locus,
            epoch: 0,
            archive: NoveltyArchive::new(),
            zeta,
            seed,
            bonus: bonus.map(|b| BonusState::new(b, process)).transpose()?,
            params,
            last_batch: Vec::new(),
        })
    }

    /// Novelty of the current locus against the archived loci on `ζ`.
    pub fn locus_novelty(&self, spec: &RewardSpec) -> Result<f64> {
        agent_space_novelty(
            &self.locus,
            &self.archive,
            &self.zeta,
            spec,
            self.params.metric,
            self.params.k_nearest,
        )
    }
}

/// All states of one episode, in order of visit.
struct Episode {
    ret: f64,
    transitions: Vec<(State, usize, State)>,
}

/// Rolls `agent` out from `σ0` until a terminal state or `max_horizon`
/// steps; terminal states are recorded but not acted in.
fn episode<R: RngCore + ?Sized>(
    process: &DecisionProcess,
    agent: &StochasticAgent,
    spec: &RewardSpec,
    max_horizon: usize,
    bonus: Option<&BonusState>,
    epoch: u64,
    rng: &mut R,
    mut visit: impl FnMut(State) -> bool,
) -> Episode {
    let mut s = sample_index(process.initial(), rng);
    let mut ret = 0.0;
    let mut w = 1.0;
    let mut transitions = Vec::new();
    for _ in 0..max_horizon {
        if !visit(s) || process.is_terminal(s) {
            break;
        }
        let a = sample_index(agent.dist(s), rng);
        let next = sample_index(process.transition(s, a), rng);
        let mut r = process.reward(s, a);
        if let Some(b) = bonus {
            r += b.step(agent, s, a, next, epoch + 1);
        }
        ret += w * r;
        w *= spec.gamma;
        transitions.push((s, a, next));
        s = next;
    }
    Episode { ret, transitions }
}

/// The first `k` states met while rolling out `locus`, over as many
/// episodes as needed. Repeats are kept.
pub fn collect_zeta(
    process: &DecisionProcess,
    locus: &StochasticAgent,
    k: usize,
    max_horizon: usize,
    seed: u64,
) -> Result<StateSample> {
    if k == 0 {
        return Err(Error::InvalidArgument("ζ needs at least one state".into()));
    }
    let spec = RewardSpec { gamma: 0.5 };
    let mut states = Vec::with_capacity(k);
    let mut i = 0u64;
    while states.len() < k {
        let mut r = rng_from(seed, &[i]);
        episode(process, locus, &spec, max_horizon.max(1), None, 0, &mut r, |s| {
            states.push(s);
            states.len() < k
        });
        i += 1;
    }
    Ok(StateSample::new(states))
}

/// Centered ranks in `[−0.5, 0.5]`; tied values share their mean rank.
pub fn rank_normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let mean = (start + end - 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean / (n - 1) as f64 - 0.5;
        }
        start = end;
    }
    ranks
}

/// `(1/(n·σ))·Σ_i w_i ε_i`, with `w` the shaped scores.
pub fn es_gradient(noises: &[Vec<f64>], scores: &[f64], noise_scale: f64, shaping: Shaping) -> Result<Vec<f64>> {
    if noise_scale == 0.0 || !noise_scale.is_finite() {
        return Err(Error::InvalidArgument(format!("noise scale {noise_scale} must be nonzero")));
    }
    if noises.len() < 2 {
        return Err(Error::InvalidArgument("finite differences need at least two candidates".into()));
    }
    if scores.len() != noises.len() {
        return Err(Error::DimensionMismatch {
            expected: noises.len(),
            actual: scores.len(),
        });
    }
    let dim = noises[0].len();
    if let Some(bad) = noises.iter().find(|e| e.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    let weights = match shaping {
        Shaping::Ranked => rank_normalize(scores),
        Shaping::Raw => scores.to_vec(),
    };
    let scale = 1.0 / (noises.len() as f64 * noise_scale);
    let mut grad = vec![0.0; dim];
    for (eps, w) in noises.iter().zip(&weights) {
        for (g, e) in grad.iter_mut().zip(eps) {
            *g += w * e;
        }
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

/// Noise for each slot of an epoch; mirrored pairs share a draw.
pub fn epoch_noise(seed: u64, epoch: u64, batch: usize, dim: usize, mirrored: bool) -> Vec<Vec<f64>> {
    (0..batch)
        .map(|i| {
            let (j, sign) = if mirrored { (i / 2, if i % 2 == 0 { 1.0 } else { -1.0 }) } else { (i, 1.0) };
            let mut r = rng_from(seed, &[NOISE, epoch, j as u64]);
            (0..dim)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut r);
                    sign * x
                })
                .collect()
        })
        .collect()
}

/// Plain ES settings for black-box functions of a parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EsParams {
    pub batch_size: usize,
    pub noise_scale: f64,
    pub learning_rate: f64,
    pub mirrored: bool,
    pub shaping: Shaping,
}

/// One ES step on `score`: returns the gradient estimate and `θ + α·g`.
pub fn es_step(
    theta: &[f64],
    score: impl Fn(&[f64]) -> f64 + Sync,
    params: &EsParams,
    seed: u64,
    epoch: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let noises = epoch_noise(seed, epoch, params.batch_size, theta.len(), params.mirrored);
    let scores: Vec<f64> = noises
        .par_iter()
        .map(|eps| {
            let x: Vec<f64> = theta.iter().zip(eps).map(|(t, e)| t + params.noise_scale * e).collect();
            score(&x)
        })
        .collect();
    let grad = es_gradient(&noises, &scores, params.noise_scale, params.shaping)?;
    let next = theta.iter().zip(&grad).map(|(t, g)| t + params.learning_rate * g).collect();
    Ok((grad, next))
}

/// One epoch of strategy-and-reward optimization.
pub fn sro_epoch(state: OptimizerState, process: &DecisionProcess, spec: &RewardSpec) -> Result<OptimizerState> {
    let OptimizerState {
        locus,
        epoch,
        mut archive,
        zeta,
        seed,
        params,
        mut bonus,
        last_batch: _,
    } = state;
    let theta = locus.theta().ok_or_else(|| Error::InvalidAgent("locus lost its parameters".into()))?;
    let horizon = params.horizon(process, spec);
    let noises = epoch_noise(seed, epoch, params.batch_size, theta.len(), params.mirrored);

    let results: Vec<(CandidateRecord, Vec<(State, usize, State)>)> = noises
        .par_iter()
        .enumerate()
        .map(|(slot, eps)| {
            let wrap = |e: Error| Error::Rollout {
                epoch,
                slot,
                source: Box::new(e),
            };
            let candidate = locus.perturb(eps, params.noise_scale).map_err(wrap)?;
            let slot_seed = derive_seed(seed, &[ROLLOUT, epoch, slot as u64]);
            let mut r = crate::rng::rng(slot_seed);
            let ep = episode(process, &candidate, spec, horizon, bonus.as_ref(), epoch, &mut r, |_| true);
            let novelty = if params.novelty_weight > 0.0 {
                agent_space_novelty(&candidate, &archive, &zeta, spec, params.metric, params.k_nearest)
                    .map_err(wrap)?
            } else {
                0.0
            };
            let record = CandidateRecord {
                noise: eps.clone(),
                reward: ep.ret,
                novelty,
                seed: slot_seed,
            };
            Ok((record, ep.transitions))
        })
        .collect::<Result<_>>()?;

    let rewards: Vec<f64> = results.iter().map(|(r, _)| r.reward).collect();
    let novelties: Vec<f64> = results.iter().map(|(r, _)| r.novelty).collect();
    let lambda = params.novelty_weight;
    let scores: Vec<f64> = match params.shaping {
        Shaping::Ranked => rank_normalize(&rewards)
            .iter()
            .zip(rank_normalize(&novelties))
            .map(|(r, n)| r + lambda * n)
            .collect(),
        // An empty archive makes every novelty infinite; it carries no signal.
        Shaping::Raw => rewards
            .iter()
            .zip(&novelties)
            .map(|(r, n)| r + if n.is_finite() { lambda * n } else { 0.0 })
            .collect(),
    };
    let grad = es_gradient(&noises, &scores, params.noise_scale, params.shaping)?;
    let next_theta: Vec<f64> = theta
        .iter()
        .zip(&grad)
        .map(|(t, g)| t + params.learning_rate * (g - params.weight_decay * t))
        .collect();
    let output = locus.output_function().unwrap_or(OutputFunction::Boltzmann { kappa: 1.0 });
    let next = StochasticAgent::parameterized(locus.n_states(), locus.n_actions(), next_theta, output)?;

    if let Some(b) = bonus.as_mut() {
        for (_, transitions) in &results {
            b.absorb(transitions);
        }
    }
    archive.push(ArchiveEntry {
        epoch,
        descriptor: BehaviorDescriptor::AgentSpace,
        agent: locus,
    })?;
    let zeta = archive_zeta(process, &next, &params, horizon, seed, epoch + 1)?;
    Ok(OptimizerState {
        locus: next,
        epoch: epoch + 1,
        archive,
        zeta,
        seed,
        params,
        bonus,
        last_batch: results.into_iter().map(|(r, _)| r).collect(),
    })
}

fn archive_zeta(
    process: &DecisionProcess,
    locus: &StochasticAgent,
    params: &SroParams,
    horizon: usize,
    seed: u64,
    epoch: u64,
) -> Result<StateSample> {
    collect_zeta(process, locus, params.zeta_size, horizon, derive_seed(seed, &[ZETA, epoch]))
}

/// How the initial locus is drawn.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgentInit {
    /// `θ = 0`: the uniform agent.
    #[default]
    Zero,
    /// `θ ~ N(0, scale²)`.
    Gaussian { scale: f64 },
    /// Parameters read from an agent file.
    File { path: std::path::PathBuf },
}

/// Builds the initial softmax locus for `process`.
pub fn initial_locus(init: &AgentInit, process: &DecisionProcess, kappa: f64, seed: u64) -> Result<StochasticAgent> {
    let (n_s, n_a) = (process.n_states(), process.n_actions());
    match init {
        AgentInit::Zero => StochasticAgent::softmax(n_s, n_a, vec![0.0; n_s * n_a], kappa),
        AgentInit::Gaussian { scale } => {
            let mut r = rng_from(seed, &[0xA6E7]);
            let theta = (0..n_s * n_a)
                .map(|_| {
                    let x: f64 = StandardNormal.sample(&mut r);
                    scale * x
                })
                .collect();
            StochasticAgent::softmax(n_s, n_a, theta, kappa)
        }
        AgentInit::File { path } => {
            let agent = crate::io::load_agent(path)?;
            if agent.theta().is_none() {
                return Err(Error::InvalidAgent(format!(
                    "{}: the initial locus must be parameterized",
                    path.display()
                )));
            }
            Ok(agent)
        }
    }
}

/// Per-epoch observation of the locus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// Exact expected return of the locus on the task reward.
    #[serde(rename = "J")]
    pub j: f64,
    /// Novelty of the locus against earlier loci; `null` while the archive
    /// is empty.
    pub novelty: Option<f64>,
    pub dt_ms: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub epochs: u64,
    pub seed: u64,
    pub initial_j: f64,
    pub final_j: f64,
    pub best_j: f64,
    pub best_epoch: u64,
    pub final_locus: StochasticAgent,
    /// Every earlier locus, oldest first.
    pub archive: NoveltyArchive,
}

/// Settings for a full training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub params: SroParams,
    pub epochs: u64,
    pub seed: u64,
    pub bonus: Option<BonusConfig>,
    pub wall_clock: bool,
    /// Tolerance of the exact `J` evaluation in the metrics.
    pub j_tol: f64,
}

impl TrainSettings {
    pub fn new(params: SroParams, epochs: u64, seed: u64) -> Self {
        Self {
            params,
            epochs,
            seed,
            bonus: None,
            wall_clock: false,
            j_tol: 1e-9,
        }
    }
}

/// Runs `settings.epochs` epochs from `locus`, handing each record to
/// `sink` as soon as it exists. The initial locus is reported in the
/// [`RunReport`] only.
pub fn train(
    process: &DecisionProcess,
    spec: &RewardSpec,
    locus: StochasticAgent,
    settings: &TrainSettings,
    mut sink: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<RunReport> {
    let mut state = OptimizerState::new(
        locus,
        process,
        spec,
        settings.params.clone(),
        settings.bonus.as_ref(),
        settings.seed,
    )?;
    let j0 = exact_expected_reward(process, &state.locus, spec, settings.j_tol)?;
    let (mut best_j, mut best_epoch, mut last_j) = (j0, 0, j0);
    for _ in 0..settings.epochs {
        let start = std::time::Instant::now();
        state = sro_epoch(state, process, spec)?;
        let dt = start.elapsed().as_secs_f64() * 1e3;
        let j = exact_expected_reward(process, &state.locus, spec, settings.j_tol)?;
        let novelty = state.locus_novelty(spec)?;
        if j > best_j {
            best_j = j;
            best_epoch = state.epoch;
        }
        last_j = j;
        sink(&EpochRecord {
            epoch: state.epoch,
            j,
            novelty: novelty.is_finite().then_some(novelty),
            dt_ms: settings.wall_clock.then_some(dt),
            seed: settings.seed,
        })?;
    }
    Ok(RunReport {
        epochs: state.epoch,
        seed: settings.seed,
        initial_j: j0,
        final_j: last_j,
        best_j,
        best_epoch,
        final_locus: state.locus,
        archive: state.archive,
    })
}
