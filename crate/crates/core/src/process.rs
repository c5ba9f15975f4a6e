//! Finite discrete-time decision processes, paths, and discounted reward.

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::agents::Policy;
use crate::error::{Error, Result};
use crate::rng;

pub type State = usize;
pub type Action = usize;

/// Tolerance for probability-vector validation.
pub const PROB_TOL: f64 = 1e-12;

/// Checks that `dist` is a probability vector within `tol`.
pub fn check_distribution(dist: &[f64], tol: f64) -> std::result::Result<(), String> {
    if dist.is_empty() {
        return Err("empty distribution".into());
    }
    let mut sum = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        if !p.is_finite() {
            return Err(format!("entry {i} is not finite ({p})"));
        }
        if p < 0.0 {
            return Err(format!("entry {i} is negative ({p})"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > tol {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

/// Draws an index from a probability vector by inverse CDF.
pub fn sample_index<R: RngCore + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// A path `φ_t`: state-action pairs for times `0..=t`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TruncatedPath {
    pairs: Vec<(State, Action)>,
}

impl TruncatedPath {
    pub fn new(pairs: Vec<(State, Action)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("truncated path"));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(State, Action)] {
        &self.pairs
    }

    pub fn horizon(&self) -> usize {
        self.pairs.len() - 1
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        self.pairs.iter().map(|&(s, _)| s)
    }

    /// The prime path `φ'_i`: pairs before `i` plus the state at `i`.
    pub fn prime_at(&self, i: usize) -> PrimePath {
        PrimePath {
            pairs: self.pairs[..i].to_vec(),
            terminal: self.pairs[i].0,
        }
    }
}

impl fmt::Display for TruncatedPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, (s, a)) in self.pairs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "s{s} a{a}")?;
        }
        write!(f, "]")
    }
}

/// A prime path `φ'_t`: `t` state-action pairs followed by the state
/// awaiting an action.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PrimePath {
    pub pairs: Vec<(State, Action)>,
    pub terminal: State,
}

impl PrimePath {
    pub fn initial(state: State) -> Self {
        Self {
            pairs: Vec::new(),
            terminal: state,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn extend(&self, action: Action, next: State) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.push((self.terminal, action));
        Self {
            pairs,
            terminal: next,
        }
    }

    pub fn complete(&self, action: Action) -> TruncatedPath {
        let mut pairs = self.pairs.clone();
        pairs.push((self.terminal, action));
        TruncatedPath { pairs }
    }
}

impl fmt::Display for PrimePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (s, a) in &self.pairs {
            write!(f, "s{s} a{a}, ")?;
        }
        write!(f, "s{}]", self.terminal)
    }
}

/// Path-dependent transition, consulted by sampling only.
#[derive(Clone)]
pub struct PathHook(pub Arc<dyn Fn(&TruncatedPath) -> Vec<f64> + Send + Sync>);

impl fmt::Debug for PathHook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PathHook(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkovOrder {
    StrictlyMarkov,
    PathDependent,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ProcessMetadata {
    pub reward_min: f64,
    pub reward_max: f64,
    /// `max |r|`.
    pub reward_max_abs: f64,
    /// Absorbing, zero-reward states. Rollouts may stop on reaching one.
    pub terminal: Vec<bool>,
    /// Grid coordinates `(row, col)` per state, for maze processes.
    pub positions: Option<Vec<(usize, usize)>>,
    pub warnings: Vec<String>,
}

/// A finite decision process with a strictly Markov kernel.
#[derive(Clone, Debug)]
pub struct DecisionProcess {
    name: String,
    state_labels: Vec<String>,
    action_labels: Vec<String>,
    initial: Vec<f64>,
    // Flattened `[s * n_actions + a]`, each row a distribution over states.
    transition: Vec<Vec<f64>>,
    reward: Vec<f64>,
    markov_order: MarkovOrder,
    path_hook: Option<PathHook>,
    metadata: ProcessMetadata,
}

impl DecisionProcess {
    /// Builds and validates a process. `transition[s][a]` and
    /// `reward[s][a]` must cover every state-action pair.
    pub fn new(
        name: impl Into<String>,
        state_labels: Vec<String>,
        action_labels: Vec<String>,
        initial: Vec<f64>,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n_s = state_labels.len();
        let n_a = action_labels.len();
        if n_s == 0 {
            return Err(Error::InvalidProcess("no states".into()));
        }
        if n_a == 0 {
            return Err(Error::InvalidProcess("no actions".into()));
        }
        if initial.len() != n_s {
            return Err(Error::InvalidProcess(format!(
                "initial distribution has {} entries for {n_s} states",
                initial.len()
            )));
        }
        check_distribution(&initial, PROB_TOL)
            .map_err(|e| Error::InvalidProcess(format!("initial distribution: {e}")))?;
        if transition.len() != n_s || reward.len() != n_s {
            return Err(Error::InvalidProcess(
                "transition and reward need one row per state".into(),
            ));
        }
        let mut flat_t = Vec::with_capacity(n_s * n_a);
        let mut flat_r = Vec::with_capacity(n_s * n_a);
        for s in 0..n_s {
            if transition[s].len() != n_a || reward[s].len() != n_a {
                return Err(Error::InvalidProcess(format!(
                    "state {s}: expected {n_a} actions"
                )));
            }
            for a in 0..n_a {
                let row = &transition[s][a];
                if row.len() != n_s {
                    return Err(Error::InvalidProcess(format!(
                        "transition({s},{a}) has {} entries for {n_s} states",
                        row.len()
                    )));
                }
                check_distribution(row, PROB_TOL)
                    .map_err(|e| Error::InvalidProcess(format!("transition({s},{a}): {e}")))?;
                let r = reward[s][a];
                if !r.is_finite() {
                    return Err(Error::InvalidProcess(format!("reward({s},{a}) not finite")));
                }
                flat_t.push(row.clone());
                flat_r.push(r);
            }
        }
        let reward_min = flat_r.iter().copied().fold(f64::INFINITY, f64::min);
        let reward_max = flat_r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let terminal = (0..n_s)
            .map(|s| {
                (0..n_a).all(|a| {
                    flat_r[s * n_a + a] == 0.0 && flat_t[s * n_a + a][s] == 1.0
                })
            })
            .collect();
        Ok(Self {
            name: name.into(),
            state_labels,
            action_labels,
            initial,
            transition: flat_t,
            reward: flat_r,
            markov_order: MarkovOrder::StrictlyMarkov,
            path_hook: None,
            metadata: ProcessMetadata {
                reward_min,
                reward_max,
                reward_max_abs: reward_min.abs().max(reward_max.abs()),
                terminal,
                positions: None,
                warnings: Vec::new(),
            },
        })
    }

    /// Attaches a path-dependent transition used by sampling. Exact
    /// oracles refuse processes carrying a hook.
    pub fn with_path_hook(mut self, hook: PathHook) -> Self {
        self.path_hook = Some(hook);
        self.markov_order = MarkovOrder::PathDependent;
        self
    }

    pub(crate) fn with_positions(mut self, positions: Vec<(usize, usize)>) -> Self {
        self.metadata.positions = Some(positions);
        self
    }

    pub(crate) fn push_warning(&mut self, warning: String) {
        self.metadata.warnings.push(warning);
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_labels.len()
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn action_labels(&self) -> &[String] {
        &self.action_labels
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self, s: State, a: Action) -> &[f64] {
        &self.transition[s * self.n_actions() + a]
    }

    pub fn reward(&self, s: State, a: Action) -> f64 {
        self.reward[s * self.n_actions() + a]
    }

    pub fn markov_order(&self) -> MarkovOrder {
        self.markov_order
    }

    pub fn is_strictly_markov(&self) -> bool {
        self.markov_order == MarkovOrder::StrictlyMarkov
    }

    pub fn metadata(&self) -> &ProcessMetadata {
        &self.metadata
    }

    pub fn is_terminal(&self, s: State) -> bool {
        self.metadata.terminal[s]
    }

    pub fn check_state(&self, s: State) -> Result<()> {
        if s < self.n_states() {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                state: s,
                n_states: self.n_states(),
            })
        }
    }

    /// Copy of the process with every reward replaced by `f(s, a, r)`.
    pub fn map_rewards(&self, f: impl Fn(State, Action, f64) -> f64) -> Result<Self> {
        let n_a = self.n_actions();
        let transition = (0..self.n_states())
            .map(|s| (0..n_a).map(|a| self.transition(s, a).to_vec()).collect())
            .collect();
        let reward = (0..self.n_states())
            .map(|s| (0..n_a).map(|a| f(s, a, self.reward(s, a))).collect())
            .collect();
        let mut p = Self::new(
            self.name.clone(),
            self.state_labels.clone(),
            self.action_labels.clone(),
            self.initial.clone(),
            transition,
            reward,
        )?;
        p.metadata.positions = self.metadata.positions.clone();
        p.metadata.warnings = self.metadata.warnings.clone();
        Ok(p)
    }

    fn next_state_dist<'a>(&'a self, path: &TruncatedPath, scratch: &'a mut Vec<f64>) -> &'a [f64] {
        match &self.path_hook {
            Some(hook) => {
                *scratch = (hook.0)(path);
                scratch
            }
            None => {
                let &(s, a) = path.pairs.last().expect("nonempty path");
                self.transition(s, a)
            }
        }
    }
}

/// Exponential discounting `ω(t) = γ^t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub gamma: f64,
}

impl RewardSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "discount rate {gamma} outside (0, 1)"
            )));
        }
        Ok(Self { gamma })
    }

    pub fn discount(&self, t: usize) -> f64 {
        self.gamma.powi(t as i32)
    }

    /// `Ω = Σ_t γ^t = 1 / (1 − γ)`.
    pub fn omega(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    /// `R̄ = (max r − min r) · Ω`.
    pub fn reward_bound(&self, process: &DecisionProcess) -> f64 {
        let m = process.metadata();
        (m.reward_max - m.reward_min) * self.omega()
    }

    /// `bound · Σ_{i>T} γ^i`, the mass a horizon-`T` truncation drops when
    /// every per-step term is at most `bound`.
    pub fn tail_bound(&self, bound: f64, horizon: usize) -> f64 {
        bound * self.gamma.powi(horizon as i32 + 1) / (1.0 - self.gamma)
    }

    /// Smallest horizon whose tail bound is below `tol`.
    pub fn horizon_for(&self, bound: f64, tol: f64) -> usize {
        if bound <= 0.0 {
            return 0;
        }
        let mut t = 0;
        while self.tail_bound(bound, t) >= tol {
            t += 1;
        }
        t
    }
}

/// Samples `φ_horizon`: `s_0 ~ σ0`, `a_t ~ agent(φ'_t)`, `s_{t+1} ~ σ(φ_t)`.
pub fn sample_path<P: Policy + ?Sized>(
    process: &DecisionProcess,
    agent: &P,
    horizon: usize,
    seed: u64,
) -> Result<TruncatedPath> {
    let mut rng = rng::rng(seed);
    sample_path_with(process, agent, horizon, &mut rng)
}

pub fn sample_path_with<P: Policy + ?Sized, R: RngCore + ?Sized>(
    process: &DecisionProcess,
    agent: &P,
    horizon: usize,
    rng: &mut R,
) -> Result<TruncatedPath> {
    let mut pairs = Vec::with_capacity(horizon + 1);
    let mut state = sample_index(process.initial(), rng);
    let mut scratch = Vec::new();
    for t in 0..=horizon {
        let action = draw_action(process, agent, &pairs, state, rng)?;
        pairs.push((state, action));
        if t < horizon {
            let path = TruncatedPath { pairs };
            state = sample_index(process.next_state_dist(&path, &mut scratch), rng);
            pairs = path.pairs;
        }
    }
    Ok(TruncatedPath { pairs })
}

fn draw_action<P: Policy + ?Sized, R: RngCore + ?Sized>(
    process: &DecisionProcess,
    agent: &P,
    pairs: &[(State, Action)],
    state: State,
    rng: &mut R,
) -> Result<Action> {
    if let Some(row) = agent.markov_row(state) {
        return Ok(sample_index(row, rng));
    }
    let prime = PrimePath {
        pairs: pairs.to_vec(),
        terminal: state,
    };
    let dist = agent.act(&prime)?;
    if dist.len() != process.n_actions() {
        return Err(Error::MalformedDistribution {
            path: prime.to_string(),
            reason: format!("{} entries for {} actions", dist.len(), process.n_actions()),
        });
    }
    check_distribution(&dist, PROB_TOL).map_err(|reason| Error::MalformedDistribution {
        path: prime.to_string(),
        reason,
    })?;
    Ok(sample_index(&dist, rng))
}

/// `Σ_{t ≤ horizon} γ^t r(s_t, a_t)`. Includes the final pair.
pub fn path_reward(process: &DecisionProcess, path: &TruncatedPath, spec: &RewardSpec) -> f64 {
    let mut total = 0.0;
    let mut w = 1.0;
    for &(s, a) in path.pairs() {
        total += w * process.reward(s, a);
        w *= spec.gamma;
    }
    total
}

/// Discounted return of one episode that stops at `max_horizon` or on
/// reaching a terminal state. Returns the visited states alongside.
pub fn rollout_return<P: Policy + ?Sized, R: RngCore + ?Sized>(
    process: &DecisionProcess,
    agent: &P,
    spec: &RewardSpec,
    max_horizon: usize,
    rng: &mut R,
    visited: Option<&mut Vec<State>>,
) -> Result<f64> {
    let mut sink = Vec::new();
    let visited = visited.unwrap_or(&mut sink);
    let mut pairs: Vec<(State, Action)> = Vec::new();
    let mut state = sample_index(process.initial(), rng);
    let mut total = 0.0;
    let mut w = 1.0;
    let mut scratch = Vec::new();
    let keep_history = process.path_hook.is_some() || agent.markov_row(state).is_none();
    for t in 0..=max_horizon {
        visited.push(state);
        if process.is_terminal(state) {
            break;
        }
        let action = draw_action(process, agent, &pairs, state, rng)?;
        total += w * process.reward(state, action);
        w *= spec.gamma;
        if t == max_horizon {
            break;
        }
        pairs.push((state, action));
        let path = TruncatedPath { pairs };
        state = sample_index(process.next_state_dist(&path, &mut scratch), rng);
        pairs = path.pairs;
        if !keep_history {
            pairs.clear();
        }
    }
    Ok(total)
}

/// The two-chamber process: states `{s0, s1}`, actions `{STAY, SWITCH}`,
/// start in `s0`, deterministic moves, reward 1 on every step spent in `s1`.
pub fn two_chamber() -> DecisionProcess {
    DecisionProcess::new(
        "two-chamber",
        vec!["s0".into(), "s1".into()],
        vec!["STAY".into(), "SWITCH".into()],
        vec![1.0, 0.0],
        vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        ],
        vec![vec![0.0, 0.0], vec![1.0, 1.0]],
    )
    .expect("two-chamber process is valid")
}

/// How to shape the transition kernel of a random process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Connectivity {
    /// Every transition probability strictly positive.
    Dense,
    /// Each row supported on a random subset of states.
    Sparse,
    /// Like `Sparse`, but the last state is entered from nowhere else and
    /// has zero initial mass, so no agent ever visits it.
    Unreachable,
}

/// Random finite process with rewards in `[-1, 1]`.
pub fn random_process<R: RngCore + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    connectivity: Connectivity,
) -> DecisionProcess {
    assert!(n_states >= 1 && n_actions >= 1);
    if connectivity == Connectivity::Unreachable {
        assert!(n_states >= 2, "unreachable layout needs two states");
    }
    let reachable = match connectivity {
        Connectivity::Unreachable => n_states - 1,
        _ => n_states,
    };
    let random_row = |rng: &mut R, support: usize, sparse: bool| -> Vec<f64> {
        let mut row = vec![0.0; n_states];
        loop {
            for p in row.iter_mut().take(support) {
                let keep = !sparse || rng.random::<f64>() < 0.5;
                *p = if keep { rng.random::<f64>() + 1e-3 } else { 0.0 };
            }
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|p| *p /= sum);
                return row;
            }
        }
    };
    let sparse = connectivity != Connectivity::Dense;
    let initial = random_row(rng, reachable, false);
    let transition = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| random_row(rng, reachable, sparse))
                .collect()
        })
        .collect();
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    DecisionProcess::new(
        format!("random-{n_states}x{n_actions}"),
        (0..n_states).map(|s| format!("s{s}")).collect(),
        (0..n_actions).map(|a| format!("a{a}")).collect(),
        initial,
        transition,
        reward,
    )
    .expect("random process is valid")
}
