//! Behavior descriptors, novelty scoring and exploration bonuses.
//!
//! Novelty is the mean distance to the `k` nearest archive entries. For the
//! agent space the "descriptor" is the agent itself and the distance is the
//! local distance approximated on a state sample `ζ`.

use std::collections::HashMap;

use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::agents::StochasticAgent;
use crate::distances::{ActionMetric, RunningStats, WeightedStateSet};
use crate::error::{Error, Result};
use crate::process::{sample_index, DecisionProcess, RewardSpec, State, TruncatedPath};
use crate::rng;

/// What a behavior function extracts from an agent or its rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BehaviorDescriptor {
    /// Grid position at the last step of a path.
    FinalPosition { position: Vec<f64> },
    /// Concatenated positions at fixed times.
    PositionOverTime { times: Vec<usize>, positions: Vec<f64> },
    /// An agent restricted to a weighted state subset.
    Primitive {
        set: WeightedStateSet,
        rows: Vec<Vec<f64>>,
    },
    ParameterVector { theta: Vec<f64> },
    /// Placeholder; the agent snapshot itself is the behavior.
    AgentSpace,
}

impl BehaviorDescriptor {
    fn kind(&self) -> &'static str {
        match self {
            BehaviorDescriptor::FinalPosition { .. } => "final-position",
            BehaviorDescriptor::PositionOverTime { .. } => "position-over-time",
            BehaviorDescriptor::Primitive { .. } => "primitive",
            BehaviorDescriptor::ParameterVector { .. } => "parameter-vector",
            BehaviorDescriptor::AgentSpace => "agent-space",
        }
    }
}

fn position_of(process: &DecisionProcess, s: State) -> Result<Vec<f64>> {
    let positions = process
        .metadata()
        .positions
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("process has no grid positions".into()))?;
    let (r, c) = positions[s];
    Ok(vec![r as f64, c as f64])
}

pub fn final_position(process: &DecisionProcess, path: &TruncatedPath) -> Result<BehaviorDescriptor> {
    let last = path.pairs().last().map(|p| p.0).ok_or(Error::Empty("path"))?;
    Ok(BehaviorDescriptor::FinalPosition {
        position: position_of(process, last)?,
    })
}

/// Positions at each of `times`; a time past the end of the path uses the
/// last state, as an absorbed agent stays put.
pub fn position_over_time(
    process: &DecisionProcess,
    path: &TruncatedPath,
    times: &[usize],
) -> Result<BehaviorDescriptor> {
    let pairs = path.pairs();
    if pairs.is_empty() {
        return Err(Error::Empty("path"));
    }
    let mut positions = Vec::with_capacity(2 * times.len());
    for &t in times {
        positions.extend(position_of(process, pairs[t.min(pairs.len() - 1)].0)?);
    }
    Ok(BehaviorDescriptor::PositionOverTime {
        times: times.to_vec(),
        positions,
    })
}

pub fn primitive(agent: &StochasticAgent, set: &WeightedStateSet) -> Result<BehaviorDescriptor> {
    let rows = set
        .states()
        .iter()
        .map(|&s| agent.row(s).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    Ok(BehaviorDescriptor::Primitive {
        set: set.clone(),
        rows,
    })
}

pub fn parameter_vector(agent: &StochasticAgent) -> Result<BehaviorDescriptor> {
    let theta = agent
        .theta()
        .ok_or_else(|| Error::InvalidAgent("parameter behavior needs a parameterized agent".into()))?;
    Ok(BehaviorDescriptor::ParameterVector {
        theta: theta.to_vec(),
    })
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// Squared Euclidean for positions, Euclidean for parameters, weighted
/// action distance for primitive behaviors.
pub fn descriptor_distance(
    x: &BehaviorDescriptor,
    y: &BehaviorDescriptor,
    metric: ActionMetric,
) -> Result<f64> {
    use BehaviorDescriptor::*;
    match (x, y) {
        (FinalPosition { position: a }, FinalPosition { position: b })
        | (PositionOverTime { positions: a, .. }, PositionOverTime { positions: b, .. }) => {
            same_len(a, b)?;
            Ok(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
        }
        (ParameterVector { theta: a }, ParameterVector { theta: b }) => {
            same_len(a, b)?;
            Ok(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        }
        (Primitive { set, rows: a }, Primitive { set: other, rows: b }) => {
            if set != other {
                return Err(Error::InvalidArgument("primitive behaviors on different state sets".into()));
            }
            Ok(set
                .iter()
                .zip(a.iter().zip(b))
                .map(|((_, w), (p, q))| w * metric.distance(p, q))
                .sum())
        }
        (AgentSpace, AgentSpace) => Err(Error::InvalidArgument(
            "agent-space behaviors are compared with agent_space_novelty".into(),
        )),
        _ => Err(Error::InvalidArgument(format!(
            "cannot compare {} with {} behavior",
            x.kind(),
            y.kind()
        ))),
    }
}

/// Mean of the `min(k, n)` smallest values; `+∞` when there are none.
pub fn knn_mean(mut distances: Vec<f64>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if distances.is_empty() {
        return Ok(f64::INFINITY);
    }
    distances.sort_by(f64::total_cmp);
    let m = k.min(distances.len());
    Ok(distances[..m].iter().sum::<f64>() / m as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub epoch: u64,
    pub descriptor: BehaviorDescriptor,
    pub agent: StochasticAgent,
}

/// Epoch-ordered behaviors seen so far. Every entry is kept.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoveltyArchive {
    entries: Vec<ArchiveEntry>,
}

impl NoveltyArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: ArchiveEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.epoch < last.epoch {
                return Err(Error::InvalidArgument(format!(
                    "archive entry for epoch {} after epoch {}",
                    entry.epoch, last.epoch
                )));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `N(β)`: mean distance from `query` to its `k` nearest archived behaviors.
pub fn novelty_score(
    query: &BehaviorDescriptor,
    archive: &NoveltyArchive,
    k: usize,
    dist: impl Fn(&BehaviorDescriptor, &BehaviorDescriptor) -> Result<f64>,
) -> Result<f64> {
    let distances = archive
        .entries()
        .iter()
        .map(|e| dist(query, &e.descriptor))
        .collect::<Result<Vec<_>>>()?;
    knn_mean(distances, k)
}

/// A multiset of states.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateSample {
    pub states: Vec<State>,
}

impl StateSample {
    pub fn new(states: Vec<State>) -> Self {
        Self { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Distinct states with their multiplicities, in state order.
    pub fn histogram(&self) -> Vec<(State, usize)> {
        let mut counts: Vec<(State, usize)> = Vec::new();
        let mut sorted = self.states.clone();
        sorted.sort_unstable();
        for s in sorted {
            match counts.last_mut() {
                Some((t, n)) if *t == s => *n += 1,
                _ => counts.push((s, 1)),
            }
        }
        counts
    }
}

fn check_zeta(zeta: &StateSample, n_states: usize) -> Result<()> {
    if zeta.is_empty() {
        return Err(Error::Empty("state sample ζ"));
    }
    if let Some(&s) = zeta.states.iter().find(|&&s| s >= n_states) {
        return Err(Error::StateOutOfRange { state: s, n_states });
    }
    Ok(())
}

/// `Ω·(1/|ζ|)·Σ_{s∈ζ} d_𝒜(b(s), c(s))` with its standard error.
pub fn zeta_distance(
    b: &StochasticAgent,
    c: &StochasticAgent,
    zeta: &StateSample,
    spec: &RewardSpec,
    metric: ActionMetric,
) -> Result<(f64, f64)> {
    b.check_shape(c)?;
    check_zeta(zeta, b.n_states())?;
    let mut stats = RunningStats::default();
    for &s in &zeta.states {
        stats.push(metric.distance(b.dist(s), c.dist(s)));
    }
    let omega = spec.omega();
    Ok((omega * stats.mean(), omega * stats.std_error()))
}

/// Novelty of `candidate` in the agent space: mean ζ-approximated local
/// distance to its `k` nearest archived agents (`k = 1` is the minimum).
pub fn agent_space_novelty(
    candidate: &StochasticAgent,
    archive: &NoveltyArchive,
    zeta: &StateSample,
    spec: &RewardSpec,
    metric: ActionMetric,
    k: usize,
) -> Result<f64> {
    check_zeta(zeta, candidate.n_states())?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let hist = zeta.histogram();
    let scale = spec.omega() / zeta.len() as f64;
    let distances = archive
        .entries()
        .iter()
        .map(|e| {
            candidate.check_shape(&e.agent)?;
            let sum: f64 = hist
                .iter()
                .map(|&(s, n)| n as f64 * metric.distance(candidate.dist(s), e.agent.dist(s)))
                .sum();
            Ok(scale * sum)
        })
        .collect::<Result<Vec<_>>>()?;
    knn_mean(distances, k)
}

/// `n` independent draws from the discounted occupancy of `agent`: roll
/// out for a geometric number of steps `P(T = t) = (1−γ)γ^t` and keep the
/// state reached.
pub fn sample_occupancy_states(
    process: &DecisionProcess,
    agent: &StochasticAgent,
    spec: &RewardSpec,
    n: usize,
    seed: u64,
) -> Result<StateSample> {
    if !process.is_strictly_markov() {
        return Err(Error::NotMarkov);
    }
    let geometric = Geometric::new(1.0 - spec.gamma)
        .map_err(|e| Error::InvalidArgument(format!("geometric horizon: {e}")))?;
    let states = (0..n)
        .map(|i| {
            let mut r = rng::rng_from(seed, &[i as u64]);
            let steps = geometric.sample(&mut r);
            let mut s = sample_index(process.initial(), &mut r);
            for _ in 0..steps {
                if process.is_terminal(s) {
                    break;
                }
                let a = sample_index(agent.dist(s), &mut r);
                s = sample_index(process.transition(s, a), &mut r);
            }
            s
        })
        .collect();
    Ok(StateSample { states })
}

/// How states are bucketed for counting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateHash {
    Identity,
    Modulo { buckets: u64 },
    /// Grid positions coarsened to `cell × cell` blocks.
    Grid { cell: usize },
}

/// Visit counts `n(H(s))` for the count-based bonus `κ/√n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CountTable {
    buckets: Vec<u64>,
    counts: HashMap<u64, u64>,
    pub kappa: f64,
}

impl CountTable {
    pub fn new(process: &DecisionProcess, hash: StateHash, kappa: f64) -> Result<Self> {
        let n = process.n_states();
        let buckets = match hash {
            StateHash::Identity => (0..n as u64).collect(),
            StateHash::Modulo { buckets: 0 } => {
                return Err(Error::InvalidArgument("hash needs at least one bucket".into()))
            }
            StateHash::Modulo { buckets } => (0..n as u64).map(|s| s % buckets).collect(),
            StateHash::Grid { cell: 0 } => {
                return Err(Error::InvalidArgument("grid cell must be positive".into()))
            }
            StateHash::Grid { cell } => {
                let positions = process.metadata().positions.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("grid hash needs a process with positions".into())
                })?;
                positions
                    .iter()
                    .map(|&(r, c)| (((r / cell) as u64) << 32) | (c / cell) as u64)
                    .collect()
            }
        };
        Ok(Self {
            buckets,
            counts: HashMap::new(),
            kappa,
        })
    }

    pub fn bucket(&self, s: State) -> u64 {
        self.buckets[s]
    }

    pub fn count(&self, s: State) -> u64 {
        self.counts.get(&self.bucket(s)).copied().unwrap_or(0)
    }

    pub fn record(&mut self, s: State) {
        *self.counts.entry(self.bucket(s)).or_insert(0) += 1;
    }

    /// The bonus this state would get if visited now, without counting it.
    pub fn peek_bonus(&self, s: State) -> f64 {
        self.kappa / ((self.count(s) + 1) as f64).sqrt()
    }
}

/// Counts the visit, then scores it: `κ/√n(H(s))`.
pub fn hash_bonus(state: State, table: &mut CountTable) -> f64 {
    table.record(state);
    table.kappa / (table.count(state) as f64).sqrt()
}

/// `κ·H(dist)` with natural logarithms.
pub fn entropy_bonus(dist: &[f64], kappa: f64) -> f64 {
    let h: f64 = dist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    kappa * h
}

/// Empirical next-state frequencies per `(s, 𝒶)`, predicting the mode.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsModel {
    n_states: usize,
    n_actions: usize,
    counts: Vec<u64>,
    pub decay: f64,
    pub kappa: f64,
}

impl DynamicsModel {
    pub fn new(n_states: usize, n_actions: usize, decay: f64, kappa: f64) -> Result<Self> {
        if !(decay > 0.0 && decay.is_finite()) {
            return Err(Error::InvalidArgument(format!("decay constant {decay} must be positive")));
        }
        Ok(Self {
            n_states,
            n_actions,
            counts: vec![0; n_states * n_actions * n_states],
            decay,
            kappa,
        })
    }

    fn slot(&self, s: State, a: usize) -> std::ops::Range<usize> {
        let base = (s * self.n_actions + a) * self.n_states;
        base..base + self.n_states
    }

    /// Most frequent observed successor; `None` before any observation.
    pub fn predict(&self, s: State, a: usize) -> Option<State> {
        let row = &self.counts[self.slot(s, a)];
        let mut best = None;
        for (next, &n) in row.iter().enumerate() {
            if n > 0 && best.is_none_or(|b: State| n > row[b]) {
                best = Some(next);
            }
        }
        best
    }

    pub fn observe(&mut self, s: State, a: usize, next: State) {
        let base = self.slot(s, a).start;
        self.counts[base + next] += 1;
    }

    /// The bonus for a transition without updating the model.
    pub fn peek_bonus(&self, s: State, a: usize, next: State, epoch: u64) -> f64 {
        let err = if self.predict(s, a) == Some(next) { 0.0 } else { 1.0 };
        self.kappa * err / (epoch as f64 * self.decay)
    }
}

/// `κ·err/(t·C)` with 0/1 prediction error; the model learns the
/// transition after scoring it.
pub fn dynamics_bonus(
    model: &mut DynamicsModel,
    s: State,
    a: usize,
    next: State,
    epoch: u64,
) -> Result<f64> {
    if epoch < 1 {
        return Err(Error::InvalidArgument("dynamics bonus epochs start at 1".into()));
    }
    let bonus = model.peek_bonus(s, a, next, epoch);
    model.observe(s, a, next);
    Ok(bonus)
}

/// Exploration bonus added to the reward during rollouts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BonusConfig {
    Hash { kappa: f64, hash: StateHash },
    Entropy { kappa: f64 },
    Dynamics { kappa: f64, decay: f64 },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maze::{build_maze, MazeSpec};
    use crate::oracle::exact_local_distance;
    use crate::process::two_chamber;
    use approx::assert_relative_eq;

    fn point(x: f64) -> BehaviorDescriptor {
        BehaviorDescriptor::ParameterVector { theta: vec![x] }
    }

    fn archive_of(ds: &[BehaviorDescriptor]) -> NoveltyArchive {
        let mut a = NoveltyArchive::new();
        for (i, d) in ds.iter().enumerate() {
            a.push(ArchiveEntry {
                epoch: i as u64,
                descriptor: d.clone(),
                agent: StochasticAgent::uniform(1, 1),
            })
            .unwrap();
        }
        a
    }

    fn dist(x: &BehaviorDescriptor, y: &BehaviorDescriptor) -> Result<f64> {
        descriptor_distance(x, y, ActionMetric::TotalVariation)
    }

    #[test]
    fn novelty_examples() {
        let archive = archive_of(&[point(0.0), point(10.0)]);
        assert_eq!(novelty_score(&point(0.0), &archive, 1, dist).unwrap(), 0.0);
        assert_eq!(novelty_score(&point(4.0), &archive, 2, dist).unwrap(), 5.0);
        // k past the archive size averages over everything.
        assert_eq!(
            novelty_score(&point(4.0), &archive, 7, dist).unwrap(),
            novelty_score(&point(4.0), &archive, 2, dist).unwrap()
        );
        assert_eq!(novelty_score(&point(4.0), &NoveltyArchive::new(), 1, dist).unwrap(), f64::INFINITY);
        assert!(novelty_score(&point(4.0), &archive, 0, dist).is_err());
    }

    #[test]
    fn novelty_is_permutation_invariant_and_shrinks_with_entries() {
        let pts = [3.0, -1.0, 7.5, 2.0];
        let a = archive_of(&pts.map(point));
        let b = archive_of(&[7.5, 2.0, -1.0, 3.0].map(point));
        for k in 1..=4 {
            let x = novelty_score(&point(1.0), &a, k, dist).unwrap();
            assert_eq!(x, novelty_score(&point(1.0), &b, k, dist).unwrap());
            let mut c = a.clone();
            c.push(ArchiveEntry {
                epoch: 9,
                descriptor: point(1.0),
                agent: StochasticAgent::uniform(1, 1),
            })
            .unwrap();
            assert!(novelty_score(&point(1.0), &c, k, dist).unwrap() <= x);
        }
    }

    #[test]
    fn positional_behaviors_use_squared_distance() {
        let p = build_maze(&MazeSpec::new(&["S..", "..G"])).unwrap();
        let path = TruncatedPath::new(vec![(0, 2), (1, 2), (2, 1), (5, 0)]).unwrap();
        let f = final_position(&p, &path).unwrap();
        assert_eq!(f, BehaviorDescriptor::FinalPosition { position: vec![1.0, 2.0] });
        let start = BehaviorDescriptor::FinalPosition { position: vec![0.0, 0.0] };
        assert_eq!(dist(&f, &start).unwrap(), 5.0);
        let over = position_over_time(&p, &path, &[0, 1, 10]).unwrap();
        let BehaviorDescriptor::PositionOverTime { positions, .. } = &over else { panic!() };
        assert_eq!(positions, &vec![0.0, 0.0, 0.0, 1.0, 1.0, 2.0]);
        assert!(dist(&f, &over).is_err());
    }

    #[test]
    fn primitive_behaviors_weight_action_distances() {
        let a = StochasticAgent::deterministic(&[0, 0], 2).unwrap();
        let b = StochasticAgent::deterministic(&[1, 0], 2).unwrap();
        let set = WeightedStateSet::new(vec![0, 1], vec![0.25, 4.0]).unwrap();
        let x = primitive(&a, &set).unwrap();
        let y = primitive(&b, &set).unwrap();
        assert_eq!(dist(&x, &y).unwrap(), 0.25);
    }

    fn locus_archive(agents: &[StochasticAgent]) -> NoveltyArchive {
        let mut a = NoveltyArchive::new();
        for (i, agent) in agents.iter().enumerate() {
            a.push(ArchiveEntry {
                epoch: i as u64,
                descriptor: BehaviorDescriptor::AgentSpace,
                agent: agent.clone(),
            })
            .unwrap();
        }
        a
    }

    #[test]
    fn agent_space_novelty_examples() {
        let spec = RewardSpec::new(0.5).unwrap();
        let tv = ActionMetric::TotalVariation;
        let stay = StochasticAgent::deterministic(&[0, 0], 2).unwrap();
        let switch = StochasticAgent::deterministic(&[1, 1], 2).unwrap();
        let half = StochasticAgent::mixture(&stay, &switch, 0.5).unwrap();
        let zeta = StateSample::new(vec![0]);
        let only_stay = locus_archive(&[stay.clone()]);
        assert_eq!(agent_space_novelty(&stay, &only_stay, &zeta, &spec, tv, 1).unwrap(), 0.0);
        assert_eq!(agent_space_novelty(&switch, &only_stay, &zeta, &spec, tv, 1).unwrap(), 2.0);
        let both = locus_archive(&[stay, switch]);
        assert_eq!(agent_space_novelty(&half, &both, &zeta, &spec, tv, 1).unwrap(), 1.0);
        assert!(agent_space_novelty(&half, &both, &StateSample::default(), &spec, tv, 1).is_err());
        assert_eq!(
            agent_space_novelty(&half, &NoveltyArchive::new(), &zeta, &spec, tv, 1).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn zeta_estimate_converges_to_local_distance() {
        let spec = RewardSpec::new(0.9).unwrap();
        let tv = ActionMetric::TotalVariation;
        let cases: Vec<(DecisionProcess, usize)> = vec![
            (two_chamber(), 2),
            (build_maze(&MazeSpec::new(&["S..", ".#.", "..G"])).unwrap(), 4),
        ];
        for (i, (process, n_a)) in cases.into_iter().enumerate() {
            let n_s = process.n_states();
            let mut r = rng::rng(40 + i as u64);
            let [v, b, c] = [0.0, 0.1, 0.4].map(|z| crate::verify::random_agent(&mut r, n_s, n_a, z));
            let exact = exact_local_distance(&v, &b, &c, &process, &spec, tv, 1e-12).unwrap().value;
            let mut last_gap = f64::INFINITY;
            for n in [100, 10_000, 100_000] {
                let zeta = sample_occupancy_states(&process, &v, &spec, n, 7).unwrap();
                let (est, se) = zeta_distance(&b, &c, &zeta, &spec, tv).unwrap();
                assert!((est - exact).abs() <= 3.0 * se + 1e-12, "n={n}: {est} vs {exact} (se {se})");
                last_gap = (est - exact).abs();
            }
            assert!(last_gap < 0.05 * exact.max(0.1));
        }
    }

    #[test]
    fn hash_bonus_telescopes() {
        let p = two_chamber();
        let mut table = CountTable::new(&p, StateHash::Identity, 1.0).unwrap();
        assert_eq!(hash_bonus(0, &mut table), 1.0);
        hash_bonus(0, &mut table);
        hash_bonus(0, &mut table);
        assert_eq!(hash_bonus(0, &mut table), 0.5);
        let mut table = CountTable::new(&p, StateHash::Modulo { buckets: 1 }, 0.3).unwrap();
        let total: f64 = (0..25).map(|i| hash_bonus(i % 2, &mut table)).sum();
        let expected: f64 = (1..=25).map(|i| 0.3 / (i as f64).sqrt()).sum();
        assert_relative_eq!(total, expected, epsilon = 1e-12);
        let mut zero = CountTable::new(&p, StateHash::Identity, 0.0).unwrap();
        assert_eq!(hash_bonus(1, &mut zero), 0.0);
        assert!(CountTable::new(&p, StateHash::Grid { cell: 2 }, 1.0).is_err());
    }

    #[test]
    fn grid_hash_merges_neighbouring_cells() {
        let p = build_maze(&MazeSpec::new(&["S...", "...G"])).unwrap();
        let t = CountTable::new(&p, StateHash::Grid { cell: 2 }, 1.0).unwrap();
        assert_eq!(t.bucket(0), t.bucket(5));
        assert_ne!(t.bucket(0), t.bucket(2));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_bonus(&[0.0, 1.0], 1.0), 0.0);
        assert_relative_eq!(entropy_bonus(&[0.5, 0.5], 1.0), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(entropy_bonus(&[0.25; 4], 1.0), 4f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn dynamics_examples() {
        let mut m = DynamicsModel::new(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(dynamics_bonus(&mut m, 0, 1, 1, 1).unwrap(), 1.0);
        assert_eq!(dynamics_bonus(&mut m, 0, 1, 1, 1).unwrap(), 0.0);
        assert_eq!(m.peek_bonus(0, 1, 0, 10), 0.1);
        assert!(dynamics_bonus(&mut m, 0, 1, 1, 0).is_err());
        assert!(DynamicsModel::new(2, 2, 0.0, 1.0).is_err());
    }

    #[test]
    fn archive_round_trips_and_stays_ordered() {
        let stay = StochasticAgent::deterministic(&[0, 0], 2).unwrap();
        let mut a = locus_archive(&[stay.clone(), StochasticAgent::uniform(2, 2)]);
        let text = serde_json::to_string(&a).unwrap();
        assert!(text.starts_with('['));
        assert_eq!(serde_json::from_str::<NoveltyArchive>(&text).unwrap(), a);
        let late = ArchiveEntry {
            epoch: 0,
            descriptor: BehaviorDescriptor::AgentSpace,
            agent: stay,
        };
        assert!(a.push(late).is_err());
    }
}
