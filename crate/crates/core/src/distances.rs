//! The distance hierarchy between agents: per-state action distance,
//! weighted state-set distance, distances along a single path, and the
//! local distance `d_a` taken in expectation over the paths of a vantage
//! agent `a`.

use serde::{Deserialize, Serialize};

use crate::agents::{Policy, StochasticAgent};
use crate::error::{Error, Result};
use crate::oracle;
use crate::process::{sample_path, DecisionProcess, RewardSpec, State, TruncatedPath};
use crate::rng::derive_seed;

/// Metric on action distributions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMetric {
    /// Half the L1 distance.
    #[default]
    TotalVariation,
    /// 0 for identical distributions, 1 otherwise.
    Discrete01,
    /// Euclidean distance between probability vectors.
    EuclideanOnSimplex,
}

impl ActionMetric {
    pub fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        debug_assert_eq!(p.len(), q.len());
        match self {
            ActionMetric::TotalVariation => total_variation(p, q),
            ActionMetric::Discrete01 => {
                if p == q {
                    0.0
                } else {
                    1.0
                }
            }
            ActionMetric::EuclideanOnSimplex => p
                .iter()
                .zip(q)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// `A_max`, the supremum of the metric over pairs of distributions.
    pub fn bound(&self) -> f64 {
        match self {
            ActionMetric::TotalVariation | ActionMetric::Discrete01 => 1.0,
            ActionMetric::EuclideanOnSimplex => std::f64::consts::SQRT_2,
        }
    }
}

/// `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// A state subset `X` with nonnegative weights `w_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedStateSet {
    states: Vec<State>,
    weights: Vec<f64>,
}

impl WeightedStateSet {
    pub fn new(states: Vec<State>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("weighted state set"));
        }
        if states.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                actual: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidArgument(format!("state weight {w}")));
        }
        Ok(Self { states, weights })
    }

    /// Unit weights on every listed state.
    pub fn uniform(states: Vec<State>) -> Result<Self> {
        let weights = vec![1.0; states.len()];
        Self::new(states, weights)
    }

    pub fn iter(&self) -> impl Iterator<Item = (State, f64)> + '_ {
        self.states.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimateMethod {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDistanceEstimate {
    pub value: f64,
    /// 0 for exact evaluation.
    pub std_error: f64,
    pub horizon: usize,
    /// `A_max·γ^{T+1}/(1−γ)`.
    pub tail_bound: f64,
    pub method: EstimateMethod,
}

/// `d_𝒜(a(s), b(s))`.
pub fn d_state(
    a: &StochasticAgent,
    b: &StochasticAgent,
    s: State,
    metric: ActionMetric,
) -> Result<f64> {
    Ok(metric.distance(a.row(s)?, b.row(s)?))
}

/// `Σ_{s∈X} w_s d_𝒜(a(s), b(s))`.
pub fn d_set(
    a: &StochasticAgent,
    b: &StochasticAgent,
    wset: &WeightedStateSet,
    metric: ActionMetric,
) -> Result<f64> {
    wset.iter()
        .map(|(s, w)| Ok(w * d_state(a, b, s, metric)?))
        .sum()
}

fn step_distances<P, Q>(a: &P, b: &Q, path: &TruncatedPath, metric: ActionMetric) -> Result<Vec<f64>>
where
    P: Policy + ?Sized,
    Q: Policy + ?Sized,
{
    path.pairs()
        .iter()
        .enumerate()
        .map(|(i, &(s, _))| match (a.markov_row(s), b.markov_row(s)) {
            (Some(x), Some(y)) => Ok(metric.distance(x, y)),
            _ => {
                let prime = path.prime_at(i);
                Ok(metric.distance(&a.act(&prime)?, &b.act(&prime)?))
            }
        })
        .collect()
}

/// Unweighted sum of action distances at each prime path along `path`.
pub fn d_truncated_path<P, Q>(a: &P, b: &Q, path: &TruncatedPath, metric: ActionMetric) -> Result<f64>
where
    P: Policy + ?Sized,
    Q: Policy + ?Sized,
{
    Ok(step_distances(a, b, path, metric)?.into_iter().sum())
}

/// Distance along a path with an explicit time weighting `ω(t)`.
pub fn d_path_weighted<P, Q>(
    a: &P,
    b: &Q,
    path: &TruncatedPath,
    omega: impl Fn(usize) -> f64,
    metric: ActionMetric,
) -> Result<f64>
where
    P: Policy + ?Sized,
    Q: Policy + ?Sized,
{
    Ok(step_distances(a, b, path, metric)?
        .into_iter()
        .enumerate()
        .map(|(t, d)| omega(t) * d)
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathDistance {
    pub value: f64,
    pub tail_bound: f64,
}

/// `Σ_{t≤T} γ^t d_{φ_t}`, with the bound on the part past the truncation.
pub fn d_path<P, Q>(
    a: &P,
    b: &Q,
    path: &TruncatedPath,
    spec: &RewardSpec,
    metric: ActionMetric,
) -> Result<PathDistance>
where
    P: Policy + ?Sized,
    Q: Policy + ?Sized,
{
    let value = d_path_weighted(a, b, path, |t| spec.discount(t), metric)?;
    Ok(PathDistance {
        value,
        tail_bound: spec.tail_bound(metric.bound(), path.horizon()),
    })
}

/// Smallest horizon with `A_max·γ^{T+1}/(1−γ) < tol/2`.
pub fn mc_horizon(spec: &RewardSpec, metric: ActionMetric, tol: f64) -> usize {
    spec.horizon_for(metric.bound(), tol / 2.0)
}

/// Streaming mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise merge.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (denominator `n − 1`).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Monte Carlo `d_vantage(b, c)`: mean of `d_path(b, c, φ)` over `samples`
/// paths `φ` of the vantage agent, each truncated at `horizon`.
///
/// Paths are sampled in parallel from seeds derived from `(seed, i)` and
/// reduced in index order, so the result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn local_distance_mc<V, B, C>(
    vantage: &V,
    b: &B,
    c: &C,
    process: &DecisionProcess,
    spec: &RewardSpec,
    metric: ActionMetric,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<LocalDistanceEstimate>
where
    V: Policy + Sync + ?Sized,
    B: Policy + Sync + ?Sized,
    C: Policy + Sync + ?Sized,
{
    use rayon::prelude::*;
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(process, vantage, horizon, derive_seed(seed, &[i as u64]))?;
            Ok(d_path(b, c, &path, spec, metric)?.value)
        })
        .collect::<Result<_>>()?;
    let mut stats = RunningStats::default();
    values.iter().for_each(|&v| stats.push(v));
    Ok(LocalDistanceEstimate {
        value: stats.mean(),
        std_error: stats.std_error(),
        horizon,
        tail_bound: spec.tail_bound(metric.bound(), horizon),
        method: EstimateMethod::MonteCarlo { samples },
    })
}

/// How to evaluate a local distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum DistanceConfig {
    Exact { tol: f64 },
    MonteCarlo { samples: usize, tol: f64, seed: u64 },
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig::Exact { tol: 1e-10 }
    }
}

/// `d_vantage(b, c)` by the configured method.
pub fn local_distance(
    vantage: &StochasticAgent,
    b: &StochasticAgent,
    c: &StochasticAgent,
    process: &DecisionProcess,
    spec: &RewardSpec,
    metric: ActionMetric,
    config: DistanceConfig,
) -> Result<LocalDistanceEstimate> {
    match config {
        DistanceConfig::Exact { tol } => {
            oracle::exact_local_distance(vantage, b, c, process, spec, metric, tol)
        }
        DistanceConfig::MonteCarlo { samples, tol, seed } => {
            let horizon = mc_horizon(spec, metric, tol);
            local_distance_mc(vantage, b, c, process, spec, metric, horizon, samples, seed)
        }
    }
}

/// The premetric `D(b, c) = d_b(b, c)`: the vantage is the first argument.
pub fn premetric(
    b: &StochasticAgent,
    c: &StochasticAgent,
    process: &DecisionProcess,
    spec: &RewardSpec,
    metric: ActionMetric,
    config: DistanceConfig,
) -> Result<LocalDistanceEstimate> {
    local_distance(b, b, c, process, spec, metric, config)
}
