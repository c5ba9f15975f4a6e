//! Agents and output functions.
//!
//! An agent maps prime paths to action distributions. Every agent built
//! here is strictly Markov: it looks only at the terminal state of the
//! prime path. Parameterized agents use a one-hot state encoding as the
//! input function, a per-state logit table as the approximator, and one of
//! the [`OutputFunction`] variants to turn logits into a distribution.

use serde::{Deserialize, Serialize};

use crate::distances::ActionMetric;
use crate::error::{Error, Result};
use crate::process::{check_distribution, PrimePath, State, PROB_TOL};

/// Anything that produces an action distribution for a prime path.
pub trait Policy {
    fn n_actions(&self) -> usize;

    /// The full distribution `a(φ'_t)`, not a sample.
    fn act(&self, prime: &PrimePath) -> Result<Vec<f64>>;

    /// Direct row access for strictly Markov agents.
    fn markov_row(&self, _state: State) -> Option<&[f64]> {
        None
    }
}

/// Maps approximator outputs to an action distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OutputFunction {
    /// Point mass on the largest output; ties go to the lowest index.
    Greedy,
    /// `(1 − ε)·greedy + ε·uniform`.
    EpsilonGreedy { epsilon: f64 },
    /// Outputs are already a distribution and are used as-is.
    Thompson,
    /// Softmax of `κ · outputs`.
    Boltzmann { kappa: f64 },
}

impl OutputFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OutputFunction::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => Err(
                Error::InvalidAgent(format!("epsilon {epsilon} outside [0, 1]")),
            ),
            OutputFunction::Boltzmann { kappa } if !kappa.is_finite() => {
                Err(Error::InvalidAgent(format!("kappa {kappa} is not finite")))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, outputs: &[f64]) -> Result<Vec<f64>> {
        if outputs.is_empty() {
            return Err(Error::Empty("approximator output"));
        }
        match *self {
            OutputFunction::Greedy => Ok(greedy(outputs)),
            OutputFunction::EpsilonGreedy { epsilon } => {
                let n = outputs.len() as f64;
                Ok(greedy(outputs)
                    .into_iter()
                    .map(|g| (1.0 - epsilon) * g + epsilon / n)
                    .collect())
            }
            OutputFunction::Thompson => {
                check_distribution(outputs, PROB_TOL).map_err(|e| {
                    Error::InvalidAgent(format!("thompson output not on the simplex: {e}"))
                })?;
                Ok(outputs.to_vec())
            }
            OutputFunction::Boltzmann { kappa } => Ok(softmax_output(outputs, kappa)),
        }
    }
}

fn greedy(outputs: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (i, &x) in outputs.iter().enumerate() {
        if x > outputs[best] {
            best = i;
        }
    }
    let mut dist = vec![0.0; outputs.len()];
    dist[best] = 1.0;
    dist
}

/// `softmax(κ·x)`, stabilized by subtracting the maximum exponent.
pub fn softmax_output(logits: &[f64], kappa: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|&x| x * kappa).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum AgentRepr {
    Tabular,
    Parameterized {
        theta: Vec<f64>,
        output: OutputFunction,
    },
}

/// A strictly Markov stochastic agent over a finite state set.
///
/// The action distribution of every state is materialized at
/// construction, so evaluation is a table lookup for both kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AgentFile", into = "AgentFile")]
pub struct StochasticAgent {
    n_states: usize,
    n_actions: usize,
    repr: AgentRepr,
    table: Vec<f64>,
}

impl StochasticAgent {
    pub fn tabular(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        if n_states == 0 {
            return Err(Error::Empty("agent table"));
        }
        let n_actions = rows[0].len();
        let mut table = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch {
                    expected: n_actions,
                    actual: row.len(),
                });
            }
            check_distribution(row, PROB_TOL)
                .map_err(|e| Error::InvalidAgent(format!("row {s}: {e}")))?;
            table.extend_from_slice(row);
        }
        Ok(Self {
            n_states,
            n_actions,
            repr: AgentRepr::Tabular,
            table,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let row = vec![1.0 / n_actions as f64; n_actions];
        Self::tabular(vec![row; n_states]).expect("uniform rows are valid")
    }

    /// Point mass on `actions[s]` in each state.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let rows = actions
            .iter()
            .map(|&a| {
                if a >= n_actions {
                    return Err(Error::InvalidAgent(format!("action {a} out of range")));
                }
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::tabular(rows)
    }

    /// Per-state mixture `(1 − p)·base + p·other`, as a tabular agent.
    pub fn mixture(base: &Self, other: &Self, p: f64) -> Result<Self> {
        base.check_shape(other)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("mixing weight {p} outside [0, 1]")));
        }
        let table: Vec<f64> = base
            .table
            .iter()
            .zip(&other.table)
            .map(|(&x, &y)| (1.0 - p) * x + p * y)
            .collect();
        Ok(Self {
            n_states: base.n_states,
            n_actions: base.n_actions,
            repr: AgentRepr::Tabular,
            table,
        })
    }

    /// A parameterized agent: `θ` holds one logit row per state.
    pub fn parameterized(
        n_states: usize,
        n_actions: usize,
        theta: Vec<f64>,
        output: OutputFunction,
    ) -> Result<Self> {
        if theta.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                expected: n_states * n_actions,
                actual: theta.len(),
            });
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidAgent("non-finite parameter".into()));
        }
        output.validate()?;
        let mut table = Vec::with_capacity(theta.len());
        for s in 0..n_states {
            let dist = output.apply(&theta[s * n_actions..(s + 1) * n_actions])?;
            table.extend(dist);
        }
        Ok(Self {
            n_states,
            n_actions,
            repr: AgentRepr::Parameterized { theta, output },
            table,
        })
    }

    /// Boltzmann-output agent with temperature coefficient `kappa`.
    pub fn softmax(n_states: usize, n_actions: usize, theta: Vec<f64>, kappa: f64) -> Result<Self> {
        Self::parameterized(n_states, n_actions, theta, OutputFunction::Boltzmann { kappa })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn repr(&self) -> &AgentRepr {
        &self.repr
    }

    pub fn theta(&self) -> Option<&[f64]> {
        match &self.repr {
            AgentRepr::Parameterized { theta, .. } => Some(theta),
            AgentRepr::Tabular => None,
        }
    }

    pub fn output_function(&self) -> Option<OutputFunction> {
        match &self.repr {
            AgentRepr::Parameterized { output, .. } => Some(*output),
            AgentRepr::Tabular => None,
        }
    }

    /// Distribution at `state`. Panics when the state is out of range.
    pub fn dist(&self, state: State) -> &[f64] {
        &self.table[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn row(&self, state: State) -> Result<&[f64]> {
        if state >= self.n_states {
            return Err(Error::StateOutOfRange {
                state,
                n_states: self.n_states,
            });
        }
        Ok(self.dist(state))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.table.chunks(self.n_actions).map(<[f64]>::to_vec).collect()
    }

    /// Tabular copy with the row at `state` replaced.
    pub fn with_row(&self, state: State, row: Vec<f64>) -> Result<Self> {
        let mut rows = self.rows();
        if state >= rows.len() {
            return Err(Error::StateOutOfRange {
                state,
                n_states: self.n_states,
            });
        }
        rows[state] = row;
        Self::tabular(rows)
    }

    /// `θ' = θ + scale·noise`; the original is untouched.
    pub fn perturb(&self, noise: &[f64], scale: f64) -> Result<Self> {
        let AgentRepr::Parameterized { theta, output } = &self.repr else {
            return Err(Error::InvalidAgent("perturb needs a parameterized agent".into()));
        };
        if noise.len() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                actual: noise.len(),
            });
        }
        let theta = theta.iter().zip(noise).map(|(t, n)| t + scale * n).collect();
        Self::parameterized(self.n_states, self.n_actions, theta, *output)
    }

    pub fn is_deterministic(&self) -> bool {
        self.table.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    pub(crate) fn check_shape(&self, other: &Self) -> Result<()> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::InvalidArgument(format!(
                "agent shapes differ: {}x{} vs {}x{}",
                self.n_states, self.n_actions, other.n_states, other.n_actions
            )));
        }
        Ok(())
    }
}

impl Policy for StochasticAgent {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn act(&self, prime: &PrimePath) -> Result<Vec<f64>> {
        self.row(prime.terminal).map(<[f64]>::to_vec)
    }

    fn markov_row(&self, state: State) -> Option<&[f64]> {
        (state < self.n_states).then(|| self.dist(state))
    }
}

/// `max_{φ' ∈ probes} d_𝒜(f(φ'), g(φ'))`, a lower bound on the `L∞`
/// distance that is exact when the probes cover every state.
pub fn agent_linf_distance<F, G>(
    f: &F,
    g: &G,
    probes: &[PrimePath],
    metric: ActionMetric,
) -> Result<f64>
where
    F: Policy + ?Sized,
    G: Policy + ?Sized,
{
    if probes.is_empty() {
        return Err(Error::Empty("probe set"));
    }
    let mut worst = 0.0f64;
    for probe in probes {
        let d = metric.distance(&f.act(probe)?, &g.act(probe)?);
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Every state as a length-0 prime path.
pub fn state_probes(n_states: usize) -> Vec<PrimePath> {
    (0..n_states).map(PrimePath::initial).collect()
}

pub const AGENT_FORMAT_VERSION: u32 = 1;

/// On-disk agent layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub version: u32,
    pub kind: AgentKind,
    pub n_states: usize,
    pub n_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_fn: Option<OutputFunction>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Tabular,
    Parameterized,
}

impl From<StochasticAgent> for AgentFile {
    fn from(agent: StochasticAgent) -> Self {
        let (kind, table, theta, output_fn) = match &agent.repr {
            AgentRepr::Tabular => (AgentKind::Tabular, Some(agent.rows()), None, None),
            AgentRepr::Parameterized { theta, output } => {
                (AgentKind::Parameterized, None, Some(theta.clone()), Some(*output))
            }
        };
        AgentFile {
            version: AGENT_FORMAT_VERSION,
            kind,
            n_states: agent.n_states,
            n_actions: agent.n_actions,
            table,
            theta,
            output_fn,
        }
    }
}

impl TryFrom<AgentFile> for StochasticAgent {
    type Error = Error;

    fn try_from(file: AgentFile) -> Result<Self> {
        if file.version != AGENT_FORMAT_VERSION {
            return Err(Error::InvalidAgent(format!(
                "unsupported agent format version {}",
                file.version
            )));
        }
        let agent = match file.kind {
            AgentKind::Tabular => {
                let table = file
                    .table
                    .ok_or_else(|| Error::InvalidAgent("tabular agent without table".into()))?;
                Self::tabular(table)?
            }
            AgentKind::Parameterized => {
                let theta = file
                    .theta
                    .ok_or_else(|| Error::InvalidAgent("parameterized agent without theta".into()))?;
                let output = file
                    .output_fn
                    .ok_or_else(|| Error::InvalidAgent("parameterized agent without output_fn".into()))?;
                Self::parameterized(file.n_states, file.n_actions, theta, output)?
            }
        };
        if agent.n_states != file.n_states || agent.n_actions != file.n_actions {
            return Err(Error::InvalidAgent(format!(
                "declared shape {}x{} does not match contents {}x{}",
                file.n_states, file.n_actions, agent.n_states, agent.n_actions
            )));
        }
        Ok(agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_abs_diff_eq!(*x, *y, epsilon = tol);
        }
    }

    #[test]
    fn tabular_lookup() {
        let agent = StochasticAgent::tabular(vec![vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        assert_eq!(agent.act(&PrimePath::initial(0)).unwrap(), vec![0.3, 0.7]);
        // Strictly Markov: history is ignored.
        let long = PrimePath::initial(1).extend(0, 1).extend(1, 0);
        assert_eq!(agent.act(&long).unwrap(), vec![0.3, 0.7]);
        assert!(matches!(
            agent.act(&PrimePath::initial(5)),
            Err(Error::StateOutOfRange { .. })
        ));
    }

    #[test]
    fn epsilon_greedy_mixes_with_uniform() {
        let out = OutputFunction::EpsilonGreedy { epsilon: 0.5 };
        close(&out.apply(&[0.0, 1.0]).unwrap(), &[0.25, 0.75], 1e-15);
        let zero = OutputFunction::EpsilonGreedy { epsilon: 0.0 };
        assert_eq!(zero.apply(&[3.0, 1.0, 2.0]).unwrap(), OutputFunction::Greedy.apply(&[3.0, 1.0, 2.0]).unwrap());
        let one = OutputFunction::EpsilonGreedy { epsilon: 1.0 };
        close(&one.apply(&[3.0, 1.0, 2.0]).unwrap(), &[1.0 / 3.0; 3], 1e-15);
        assert!(OutputFunction::EpsilonGreedy { epsilon: 1.5 }.validate().is_err());
    }

    #[test]
    fn greedy_ties_go_low() {
        assert_eq!(OutputFunction::Greedy.apply(&[1.0, 2.0, 2.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(OutputFunction::Greedy.apply(&[5.0, 5.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn softmax_values() {
        close(&softmax_output(&[0.0, 0.0], 1.0), &[0.5, 0.5], 1e-15);
        close(&softmax_output(&[1.0, 1.0, 1.0], 7.0), &[1.0 / 3.0; 3], 1e-15);
        close(&softmax_output(&[2f64.ln(), 0.0], 1.0), &[2.0 / 3.0, 1.0 / 3.0], 1e-15);
        close(&softmax_output(&[4.0, -3.0], 0.0), &[0.5, 0.5], 1e-15);
        let big = softmax_output(&[1e6, 0.0], 1.0);
        assert!(big.iter().all(|p| p.is_finite()));
        assert!(big[1] >= 0.0);
    }

    #[test]
    fn thompson_rejects_unnormalized() {
        assert!(OutputFunction::Thompson.apply(&[0.5, 0.7]).is_err());
        assert_eq!(OutputFunction::Thompson.apply(&[0.25, 0.75]).unwrap(), vec![0.25, 0.75]);
        assert!(StochasticAgent::parameterized(1, 2, vec![2.0, -1.0], OutputFunction::Thompson).is_err());
    }

    #[test]
    fn perturb_arithmetic() {
        let agent = StochasticAgent::softmax(1, 2, vec![1.0, 2.0], 1.0).unwrap();
        let same = agent.perturb(&[5.0, 5.0], 0.0).unwrap();
        assert_eq!(same.theta().unwrap(), &[1.0, 2.0]);
        let moved = agent.perturb(&[1.0, -1.0], 0.1).unwrap();
        close(moved.theta().unwrap(), &[1.1, 1.9], 1e-15);
        assert_eq!(agent.theta().unwrap(), &[1.0, 2.0]);
        assert!(matches!(
            agent.perturb(&[1.0], 1.0),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
        let tab = StochasticAgent::uniform(1, 2);
        assert!(tab.perturb(&[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn perturbation_is_continuous() {
        let agent = StochasticAgent::softmax(3, 2, vec![0.3, -0.2, 1.0, 0.0, -1.0, 2.0], 1.0).unwrap();
        let noise = [1.0, -2.0, 0.5, 0.3, -0.7, 1.1];
        let probes = state_probes(3);
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let scale = 0.5f64.powi(k);
            let d = agent_linf_distance(
                &agent,
                &agent.perturb(&noise, scale).unwrap(),
                &probes,
                ActionMetric::TotalVariation,
            )
            .unwrap();
            assert!(d <= prev + 1e-15);
            prev = d;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn linf_distance_cases() {
        let f = StochasticAgent::tabular(vec![vec![0.5, 0.5], vec![0.1, 0.9]]).unwrap();
        let g = f.with_row(1, vec![0.5, 0.5]).unwrap();
        let probes = state_probes(2);
        assert_eq!(agent_linf_distance(&f, &f, &probes, ActionMetric::TotalVariation).unwrap(), 0.0);
        let d = agent_linf_distance(&f, &g, &probes, ActionMetric::TotalVariation).unwrap();
        assert_abs_diff_eq!(d, 0.4, epsilon = 1e-15);
        // Probing only s0 misses the difference.
        let partial = agent_linf_distance(&f, &g, &probes[..1], ActionMetric::TotalVariation).unwrap();
        assert_eq!(partial, 0.0);
        assert!(agent_linf_distance(&f, &g, &[], ActionMetric::TotalVariation).is_err());
    }

    #[test]
    fn serde_round_trip_is_bit_exact() {
        let agents = [
            StochasticAgent::tabular(vec![vec![0.1, 0.2, 0.7], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]).unwrap(),
            StochasticAgent::softmax(2, 3, vec![0.1, -2.5e-7, 3.0, 1e10, -0.0, 0.7], 1.3).unwrap(),
            StochasticAgent::parameterized(1, 2, vec![0.0, 1.0], OutputFunction::EpsilonGreedy { epsilon: 0.1 }).unwrap(),
        ];
        for agent in agents {
            let text = serde_json::to_string(&agent).unwrap();
            let back: StochasticAgent = serde_json::from_str(&text).unwrap();
            assert_eq!(back, agent);
            assert_eq!(serde_json::to_string(&back).unwrap(), text);
        }
    }

    #[test]
    fn agent_file_rejects_bad_versions_and_fields() {
        let bad = r#"{"version":2,"kind":"tabular","n_states":1,"n_actions":1,"table":[[1.0]]}"#;
        assert!(serde_json::from_str::<StochasticAgent>(bad).is_err());
        let unknown = r#"{"version":1,"kind":"tabular","n_states":1,"n_actions":1,"table":[[1.0]],"x":1}"#;
        assert!(serde_json::from_str::<StochasticAgent>(unknown).is_err());
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(logits in prop::collection::vec(-20.0f64..20.0, 1..6), shift in -50.0f64..50.0, kappa in -3.0f64..3.0) {
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let a = softmax_output(&logits, kappa);
            let b = softmax_output(&shifted, kappa);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert!(check_distribution(&a, PROB_TOL).is_ok());
            prop_assert!(a.iter().all(|&p| p > 0.0));
        }

        #[test]
        fn perturb_then_negate_restores(theta in prop::collection::vec(-1.0f64..1.0, 4), noise in prop::collection::vec(-1.0f64..1.0, 4), scale in 0.0f64..1.0) {
            let agent = StochasticAgent::softmax(2, 2, theta.clone(), 1.0).unwrap();
            let neg: Vec<f64> = noise.iter().map(|x| -x).collect();
            let back = agent.perturb(&noise, scale).unwrap().perturb(&neg, scale).unwrap();
            for (x, y) in back.theta().unwrap().iter().zip(&theta) {
                prop_assert!((x - y).abs() <= 1e-15);
            }
        }

        #[test]
        fn every_output_function_emits_distributions(outputs in prop::collection::vec(-5.0f64..5.0, 1..5), eps in 0.0f64..=1.0, kappa in -4.0f64..4.0) {
            for f in [OutputFunction::Greedy, OutputFunction::EpsilonGreedy { epsilon: eps }, OutputFunction::Boltzmann { kappa }] {
                let d = f.apply(&outputs).unwrap();
                prop_assert!(check_distribution(&d, PROB_TOL).is_ok());
            }
        }
    }
}
