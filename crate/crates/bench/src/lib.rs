//! Shared fixtures for the benchmarks.

use agentspace::process::{random_process, Connectivity};
use agentspace::verify::random_agent;
use agentspace::{rng, DecisionProcess, StochasticAgent};

/// A dense random process with three random agents on it.
pub fn fixture(n_states: usize, n_actions: usize, seed: u64) -> (DecisionProcess, [StochasticAgent; 3]) {
    let mut r = rng::rng(seed);
    let process = random_process(&mut r, n_states, n_actions, Connectivity::Dense);
    let agents = [0.0, 0.2, 0.5].map(|z| random_agent(&mut r, n_states, n_actions, z));
    (process, agents)
}
