//! Brute-force exact computation on finite, strictly Markov processes.
//!
//! Path distributions are enumerated outright. Expected reward, local
//! distances, and occupancy use a forward recursion over state marginals,
//! truncated at a horizon whose geometric tail is below the caller's
//! tolerance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::{Policy, StochasticAgent};
use crate::distances::{ActionMetric, EstimateMethod, LocalDistanceEstimate};
use crate::error::{Error, Result};
use crate::process::{check_distribution, DecisionProcess, PrimePath, RewardSpec, State, TruncatedPath, PROB_TOL};

/// Largest number of path entries enumeration will materialize.
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

/// Largest `|S|²·|𝒜|·T` the marginal recursion will run.
pub const RECURSION_BUDGET: u128 = 2_000_000_000;

/// Exact probabilities of every positive-probability path of a fixed
/// horizon. Keys are truncated paths by default, or prime paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathDistribution<K: Ord = TruncatedPath> {
    pub horizon: usize,
    pub entries: BTreeMap<K, f64>,
    pub process_id: String,
    pub agent_id: String,
}

impl<K: Ord> PathDistribution<K> {
    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn require_markov(process: &DecisionProcess) -> Result<()> {
    if process.is_strictly_markov() {
        Ok(())
    } else {
        Err(Error::NotMarkov)
    }
}

fn checked_act<P: Policy + ?Sized>(process: &DecisionProcess, agent: &P, prime: &PrimePath) -> Result<Vec<f64>> {
    let dist = agent.act(prime)?;
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
    Ok(dist)
}

fn guard_enumeration(process: &DecisionProcess, pairs: u32) -> Result<()> {
    let per_step = (process.n_states() * process.n_actions()) as u128;
    let required = per_step.checked_pow(pairs).unwrap_or(u128::MAX);
    if required > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget {
            required,
            budget: ENUMERATION_BUDGET,
        });
    }
    Ok(())
}

/// Every prime path `φ'_t` with its probability under the agent.
pub fn enumerate_prime_paths<P: Policy + ?Sized>(
    process: &DecisionProcess,
    agent: &P,
    t: usize,
) -> Result<PathDistribution<PrimePath>> {
    require_markov(process)?;
    guard_enumeration(process, t as u32 + 1)?;
    let mut frontier: Vec<(PrimePath, f64)> = process
        .initial()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| (PrimePath::initial(s), p))
        .collect();
    for _ in 0..t {
        let mut next = Vec::new();
        for (prime, p) in &frontier {
            let dist = checked_act(process, agent, prime)?;
            for (a, &pa) in dist.iter().enumerate().filter(|(_, &x)| x > 0.0) {
                let row = process.transition(prime.terminal, a);
                for (s2, &ps) in row.iter().enumerate().filter(|(_, &x)| x > 0.0) {
                    next.push((prime.extend(a, s2), p * pa * ps));
                }
            }
        }
        frontier = next;
    }
    Ok(PathDistribution {
        horizon: t,
        entries: frontier.into_iter().collect(),
        process_id: process.name().to_string(),
        agent_id: String::new(),
    })
}

/// Every truncated path `φ_t` (pairs `0..=t`) with its probability.
pub fn enumerate_paths<P: Policy + ?Sized>(
    process: &DecisionProcess,
    agent: &P,
    t: usize,
) -> Result<PathDistribution> {
    guard_enumeration(process, t as u32 + 1)?;
    let primes = enumerate_prime_paths(process, agent, t)?;
    let mut entries = BTreeMap::new();
    for (prime, p) in primes.entries {
        let dist = checked_act(process, agent, &prime)?;
        for (a, &pa) in dist.iter().enumerate().filter(|(_, &x)| x > 0.0) {
            entries.insert(prime.complete(a), p * pa);
        }
    }
    Ok(PathDistribution {
        horizon: t,
        entries,
        process_id: primes.process_id,
        agent_id: primes.agent_id,
    })
}

/// `½ Σ |p − q|` over the union of supports.
pub fn tvd<K: Ord>(p: &PathDistribution<K>, q: &PathDistribution<K>) -> Result<f64> {
    if p.horizon != q.horizon {
        return Err(Error::HorizonMismatch {
            left: p.horizon,
            right: q.horizon,
        });
    }
    let mut sum = 0.0;
    for (k, &pv) in &p.entries {
        sum += (pv - q.entries.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &qv) in &q.entries {
        if !p.entries.contains_key(k) {
            sum += qv;
        }
    }
    Ok((0.5 * sum).min(1.0))
}

/// `TVD(Φ_t^a, Φ_t^b)` for every `t ≤ max_t`, in one joint depth-first
/// walk that never materializes the distributions. Subtrees where one
/// agent has zero mass are summed in closed form.
pub fn path_tvd_profile(
    process: &DecisionProcess,
    a: &StochasticAgent,
    b: &StochasticAgent,
    max_t: usize,
) -> Result<Vec<f64>> {
    require_markov(process)?;
    a.check_shape(b)?;
    let mut acc = vec![0.0; max_t + 1];
    for (s, &p0) in process.initial().iter().enumerate() {
        if p0 > 0.0 {
            tvd_walk(process, a, b, s, p0, p0, 0, max_t, &mut acc);
        }
    }
    Ok(acc.into_iter().map(|x| (0.5 * x).min(1.0)).collect())
}

#[allow(clippy::too_many_arguments)]
fn tvd_walk(
    process: &DecisionProcess,
    a: &StochasticAgent,
    b: &StochasticAgent,
    state: State,
    pa: f64,
    pb: f64,
    depth: usize,
    max_t: usize,
    acc: &mut [f64],
) {
    let da = a.dist(state);
    let db = b.dist(state);
    for action in 0..process.n_actions() {
        let qa = pa * da[action];
        let qb = pb * db[action];
        if qa == 0.0 && qb == 0.0 {
            continue;
        }
        if qa == 0.0 || qb == 0.0 {
            // Disjoint from here on: the surviving mass is conserved.
            let m = qa + qb;
            acc[depth..].iter_mut().for_each(|x| *x += m);
            continue;
        }
        acc[depth] += (qa - qb).abs();
        if depth == max_t {
            continue;
        }
        for (s2, &ps) in process.transition(state, action).iter().enumerate() {
            if ps > 0.0 {
                tvd_walk(process, a, b, s2, qa * ps, qb * ps, depth + 1, max_t, acc);
            }
        }
    }
}

/// Row-stochastic state-to-state kernel under a strictly Markov agent.
fn state_kernel(process: &DecisionProcess, agent: &StochasticAgent) -> Result<Vec<f64>> {
    if agent.n_states() != process.n_states() || agent.n_actions() != process.n_actions() {
        return Err(Error::InvalidArgument(format!(
            "agent shape {}x{} does not fit process {}x{}",
            agent.n_states(),
            agent.n_actions(),
            process.n_states(),
            process.n_actions()
        )));
    }
    let n = process.n_states();
    let mut kernel = vec![0.0; n * n];
    for s in 0..n {
        let dist = agent.dist(s);
        for (a, &pa) in dist.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (s2, &ps) in process.transition(s, a).iter().enumerate() {
                kernel[s * n + s2] += pa * ps;
            }
        }
    }
    Ok(kernel)
}

fn guard_recursion(process: &DecisionProcess, horizon: usize) -> Result<()> {
    let n = process.n_states() as u128;
    let required = n * n * process.n_actions() as u128 * (horizon as u128 + 1);
    if required > RECURSION_BUDGET {
        return Err(Error::EnumerationBudget {
            required,
            budget: RECURSION_BUDGET,
        });
    }
    Ok(())
}

/// State marginals `ℙ(s_t = s)` for `t = 0..=horizon`.
pub fn state_marginals(
    process: &DecisionProcess,
    agent: &StochasticAgent,
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    require_markov(process)?;
    guard_recursion(process, horizon)?;
    let kernel = state_kernel(process, agent)?;
    let n = process.n_states();
    let mut out = Vec::with_capacity(horizon + 1);
    let mut mu = process.initial().to_vec();
    for t in 0..=horizon {
        if t < horizon {
            let mut next = vec![0.0; n];
            for s in 0..n {
                if mu[s] == 0.0 {
                    continue;
                }
                for s2 in 0..n {
                    next[s2] += mu[s] * kernel[s * n + s2];
                }
            }
            out.push(std::mem::replace(&mut mu, next));
        } else {
            out.push(std::mem::take(&mut mu));
        }
    }
    Ok(out)
}

/// Discounted sum `Σ_{t≤T} γ^t Σ_s ℙ(s_t = s)·f(s)`.
fn discounted_state_sum(
    process: &DecisionProcess,
    agent: &StochasticAgent,
    spec: &RewardSpec,
    horizon: usize,
    f: &[f64],
) -> Result<f64> {
    let marginals = state_marginals(process, agent, horizon)?;
    let mut total = 0.0;
    let mut w = 1.0;
    for mu in &marginals {
        total += w * mu.iter().zip(f).map(|(m, x)| m * x).sum::<f64>();
        w *= spec.gamma;
    }
    Ok(total)
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")))
    }
}

/// Exact `d_vantage(b, c) = Σ_t γ^t Σ_s ℙ(s_t = s | vantage)·d_𝒜(b(s), c(s))`
/// to a horizon whose tail is below `tol`.
pub fn exact_local_distance(
    vantage: &StochasticAgent,
    b: &StochasticAgent,
    c: &StochasticAgent,
    process: &DecisionProcess,
    spec: &RewardSpec,
    metric: ActionMetric,
    tol: f64,
) -> Result<LocalDistanceEstimate> {
    check_tol(tol)?;
    b.check_shape(c)?;
    vantage.check_shape(b)?;
    let per_state: Vec<f64> = (0..process.n_states())
        .map(|s| metric.distance(b.dist(s), c.dist(s)))
        .collect();
    let horizon = spec.horizon_for(metric.bound(), tol);
    let value = discounted_state_sum(process, vantage, spec, horizon, &per_state)?;
    Ok(LocalDistanceEstimate {
        value,
        std_error: 0.0,
        horizon,
        tail_bound: spec.tail_bound(metric.bound(), horizon),
        method: EstimateMethod::Exact,
    })
}

/// Exact `J(agent) = E[Σ_t γ^t r(s_t, a_t)]` to within `tol`.
pub fn exact_expected_reward(
    process: &DecisionProcess,
    agent: &StochasticAgent,
    spec: &RewardSpec,
    tol: f64,
) -> Result<f64> {
    check_tol(tol)?;
    let expected_r: Vec<f64> = (0..process.n_states())
        .map(|s| {
            agent
                .dist(s)
                .iter()
                .enumerate()
                .map(|(a, &p)| p * process.reward(s, a))
                .sum()
        })
        .collect();
    let horizon = spec.horizon_for(process.metadata().reward_max_abs, tol);
    discounted_state_sum(process, agent, spec, horizon, &expected_r)
}

/// Discount-weighted, `Ω`-normalized state occupancy `ℙ(s | a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyVector {
    pub probs: Vec<f64>,
    pub omega: f64,
    pub horizon: usize,
}

impl OccupancyVector {
    /// The weights `w_s = ℙ(s|a)·Ω` that turn a state-set distance into
    /// the local distance at `a`.
    pub fn weights(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p * self.omega).collect()
    }
}

pub fn occupancy(
    process: &DecisionProcess,
    agent: &StochasticAgent,
    spec: &RewardSpec,
    tol: f64,
) -> Result<OccupancyVector> {
    check_tol(tol)?;
    // Normalized mass past T is γ^{T+1}.
    let horizon = spec.horizon_for(1.0 - spec.gamma, tol);
    let marginals = state_marginals(process, agent, horizon)?;
    let omega = spec.omega();
    let mut probs = vec![0.0; process.n_states()];
    let mut w = 1.0;
    for mu in &marginals {
        for (p, m) in probs.iter_mut().zip(mu) {
            *p += w * m;
        }
        w *= spec.gamma;
    }
    probs.iter_mut().for_each(|p| *p /= omega);
    Ok(OccupancyVector {
        probs,
        omega,
        horizon,
    })
}

/// Action values `Q^a(s, 𝒶)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
    pub gamma: f64,
}

impl QTable {
    pub fn get(&self, s: State, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: State) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `V(s) = Σ_𝒶 a(𝒶|s) Q(s, 𝒶)`.
    pub fn state_values(&self, agent: &StochasticAgent) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| self.row(s).iter().zip(agent.dist(s)).map(|(q, p)| q * p).sum())
            .collect()
    }

    /// `max |Q − T^a Q|` for the agent's Bellman operator.
    pub fn bellman_residual(&self, process: &DecisionProcess, agent: &StochasticAgent) -> f64 {
        let v = self.state_values(agent);
        let mut worst = 0.0f64;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let target = bellman_target(process, self.gamma, &v, s, a);
                worst = worst.max((self.get(s, a) - target).abs());
            }
        }
        worst
    }
}

fn bellman_target(process: &DecisionProcess, gamma: f64, v: &[f64], s: State, a: usize) -> f64 {
    let next: f64 = process
        .transition(s, a)
        .iter()
        .zip(v)
        .map(|(p, x)| p * x)
        .sum();
    process.reward(s, a) + gamma * next
}

/// Iterative policy evaluation until the Bellman residual is at most `tol`.
pub fn q_table(
    process: &DecisionProcess,
    agent: &StochasticAgent,
    spec: &RewardSpec,
    tol: f64,
) -> Result<QTable> {
    require_markov(process)?;
    check_tol(tol)?;
    state_kernel(process, agent)?;
    let (n_s, n_a) = (process.n_states(), process.n_actions());
    let mut q = QTable {
        n_states: n_s,
        n_actions: n_a,
        values: vec![0.0; n_s * n_a],
        gamma: spec.gamma,
    };
    loop {
        let v = q.state_values(agent);
        let mut change = 0.0f64;
        let mut next = vec![0.0; n_s * n_a];
        for s in 0..n_s {
            for a in 0..n_a {
                let x = bellman_target(process, spec.gamma, &v, s, a);
                change = change.max((x - q.values[s * n_a + a]).abs());
                next[s * n_a + a] = x;
            }
        }
        q.values = next;
        // Residual of the new iterate is at most γ·change.
        if spec.gamma * change <= tol * 0.5 {
            break;
        }
    }
    Ok(q)
}

/// Optimal action values by value iteration.
pub fn optimal_q(process: &DecisionProcess, spec: &RewardSpec, tol: f64) -> Result<QTable> {
    require_markov(process)?;
    check_tol(tol)?;
    let (n_s, n_a) = (process.n_states(), process.n_actions());
    let mut values = vec![0.0; n_s * n_a];
    loop {
        let v: Vec<f64> = (0..n_s)
            .map(|s| values[s * n_a..(s + 1) * n_a].iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut change = 0.0f64;
        for s in 0..n_s {
            for a in 0..n_a {
                let x = bellman_target(process, spec.gamma, &v, s, a);
                change = change.max((x - values[s * n_a + a]).abs());
                values[s * n_a + a] = x;
            }
        }
        if spec.gamma * change <= tol * 0.5 {
            break;
        }
    }
    Ok(QTable {
        n_states: n_s,
        n_actions: n_a,
        values,
        gamma: spec.gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::local_distance_mc;
    use crate::process::{random_process, sample_path, two_chamber, Connectivity};
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn stay() -> StochasticAgent {
        StochasticAgent::deterministic(&[0, 0], 2).unwrap()
    }

    fn switch() -> StochasticAgent {
        StochasticAgent::deterministic(&[1, 1], 2).unwrap()
    }

    fn mix(p: f64) -> StochasticAgent {
        StochasticAgent::mixture(&stay(), &switch(), p).unwrap()
    }

    fn spec(g: f64) -> RewardSpec {
        RewardSpec::new(g).unwrap()
    }

    #[test]
    fn enumerate_deterministic_chain() {
        let d = enumerate_paths(&two_chamber(), &switch(), 1).unwrap();
        assert_eq!(d.len(), 1);
        let path = TruncatedPath::new(vec![(0, 1), (1, 1)]).unwrap();
        assert_eq!(d.entries[&path], 1.0);
    }

    #[test]
    fn enumerate_uniform_agent() {
        let d = enumerate_paths(&two_chamber(), &StochasticAgent::uniform(2, 2), 1).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.entries.values().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn enumerate_horizon_zero_is_initial_times_first_action() {
        let mut r = rng::rng(1);
        let p = random_process(&mut r, 3, 2, Connectivity::Dense);
        let agent = StochasticAgent::tabular(vec![vec![0.2, 0.8], vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let d = enumerate_paths(&p, &agent, 0).unwrap();
        for (s, &p0) in p.initial().iter().enumerate() {
            for a in 0..2 {
                let path = TruncatedPath::new(vec![(s, a)]).unwrap();
                let want = p0 * agent.dist(s)[a];
                assert_abs_diff_eq!(d.entries.get(&path).copied().unwrap_or(0.0), want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let mut r = rng::rng(2);
        let p = random_process(&mut r, 4, 3, Connectivity::Dense);
        let err = enumerate_paths(&p, &StochasticAgent::uniform(4, 3), 7).unwrap_err();
        assert!(matches!(err, Error::EnumerationBudget { required, .. } if required == 12u128.pow(8)));
    }

    #[test]
    fn tvd_cases() {
        let p = two_chamber();
        let a = enumerate_paths(&p, &stay(), 2).unwrap();
        let b = enumerate_paths(&p, &switch(), 2).unwrap();
        assert_eq!(tvd(&a, &a).unwrap(), 0.0);
        assert_eq!(tvd(&a, &b).unwrap(), 1.0);
        let c = enumerate_paths(&p, &stay(), 1).unwrap();
        assert!(matches!(tvd(&a, &c), Err(Error::HorizonMismatch { .. })));
        // On prime paths φ'_1 the mixing weight is the TVD exactly.
        for q in [0.1, 0.25, 0.5] {
            let x = enumerate_prime_paths(&p, &stay(), 1).unwrap();
            let y = enumerate_prime_paths(&p, &mix(q), 1).unwrap();
            assert_abs_diff_eq!(tvd(&x, &y).unwrap(), q, epsilon = 1e-15);
            // On truncated paths φ_1 the second action also counts.
            let x = enumerate_paths(&p, &stay(), 1).unwrap();
            let y = enumerate_paths(&p, &mix(q), 1).unwrap();
            assert_abs_diff_eq!(tvd(&x, &y).unwrap(), 2.0 * q - q * q, epsilon = 1e-15);
        }
    }

    #[test]
    fn tvd_profile_matches_enumeration() {
        let mut r = rng::rng(8);
        for conn in [Connectivity::Dense, Connectivity::Sparse] {
            let p = random_process(&mut r, 3, 3, conn);
            let a = crate::verify::random_agent(&mut r, 3, 3, 0.3);
            let b = crate::verify::random_agent(&mut r, 3, 3, 0.3);
            let profile = path_tvd_profile(&p, &a, &b, 4).unwrap();
            for (t, &v) in profile.iter().enumerate() {
                let x = enumerate_paths(&p, &a, t).unwrap();
                let y = enumerate_paths(&p, &b, t).unwrap();
                assert_abs_diff_eq!(v, tvd(&x, &y).unwrap(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn enumerated_marginals_match_recursion() {
        let mut r = rng::rng(9);
        let p = random_process(&mut r, 4, 2, Connectivity::Sparse);
        let agent = crate::verify::random_agent(&mut r, 4, 2, 0.2);
        let marginals = state_marginals(&p, &agent, 4).unwrap();
        for t in 0..=4 {
            let d = enumerate_prime_paths(&p, &agent, t).unwrap();
            assert_abs_diff_eq!(d.total(), 1.0, epsilon = 1e-10);
            let mut mu = vec![0.0; 4];
            for (prime, prob) in &d.entries {
                mu[prime.terminal] += prob;
            }
            for s in 0..4 {
                assert_abs_diff_eq!(mu[s], marginals[t][s], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_distance_two_chamber() {
        let p = two_chamber();
        let m = ActionMetric::TotalVariation;
        let d = exact_local_distance(&stay(), &stay(), &switch(), &p, &spec(0.5), m, 1e-10).unwrap();
        assert!((d.value - 2.0).abs() <= 1e-10);
        assert_eq!(d.std_error, 0.0);
        assert!(d.tail_bound < 1e-10);
        let z = exact_local_distance(&mix(0.3), &mix(0.3), &mix(0.3), &p, &spec(0.5), m, 1e-10).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn exact_and_mc_agree_on_mixture_vantage() {
        let p = two_chamber();
        let m = ActionMetric::TotalVariation;
        let s = spec(0.5);
        let exact = exact_local_distance(&mix(0.5), &stay(), &switch(), &p, &s, m, 1e-12).unwrap();
        let mc = local_distance_mc(&mix(0.5), &stay(), &switch(), &p, &s, m, 40, 2000, 17).unwrap();
        assert!((mc.value - exact.value).abs() <= 3.0 * mc.std_error + mc.tail_bound);
    }

    #[test]
    fn expected_reward_two_chamber() {
        let p = two_chamber();
        assert_eq!(exact_expected_reward(&p, &stay(), &spec(0.5), 1e-12).unwrap(), 0.0);
        let j = exact_expected_reward(&p, &switch(), &spec(0.5), 1e-12).unwrap();
        assert!((j - 2.0 / 3.0).abs() <= 1e-12);
        // Continuity sweep in the mixing weight.
        let mut prev = exact_expected_reward(&p, &mix(0.0), &spec(0.5), 1e-12).unwrap();
        for k in 1..=200 {
            let j = exact_expected_reward(&p, &mix(k as f64 / 200.0), &spec(0.5), 1e-12).unwrap();
            assert!((j - prev).abs() < 0.02);
            prev = j;
        }
    }

    #[test]
    fn expected_reward_matches_q_values() {
        let mut r = rng::rng(12);
        let p = random_process(&mut r, 4, 3, Connectivity::Dense);
        let agent = crate::verify::random_agent(&mut r, 4, 3, 0.0);
        let s = spec(0.9);
        let q = q_table(&p, &agent, &s, 1e-11).unwrap();
        let v = q.state_values(&agent);
        let j_q: f64 = p.initial().iter().zip(&v).map(|(a, b)| a * b).sum();
        let j = exact_expected_reward(&p, &agent, &s, 1e-11).unwrap();
        assert_abs_diff_eq!(j, j_q, epsilon = 1e-9);
    }

    #[test]
    fn occupancy_cases() {
        let p = two_chamber();
        let o = occupancy(&p, &stay(), &spec(0.5), 1e-12).unwrap();
        assert_abs_diff_eq!(o.probs[0], 1.0, epsilon = 1e-12);
        assert_eq!(o.probs[1], 0.0);
        let o = occupancy(&p, &switch(), &spec(0.5), 1e-12).unwrap();
        assert_abs_diff_eq!(o.probs[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(o.probs[1], 1.0 / 3.0, epsilon = 1e-12);
        let mut r = rng::rng(4);
        let p = random_process(&mut r, 4, 2, Connectivity::Sparse);
        let o = occupancy(&p, &StochasticAgent::uniform(4, 2), &spec(0.9), 1e-12).unwrap();
        assert_abs_diff_eq!(o.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn occupancy_weights_recover_local_distance() {
        use crate::distances::{d_set, WeightedStateSet};
        let mut r = rng::rng(21);
        let p = random_process(&mut r, 4, 3, Connectivity::Sparse);
        let s = spec(0.9);
        let [v, b, c] = [0.2, 0.0, 0.5].map(|z| crate::verify::random_agent(&mut r, 4, 3, z));
        let occ = occupancy(&p, &v, &s, 1e-13).unwrap();
        let wset = WeightedStateSet::new((0..4).collect(), occ.weights()).unwrap();
        let via_set = d_set(&b, &c, &wset, ActionMetric::TotalVariation).unwrap();
        let exact = exact_local_distance(&v, &b, &c, &p, &s, ActionMetric::TotalVariation, 1e-13).unwrap();
        assert_abs_diff_eq!(via_set, exact.value, epsilon = 1e-10);
    }

    #[test]
    fn q_table_two_chamber_closed_form() {
        let p = two_chamber();
        let g = 0.5;
        let q = q_table(&p, &switch(), &spec(g), 1e-12).unwrap();
        // V(s0) = γ V(s1), V(s1) = 1 + γ V(s0).
        let v1 = 1.0 / (1.0 - g * g);
        let v0 = g * v1;
        assert_abs_diff_eq!(q.get(0, 1), g * v1, epsilon = 1e-11);
        assert_abs_diff_eq!(q.get(1, 1), 1.0 + g * v0, epsilon = 1e-11);
        assert_abs_diff_eq!(q.get(0, 0), g * v0, epsilon = 1e-11);
        assert_abs_diff_eq!(q.get(1, 0), 1.0 + g * v1, epsilon = 1e-11);
        assert!(q.bellman_residual(&p, &switch()) <= 1e-10);
    }

    #[test]
    fn q_table_zero_reward() {
        let p = two_chamber().map_rewards(|_, _, _| 0.0).unwrap();
        let q = q_table(&p, &StochasticAgent::uniform(2, 2), &spec(0.9), 1e-12).unwrap();
        assert!(q.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn q_table_residual_on_random_processes() {
        let mut r = rng::rng(33);
        for _ in 0..20 {
            let p = random_process(&mut r, 4, 3, Connectivity::Sparse);
            let agent = crate::verify::random_agent(&mut r, 4, 3, 0.3);
            let q = q_table(&p, &agent, &spec(0.9), 1e-10).unwrap();
            assert!(q.bellman_residual(&p, &agent) <= 1e-10);
        }
    }

    #[test]
    fn stay_agent_has_improving_switch() {
        let p = two_chamber();
        let q = q_table(&p, &stay(), &spec(0.5), 1e-12).unwrap();
        assert!(q.get(0, 1) > q.get(0, 0));
    }

    #[test]
    fn sampled_frequencies_match_enumeration() {
        let p = two_chamber();
        let agent = StochasticAgent::tabular(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let exact = enumerate_paths(&p, &agent, 3).unwrap();
        let n = 100_000usize;
        let mut counts: BTreeMap<TruncatedPath, usize> = BTreeMap::new();
        for i in 0..n {
            let path = sample_path(&p, &agent, 3, rng::derive_seed(5, &[i as u64])).unwrap();
            *counts.entry(path).or_default() += 1;
        }
        for (path, &prob) in &exact.entries {
            let freq = counts.get(path).copied().unwrap_or(0) as f64 / n as f64;
            let se = (prob * (1.0 - prob) / n as f64).sqrt();
            assert!((freq - prob).abs() <= 4.0 * se, "{path}: {freq} vs {prob}");
        }
        assert!(counts.keys().all(|k| exact.entries.contains_key(k)));
    }

    #[test]
    fn path_dependent_process_is_refused() {
        use crate::process::PathHook;
        use std::sync::Arc;
        let p = two_chamber().with_path_hook(PathHook(Arc::new(|_| vec![1.0, 0.0])));
        assert!(matches!(enumerate_paths(&p, &stay(), 1), Err(Error::NotMarkov)));
        assert!(matches!(occupancy(&p, &stay(), &spec(0.5), 1e-9), Err(Error::NotMarkov)));
    }
}
