//! Planning on a fully specified miss-MDP.
//!
//! [`solve_point_based`] runs point-based value iteration: it keeps a finite
//! set of beliefs, backs up one alpha vector per belief per sweep, and grows
//! the belief set by sampling successor beliefs and keeping the ones
//! farthest from the current set. Starting from the values of the "always
//! take action a" policies, every vector is the value of an executable plan,
//! so `max_α α·b` is a lower bound on the optimal value.
//!
//! [`exact_finite_horizon_value`] is a brute-force expectimax over belief
//! successors for small models.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::belief::{observe, predict, successors, successors_of, Belief};
use crate::error::{Error, Result};
use crate::model::{MissMdp, MissingnessTable, Observation};
use crate::rng::{self, pick, uniform};

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    pub action: usize,
    pub values: Vec<f64>,
}

impl AlphaVector {
    #[inline]
    pub fn dot(&self, b: &Belief) -> f64 {
        b.dot(&self.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPolicy {
    pub vectors: Vec<AlphaVector>,
    pub gamma: f64,
    pub epsilon_target: f64,
    pub sweeps: usize,
    pub belief_count: usize,
}

impl AlphaPolicy {
    pub fn new(vectors: Vec<AlphaVector>, gamma: f64) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidArgument("a policy needs at least one alpha vector".into()));
        }
        let n = vectors[0].values.len();
        if vectors.iter().any(|v| v.values.len() != n) {
            return Err(Error::InvalidArgument("alpha vectors differ in length".into()));
        }
        Ok(Self { vectors, gamma, epsilon_target: 0.0, sweeps: 0, belief_count: 0 })
    }

    pub fn n_states(&self) -> usize {
        self.vectors[0].values.len()
    }

    /// Index of the best vector at `b`; ties go to the lowest index.
    pub fn best_index(&self, b: &Belief) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (k, v) in self.vectors.iter().enumerate() {
            let x = v.dot(b);
            if x > best_val {
                best_val = x;
                best = k;
            }
        }
        best
    }
}

/// Greedy action at `b`.
pub fn policy_action(policy: &AlphaPolicy, b: &Belief) -> usize {
    policy.vectors[policy.best_index(b)].action
}

/// `max_α α·b`.
pub fn policy_value_at(policy: &AlphaPolicy, b: &Belief) -> f64 {
    policy.vectors.iter().map(|v| v.dot(b)).fold(f64::NEG_INFINITY, f64::max)
}

/// External stopping condition (wall clock, cancellation) checked between sweeps.
pub trait Budget {
    fn exhausted(&self) -> bool;
}

/// Never runs out.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unlimited;

impl Budget for Unlimited {
    fn exhausted(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    /// Absolute precision; sweeps stop once the largest per-belief gain
    /// drops below `epsilon_target · (1 − γ)`.
    pub epsilon_target: f64,
    /// Upper limit on the belief set.
    pub max_beliefs: usize,
    /// Number of belief-set expansion rounds.
    pub expansions: usize,
    /// Hard cap on backup sweeps over all rounds.
    pub max_sweeps: usize,
    pub seed: u64,
}

impl SolveConfig {
    pub fn new(epsilon_target: f64) -> Self {
        Self { epsilon_target, max_beliefs: 256, expansions: 8, max_sweeps: 2000, seed: 0 }
    }
}

/// Value of repeating action `a` forever, approached from below.
fn blind_vector(model: &MissMdp, a: usize, floor: f64) -> Vec<f64> {
    let n = model.n_states();
    let g = model.gamma();
    let mut v = vec![floor; n];
    let mut next = vec![floor; n];
    let scale = 1.0 + libm::fabs(floor);
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for &s in model.reachable() {
            let cont: f64 = model.transition(s, a).iter().map(|&(t, p)| p * v[t]).sum();
            next[s] = model.reward(s, a) + g * cont;
            delta = delta.max(libm::fabs(next[s] - v[s]));
        }
        core::mem::swap(&mut v, &mut next);
        if delta <= 1e-12 * scale {
            break;
        }
    }
    v
}

struct Solver<'a> {
    model: &'a MissMdp,
    table: &'a MissingnessTable,
    /// Per state: the observations it can emit with their probabilities.
    emissions: Vec<Vec<(Observation, f64)>>,
}

impl<'a> Solver<'a> {
    fn new(model: &'a MissMdp, table: &'a MissingnessTable) -> Self {
        let features = model.features();
        let mut emissions = vec![Vec::new(); model.n_states()];
        for &s in model.reachable() {
            emissions[s] = table.row(s).iter().map(|&(r, p)| (features.apply_indicator(s, r), p)).collect();
        }
        Self { model, table, emissions }
    }

    /// Point-based backup at `b`: best action and its new vector.
    fn backup(&self, gamma_set: &[AlphaVector], b: &Belief) -> AlphaVector {
        let model = self.model;
        let n = model.n_states();
        let fallback = best_of(gamma_set, b);
        let mut best: Option<(f64, AlphaVector)> = None;
        let mut cont = vec![0.0; n];
        for a in 0..model.n_actions() {
            let predicted = predict(model, b, a);
            let mut choice: BTreeMap<Observation, usize> = BTreeMap::new();
            for (z, _, post) in successors_of(model, self.table, &predicted) {
                choice.insert(z, best_of(gamma_set, &post));
            }
            for &s in model.reachable() {
                cont[s] = self.emissions[s]
                    .iter()
                    .map(|&(z, m)| m * gamma_set[choice.get(&z).copied().unwrap_or(fallback)].values[s])
                    .sum();
            }
            let mut values = vec![0.0; n];
            for &s in model.reachable() {
                let c: f64 = model.transition(s, a).iter().map(|&(t, p)| p * cont[t]).sum();
                values[s] = model.reward(s, a) + model.gamma() * c;
            }
            let v = AlphaVector { action: a, values };
            let x = v.dot(b);
            if best.as_ref().is_none_or(|(bx, _)| x > *bx) {
                best = Some((x, v));
            }
        }
        best.expect("at least one action").1
    }
}

fn best_of(gamma_set: &[AlphaVector], b: &Belief) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, v) in gamma_set.iter().enumerate() {
        let x = v.dot(b);
        if x > best_val {
            best_val = x;
            best = k;
        }
    }
    best
}

fn value_at(gamma_set: &[AlphaVector], b: &Belief) -> f64 {
    gamma_set.iter().map(|v| v.dot(b)).fold(f64::NEG_INFINITY, f64::max)
}

/// Keeps the vectors that are best at some belief, in order of first use.
fn prune(gamma_set: Vec<AlphaVector>, beliefs: &[Belief]) -> Vec<AlphaVector> {
    let mut keep = vec![false; gamma_set.len()];
    for b in beliefs {
        keep[best_of(&gamma_set, b)] = true;
    }
    let mut out: Vec<AlphaVector> = Vec::new();
    for (v, k) in gamma_set.into_iter().zip(keep) {
        if k && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Beliefs the agent can hold before its first action: `μ` itself and `μ`
/// conditioned on each possible first observation.
pub fn starting_beliefs(model: &MissMdp, table: &MissingnessTable) -> Result<Vec<Belief>> {
    let mu = crate::belief::initial_belief(model)?;
    let mut out = vec![mu.clone()];
    for (_, _, post) in successors_of(model, table, mu.entries()) {
        if !out.contains(&post) {
            out.push(post);
        }
    }
    Ok(out)
}

/// Point-based value iteration (see module docs).
pub fn solve_point_based(model: &MissMdp, table: &MissingnessTable, config: &SolveConfig) -> Result<AlphaPolicy> {
    solve_point_based_with_budget(model, table, config, &Unlimited)
}

pub fn solve_point_based_with_budget(
    model: &MissMdp,
    table: &MissingnessTable,
    config: &SolveConfig,
    budget: &dyn Budget,
) -> Result<AlphaPolicy> {
    if !(config.epsilon_target > 0.0) {
        return Err(Error::InvalidArgument("epsilon_target must be positive".into()));
    }
    let mut beliefs = starting_beliefs(model, table)?;
    beliefs.truncate(config.max_beliefs.max(1));
    if beliefs.is_empty() {
        return Err(Error::EmptyBeliefSet);
    }
    let solver = Solver::new(model, table);
    let (lo, _) = model.reward_range();
    let floor = lo.min(0.0) / (1.0 - model.gamma());
    let mut gamma_set: Vec<AlphaVector> =
        (0..model.n_actions()).map(|a| AlphaVector { action: a, values: blind_vector(model, a, floor) }).collect();
    gamma_set = prune(gamma_set, &beliefs);

    let tol = config.epsilon_target * (1.0 - model.gamma());
    let mut rng = rng::stream(config.seed, 0);
    let mut sweeps = 0;
    let mut round = 0;
    'outer: loop {
        let mut values: Vec<f64> = beliefs.iter().map(|b| value_at(&gamma_set, b)).collect();
        loop {
            if sweeps >= config.max_sweeps || budget.exhausted() {
                break 'outer;
            }
            let fresh: Vec<AlphaVector> = beliefs.iter().map(|b| solver.backup(&gamma_set, b)).collect();
            sweeps += 1;
            let mut merged = fresh;
            merged.extend(gamma_set);
            gamma_set = prune(merged, &beliefs);
            let mut gain = 0.0f64;
            for (b, v) in beliefs.iter().zip(values.iter_mut()) {
                let x = value_at(&gamma_set, b);
                gain = gain.max(x - *v);
                *v = x;
            }
            if gain < tol {
                break;
            }
        }
        if round >= config.expansions || beliefs.len() >= config.max_beliefs {
            break;
        }
        round += 1;
        if !expand(model, table, &mut beliefs, config.max_beliefs, &mut rng) {
            break;
        }
    }
    let belief_count = beliefs.len();
    Ok(AlphaPolicy {
        vectors: gamma_set,
        gamma: model.gamma(),
        epsilon_target: config.epsilon_target,
        sweeps,
        belief_count,
    })
}

/// For every belief, samples one successor per action and adds the one
/// farthest (L1) from the current set. Returns whether the set grew.
fn expand(
    model: &MissMdp,
    table: &MissingnessTable,
    beliefs: &mut Vec<Belief>,
    max_beliefs: usize,
    rng: &mut rng::StreamRng,
) -> bool {
    let current = beliefs.len();
    let mut grew = false;
    for k in 0..current {
        if beliefs.len() >= max_beliefs {
            break;
        }
        let mut best: Option<(f64, Belief)> = None;
        for a in 0..model.n_actions() {
            let succ = successors(model, table, &beliefs[k], a);
            let items: Vec<(usize, f64)> = succ.iter().enumerate().map(|(i, (_, p, _))| (i, *p)).collect();
            let total: f64 = items.iter().map(|&(_, p)| p).sum();
            let Some(i) = pick(&items, total, uniform(rng)) else { continue };
            let cand = &succ[i].2;
            let dist = beliefs.iter().map(|b| b.l1_distance(cand)).fold(f64::INFINITY, f64::min);
            if dist > 1e-9 && best.as_ref().is_none_or(|(d, _)| dist > *d) {
                best = Some((dist, cand.clone()));
            }
        }
        if let Some((_, b)) = best {
            beliefs.push(b);
            grew = true;
        }
    }
    grew
}

/// Exact optimal `horizon`-step discounted value at `b` by expectimax over
/// belief successors; aborts after expanding `node_cap` distinct nodes.
pub fn exact_finite_horizon_value(
    model: &MissMdp,
    table: &MissingnessTable,
    b: &Belief,
    horizon: usize,
    node_cap: usize,
) -> Result<f64> {
    let mut memo: BTreeMap<(usize, Vec<(usize, u64)>), f64> = BTreeMap::new();
    let mut nodes = 0usize;
    expectimax(model, table, b, horizon, node_cap, &mut memo, &mut nodes)
}

fn expectimax(
    model: &MissMdp,
    table: &MissingnessTable,
    b: &Belief,
    depth: usize,
    cap: usize,
    memo: &mut BTreeMap<(usize, Vec<(usize, u64)>), f64>,
    nodes: &mut usize,
) -> Result<f64> {
    if depth == 0 {
        return Ok(0.0);
    }
    let key = (depth, b.entries().iter().map(|&(s, p)| (s, p.to_bits())).collect::<Vec<_>>());
    if let Some(&v) = memo.get(&key) {
        return Ok(v);
    }
    *nodes += 1;
    if *nodes > cap {
        return Err(Error::NodeCapExceeded(cap));
    }
    let mut best = f64::NEG_INFINITY;
    for a in 0..model.n_actions() {
        let immediate: f64 = b.entries().iter().map(|&(s, p)| p * model.reward(s, a)).sum();
        let mut future = 0.0;
        if depth > 1 {
            for (_, p, post) in successors(model, table, b, a) {
                future += p * expectimax(model, table, &post, depth - 1, cap, memo, nodes)?;
            }
        }
        best = best.max(immediate + model.gamma() * future);
    }
    memo.insert(key, best);
    Ok(best)
}

/// Posterior after the first observation; used to seed executions.
pub fn first_belief(model: &MissMdp, table: &MissingnessTable, z: Observation) -> Result<Belief> {
    observe(model, table, model.initial(), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureSpace, Indicator, MissMdpBuilder};

    fn single_state(reward: f64, gamma: f64) -> (MissMdp, MissingnessTable) {
        let fs = FeatureSpace::new(vec![1]).unwrap();
        let mut b = MissMdpBuilder::new(fs.clone(), 1, gamma);
        b.initial(0, 1.0).transition(0, 0, 0, 1.0).reward(0, 0, reward);
        (b.build().unwrap(), MissingnessTable::constant(&fs, &[(Indicator(1), 1.0)]))
    }

    #[test]
    fn single_state_value_is_geometric() {
        let (m, t) = single_state(1.0, 0.5);
        let p = solve_point_based(&m, &t, &SolveConfig::new(1e-6)).unwrap();
        assert!((policy_value_at(&p, &Belief::point(0)) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn exact_oracle_small_cases() {
        let (m, t) = single_state(1.0, 0.5);
        let b = Belief::point(0);
        assert_eq!(exact_finite_horizon_value(&m, &t, &b, 0, 10).unwrap(), 0.0);
        assert!((exact_finite_horizon_value(&m, &t, &b, 3, 10).unwrap() - 1.75).abs() < 1e-12);
    }

    fn crossing_policy() -> AlphaPolicy {
        AlphaPolicy::new(
            vec![AlphaVector { action: 0, values: vec![1.0, 0.0] }, AlphaVector { action: 1, values: vec![0.0, 1.0] }],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn greedy_action_switches_at_crossing() {
        let p = crossing_policy();
        let b = |x: f64| Belief::from_weights(vec![(0, x), (1, 1.0 - x)]).unwrap();
        assert_eq!(policy_action(&p, &b(0.6)), 0);
        assert_eq!(policy_action(&p, &b(0.4)), 1);
        // Exactly at the crossing the lower index wins.
        assert_eq!(policy_action(&p, &b(0.5)), 0);
    }

    #[test]
    fn dominating_vector_wins() {
        let p = AlphaPolicy::new(
            vec![AlphaVector { action: 0, values: vec![0.0, 0.0] }, AlphaVector { action: 1, values: vec![1.0, 2.0] }],
            0.9,
        )
        .unwrap();
        assert_eq!(policy_action(&p, &Belief::point(0)), 1);
        let zeros = AlphaPolicy::new(vec![AlphaVector { action: 0, values: vec![0.0, 0.0] }], 0.9).unwrap();
        assert_eq!(policy_value_at(&zeros, &Belief::point(1)), 0.0);
    }

    #[test]
    fn node_cap_is_enforced() {
        let (m, t) = single_state(1.0, 0.5);
        assert_eq!(exact_finite_horizon_value(&m, &t, &Belief::point(0), 5, 2), Err(Error::NodeCapExceeded(2)));
    }
}
