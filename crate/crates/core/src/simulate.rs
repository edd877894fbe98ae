//! Trajectory sampling, history datasets and observation counters.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::model::{Indicator, MissMdp, MissingnessTable, Observation, StateId};
use crate::rng::{self, pick, uniform};

/// Truncation tolerance used for dataset trajectories.
pub const DATASET_TOL: f64 = 1e-3;

/// Smallest `L` with `γ^L · ρ_max / (1 − γ) < tol`.
pub fn horizon_for(gamma: f64, rho_max: f64, tol: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(alloc::format!("discount {gamma} not in [0, 1)")));
    }
    if !(rho_max >= 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("reward bound must be >= 0 and tolerance > 0".into()));
    }
    let scale = rho_max / (1.0 - gamma);
    let mut l = 0usize;
    while libm::pow(gamma, l as f64) * scale >= tol {
        l += 1;
    }
    Ok(l)
}

/// Behaviour policy used to collect data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BehaviorPolicy {
    #[default]
    UniformRandom,
}

impl BehaviorPolicy {
    pub fn choose<R: RngCore + ?Sized>(self, n_actions: usize, rng: &mut R) -> usize {
        match self {
            BehaviorPolicy::UniformRandom => ((uniform(rng) * n_actions as f64) as usize).min(n_actions - 1),
        }
    }
}

/// `z(0), a(0), z(1), a(1), ...`. A history that ends in a terminal state
/// carries one more observation than actions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct History {
    pub observations: Vec<Observation>,
    pub actions: Vec<usize>,
    pub terminal: bool,
}

impl History {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Draws an observation of `s` from the missingness table.
pub fn emit<R: RngCore + ?Sized>(model: &MissMdp, table: &MissingnessTable, s: StateId, rng: &mut R) -> Observation {
    let r = rng::sample(table.row(s), rng).unwrap_or(Indicator::all_observed(model.features().len()));
    model.features().apply_indicator(s, r)
}

/// Runs one episode of at most `horizon` observations.
pub fn sample_trajectory<R: RngCore + ?Sized>(
    model: &MissMdp,
    table: &MissingnessTable,
    policy: BehaviorPolicy,
    horizon: usize,
    rng: &mut R,
) -> History {
    let mut h = History::default();
    let Some(mut s) = pick(model.initial(), 1.0, uniform(rng)) else { return h };
    for _ in 0..horizon {
        let z = emit(model, table, s, rng);
        h.observations.push(z);
        if model.is_terminal(s) {
            h.terminal = true;
            break;
        }
        let a = policy.choose(model.n_actions(), rng);
        h.actions.push(a);
        match rng::sample(model.transition(s, a), rng) {
            Some(next) => s = next,
            None => break,
        }
    }
    h
}

/// Trajectory number `index` of the dataset with seed `seed`; each index has
/// its own random stream so trajectories can be produced in any order.
pub fn indexed_trajectory(
    model: &MissMdp,
    table: &MissingnessTable,
    policy: BehaviorPolicy,
    horizon: usize,
    seed: u64,
    index: u64,
) -> History {
    let mut rng = rng::stream(seed, index);
    sample_trajectory(model, table, policy, horizon, &mut rng)
}

/// Trajectory length used for dataset generation on `model`.
pub fn dataset_horizon(model: &MissMdp) -> Result<usize> {
    Ok(horizon_for(model.gamma(), model.reward_bound(), DATASET_TOL)?.max(1))
}

/// Collection of histories.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    histories: Vec<History>,
    total: usize,
}

impl Dataset {
    pub fn new(histories: Vec<History>) -> Self {
        let total = histories.iter().map(History::len).sum();
        Self { histories, total }
    }

    pub fn histories(&self) -> &[History] {
        &self.histories
    }

    /// Total number of observations.
    pub fn total_observations(&self) -> usize {
        self.total
    }

    pub fn push(&mut self, h: History) {
        self.total += h.len();
        self.histories.push(h);
    }

    pub fn counts(&self) -> ObservationCounts {
        let mut c = ObservationCounts::default();
        for h in &self.histories {
            for &z in &h.observations {
                c.add(z, 1);
            }
        }
        c
    }
}

/// Samples trajectories until the dataset holds at least `size` observations.
/// Trajectories that overshoot are kept whole.
pub fn generate_dataset(
    model: &MissMdp,
    table: &MissingnessTable,
    policy: BehaviorPolicy,
    size: usize,
    seed: u64,
) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    if model.initial().is_empty() {
        return Err(Error::InvalidModel("empty initial distribution".into()));
    }
    let horizon = dataset_horizon(model)?;
    let mut data = Dataset::default();
    let mut index = 0u64;
    while data.total_observations() < size {
        data.push(indexed_trajectory(model, table, policy, horizon, seed, index));
        index += 1;
    }
    Ok(data)
}

/// Occurrence counts `#_D(z)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ObservationCounts {
    counts: BTreeMap<Observation, u64>,
    total: u64,
}

impl ObservationCounts {
    pub fn add(&mut self, z: Observation, n: u64) {
        if n > 0 {
            *self.counts.entry(z).or_insert(0) += n;
            self.total += n;
        }
    }

    pub fn merge(&mut self, other: &ObservationCounts) {
        for (&z, &n) in &other.counts {
            self.add(z, n);
        }
    }

    pub fn count(&self, z: Observation) -> u64 {
        self.counts.get(&z).copied().unwrap_or(0)
    }

    /// Sum of counts of observations satisfying `pred`.
    pub fn count_set<F: FnMut(Observation) -> bool>(&self, mut pred: F) -> u64 {
        self.counts.iter().filter(|(&z, _)| pred(z)).map(|(_, &n)| n).sum()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (Observation, u64)> + '_ {
        self.counts.iter().map(|(&z, &n)| (z, n))
    }
}

impl FromIterator<Observation> for ObservationCounts {
    fn from_iter<I: IntoIterator<Item = Observation>>(iter: I) -> Self {
        let mut c = Self::default();
        for z in iter {
            c.add(z, 1);
        }
        c
    }
}
