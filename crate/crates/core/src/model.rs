//! Miss-MDPs, observations with missing features and missingness tables.
//!
//! States are dense ids with a mixed-radix bijection to feature-value
//! vectors (the last feature varies fastest). An observation is stored as the
//! pair (indicator vector, id of the state with every missing feature zeroed),
//! which makes it `Copy`, totally ordered and cheap to hash into counters.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::error::{Error, Result};

/// Dense state index in `[0, ∏ domains)`.
pub type StateId = usize;

/// Upper limit on the number of features; indicator vectors are 32-bit masks
/// and several learners enumerate all `2^n` of them.
pub const MAX_FEATURES: usize = 16;

/// Row sums must be within this distance of one.
pub const SUM_TOL: f64 = 1e-9;

/// Probabilities at or below this are treated as exact zeros.
pub const ZERO_TOL: f64 = 1e-15;

/// Factored state space: one integer domain per feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpace {
    domains: Vec<u32>,
    strides: Vec<usize>,
    n_states: usize,
}

impl FeatureSpace {
    pub fn new(domains: Vec<u32>) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::FeatureSpace("at least one feature is required".into()));
        }
        if domains.len() > MAX_FEATURES {
            return Err(Error::FeatureSpace(format!("at most {MAX_FEATURES} features are supported")));
        }
        if let Some(i) = domains.iter().position(|&d| d == 0) {
            return Err(Error::FeatureSpace(format!("feature {} has an empty domain", i + 1)));
        }
        let mut strides = vec![0usize; domains.len()];
        let mut acc: usize = 1;
        for i in (0..domains.len()).rev() {
            strides[i] = acc;
            acc = acc
                .checked_mul(domains[i] as usize)
                .filter(|&n| n <= u32::MAX as usize)
                .ok_or_else(|| Error::FeatureSpace("state space too large".into()))?;
        }
        Ok(Self { domains, strides, n_states: acc })
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn domains(&self) -> &[u32] {
        &self.domains
    }

    pub fn domain(&self, feature: usize) -> u32 {
        self.domains[feature]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Indicator with every feature observed.
    pub fn full_indicator(&self) -> Indicator {
        Indicator::all_observed(self.len())
    }

    /// All `2^n` indicator vectors in increasing bit order.
    pub fn indicators(&self) -> impl Iterator<Item = Indicator> {
        (0u32..(1u32 << self.len())).map(Indicator)
    }

    pub fn encode(&self, values: &[u32]) -> Result<StateId> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: values.len() });
        }
        let mut id = 0;
        for (i, &v) in values.iter().enumerate() {
            if v >= self.domains[i] {
                return Err(Error::ValueOutOfRange { feature: i, value: v, domain: self.domains[i] });
            }
            id += v as usize * self.strides[i];
        }
        Ok(id)
    }

    pub fn decode(&self, s: StateId) -> Vec<u32> {
        (0..self.len()).map(|i| self.value(s, i)).collect()
    }

    /// Value of feature `i` in state `s`.
    #[inline]
    pub fn value(&self, s: StateId, i: usize) -> u32 {
        ((s / self.strides[i]) % self.domains[i] as usize) as u32
    }

    /// The observation that reveals exactly the features set in `r`.
    pub fn apply_indicator(&self, s: StateId, r: Indicator) -> Observation {
        let mut masked = s;
        for i in 0..self.len() {
            if !r.observed(i) {
                masked -= self.value(s, i) as usize * self.strides[i];
            }
        }
        Observation { indicator: r, masked }
    }

    /// `z ⪯ s`: every non-missing entry of `z` agrees with `s`.
    pub fn admits(&self, z: Observation, s: StateId) -> bool {
        self.apply_indicator(s, z.indicator).masked == z.masked
    }

    /// Builds an observation from per-feature entries (`None` = missing).
    pub fn observation(&self, entries: &[Option<u32>]) -> Result<Observation> {
        if entries.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: entries.len() });
        }
        let mut bits = 0u32;
        let mut masked = 0usize;
        for (i, e) in entries.iter().enumerate() {
            if let Some(v) = *e {
                if v >= self.domains[i] {
                    return Err(Error::ValueOutOfRange { feature: i, value: v, domain: self.domains[i] });
                }
                bits |= 1 << i;
                masked += v as usize * self.strides[i];
            }
        }
        Ok(Observation { indicator: Indicator(bits), masked })
    }

    pub fn observation_entries(&self, z: Observation) -> Vec<Option<u32>> {
        (0..self.len()).map(|i| z.indicator.observed(i).then(|| self.value(z.masked, i))).collect()
    }

    /// Checks that a state id is in range.
    pub fn check_state(&self, s: StateId) -> Result<()> {
        if s < self.n_states {
            Ok(())
        } else {
            Err(Error::StateOutOfRange(s))
        }
    }

    /// Number of formal observations `∏ (domain_i + 1)`.
    pub fn n_observations(&self) -> usize {
        self.domains.iter().map(|&d| d as usize + 1).product()
    }
}

/// Missingness indicator vector: bit `i` set means feature `i` is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Indicator(pub u32);

impl Indicator {
    pub fn all_observed(n: usize) -> Self {
        Indicator(((1u64 << n) - 1) as u32)
    }

    pub fn all_missing() -> Self {
        Indicator(0)
    }

    pub fn from_observed<I: IntoIterator<Item = usize>>(features: I) -> Self {
        Indicator(features.into_iter().fold(0, |acc, i| acc | (1 << i)))
    }

    #[inline]
    pub fn observed(self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    #[inline]
    pub fn with(self, i: usize, observed: bool) -> Self {
        if observed {
            Indicator(self.0 | (1 << i))
        } else {
            Indicator(self.0 & !(1 << i))
        }
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// `n`-character 0/1 string, first character = first feature.
    pub fn to_bit_string(self, n: usize) -> String {
        (0..n).map(|i| if self.observed(i) { '1' } else { '0' }).collect()
    }

    pub fn parse_bits(text: &str, n: usize) -> Result<Self> {
        if text.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: text.len() });
        }
        let mut r = Indicator(0);
        for (i, c) in text.chars().enumerate() {
            match c {
                '1' => r = r.with(i, true),
                '0' => {}
                _ => return Err(Error::InvalidArgument(format!("bad indicator character {c:?}"))),
            }
        }
        Ok(r)
    }
}

/// An observation: each feature is either revealed or missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Observation {
    indicator: Indicator,
    masked: StateId,
}

impl Observation {
    /// `f_R(z)`.
    pub fn indicator(self) -> Indicator {
        self.indicator
    }

    /// Id of the state agreeing with `z` on observed features and zero elsewhere.
    pub fn masked_state(self) -> StateId {
        self.masked
    }

    pub fn is_missing(self, i: usize) -> bool {
        !self.indicator.observed(i)
    }
}

/// `f_R(z)`: the indicator vector of an observation.
pub fn indicator_of(z: Observation) -> Indicator {
    z.indicator()
}

/// A miss-MDP without its missingness function: factored states, actions,
/// sparse transitions, rewards, initial distribution, discount and terminal
/// (absorbing) states.
#[derive(Debug, Clone)]
pub struct MissMdp {
    features: FeatureSpace,
    n_actions: usize,
    transitions: Vec<Vec<(StateId, f64)>>,
    rewards: Vec<f64>,
    initial: Vec<(StateId, f64)>,
    gamma: f64,
    terminal: Vec<bool>,
    reachable: Vec<StateId>,
    reachable_mask: Vec<bool>,
}

impl MissMdp {
    pub fn features(&self) -> &FeatureSpace {
        &self.features
    }

    pub fn n_states(&self) -> usize {
        self.features.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Successor distribution of `(s, a)`; empty when the row is undefined.
    #[inline]
    pub fn transition(&self, s: StateId, a: usize) -> &[(StateId, f64)] {
        &self.transitions[s * self.n_actions + a]
    }

    #[inline]
    pub fn reward(&self, s: StateId, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    /// Initial distribution `μ`, sorted by state.
    pub fn initial(&self) -> &[(StateId, f64)] {
        &self.initial
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.terminal.iter().enumerate().filter(|(_, &t)| t).map(|(s, _)| s)
    }

    /// States reachable from `supp(μ)`, in increasing order.
    pub fn reachable(&self) -> &[StateId] {
        &self.reachable
    }

    pub fn is_reachable(&self, s: StateId) -> bool {
        self.reachable_mask[s]
    }

    /// `max |ρ(s, a)|` over reachable states; the bound used for horizons.
    pub fn reward_bound(&self) -> f64 {
        self.reachable
            .iter()
            .flat_map(|&s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| libm::fabs(self.reward(s, a)))
            .fold(0.0, f64::max)
    }

    /// Reward range `(min, max)` over reachable state-action pairs.
    pub fn reward_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &self.reachable {
            for a in 0..self.n_actions {
                let r = self.reward(s, a);
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        (lo, hi)
    }
}

/// Incremental constructor for [`MissMdp`].
#[derive(Debug, Clone)]
pub struct MissMdpBuilder {
    features: FeatureSpace,
    n_actions: usize,
    gamma: f64,
    transitions: BTreeMap<(StateId, usize), BTreeMap<StateId, f64>>,
    rewards: BTreeMap<(StateId, usize), f64>,
    initial: BTreeMap<StateId, f64>,
    terminal: BTreeSet<StateId>,
}

impl MissMdpBuilder {
    pub fn new(features: FeatureSpace, n_actions: usize, gamma: f64) -> Self {
        Self {
            features,
            n_actions,
            gamma,
            transitions: BTreeMap::new(),
            rewards: BTreeMap::new(),
            initial: BTreeMap::new(),
            terminal: BTreeSet::new(),
        }
    }

    /// Adds `p` to `T(next | s, a)`.
    pub fn transition(&mut self, s: StateId, a: usize, next: StateId, p: f64) -> &mut Self {
        *self.transitions.entry((s, a)).or_default().entry(next).or_insert(0.0) += p;
        self
    }

    pub fn reward(&mut self, s: StateId, a: usize, v: f64) -> &mut Self {
        self.rewards.insert((s, a), v);
        self
    }

    /// Adds `p` to `μ(s)`.
    pub fn initial(&mut self, s: StateId, p: f64) -> &mut Self {
        *self.initial.entry(s).or_insert(0.0) += p;
        self
    }

    pub fn terminal(&mut self, s: StateId) -> &mut Self {
        self.terminal.insert(s);
        self
    }

    /// Checks index ranges and the discount, then freezes the model and
    /// computes the reachable set by breadth-first search from `supp(μ)`.
    /// Distribution-level checks live in [`validate_model`].
    pub fn build(&self) -> Result<MissMdp> {
        let n = self.features.n_states();
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidModel(format!("discount {} not in [0, 1)", self.gamma)));
        }
        if self.n_actions == 0 {
            return Err(Error::InvalidModel("at least one action is required".into()));
        }
        let mut transitions = vec![Vec::new(); n * self.n_actions];
        for (&(s, a), row) in &self.transitions {
            self.features.check_state(s)?;
            if a >= self.n_actions {
                return Err(Error::ActionOutOfRange(a));
            }
            let mut out = Vec::with_capacity(row.len());
            for (&next, &p) in row {
                self.features.check_state(next)?;
                if p != 0.0 {
                    out.push((next, p));
                }
            }
            transitions[s * self.n_actions + a] = out;
        }
        let mut rewards = vec![0.0; n * self.n_actions];
        for (&(s, a), &v) in &self.rewards {
            self.features.check_state(s)?;
            if a >= self.n_actions {
                return Err(Error::ActionOutOfRange(a));
            }
            rewards[s * self.n_actions + a] = v;
        }
        let mut initial = Vec::new();
        for (&s, &p) in &self.initial {
            self.features.check_state(s)?;
            if p != 0.0 {
                initial.push((s, p));
            }
        }
        let mut terminal = vec![false; n];
        for &s in &self.terminal {
            self.features.check_state(s)?;
            terminal[s] = true;
        }

        let mut reachable_mask = vec![false; n];
        let mut queue = VecDeque::new();
        for &(s, p) in &initial {
            if p > ZERO_TOL && !reachable_mask[s] {
                reachable_mask[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            for a in 0..self.n_actions {
                for &(next, p) in &transitions[s * self.n_actions + a] {
                    if p > ZERO_TOL && !reachable_mask[next] {
                        reachable_mask[next] = true;
                        queue.push_back(next);
                    }
                }
            }
        }
        let reachable = (0..n).filter(|&s| reachable_mask[s]).collect();

        Ok(MissMdp {
            features: self.features.clone(),
            n_actions: self.n_actions,
            transitions,
            rewards,
            initial,
            gamma: self.gamma,
            terminal,
            reachable,
            reachable_mask,
        })
    }
}

/// Missingness function stored per state as a distribution over indicator
/// vectors. Observation probabilities follow through [`FeatureSpace::apply_indicator`],
/// so every supported observation is admittable by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessTable {
    n_features: usize,
    rows: Vec<Vec<(Indicator, f64)>>,
}

impl MissingnessTable {
    /// Table with one empty row per state.
    pub fn empty(n_features: usize, n_states: usize) -> Self {
        Self { n_features, rows: vec![Vec::new(); n_states] }
    }

    /// Builds a table by evaluating `row` for every state.
    pub fn from_fn<F>(features: &FeatureSpace, mut row: F) -> Self
    where
        F: FnMut(StateId) -> Vec<(Indicator, f64)>,
    {
        let mut table = Self::empty(features.len(), features.n_states());
        for s in 0..features.n_states() {
            table.set_row(s, row(s));
        }
        table
    }

    /// Same row for every state.
    pub fn constant(features: &FeatureSpace, row: &[(Indicator, f64)]) -> Self {
        Self::from_fn(features, |_| row.to_vec())
    }

    /// Replaces the row of `s`; duplicate indicators are summed and exact
    /// zeros dropped.
    pub fn set_row(&mut self, s: StateId, entries: Vec<(Indicator, f64)>) {
        let mut merged: BTreeMap<Indicator, f64> = BTreeMap::new();
        for (r, p) in entries {
            *merged.entry(r).or_insert(0.0) += p;
        }
        self.rows[s] = merged.into_iter().filter(|&(_, p)| p != 0.0).collect();
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, s: StateId) -> &[(Indicator, f64)] {
        &self.rows[s]
    }

    pub fn has_row(&self, s: StateId) -> bool {
        !self.rows[s].is_empty()
    }

    /// `M(r | s)`.
    #[inline]
    pub fn prob(&self, s: StateId, r: Indicator) -> f64 {
        self.rows[s].iter().find(|(q, _)| *q == r).map_or(0.0, |&(_, p)| p)
    }

    /// `M(z | s)`: zero unless `z ⪯ s`.
    pub fn observation_probability(&self, features: &FeatureSpace, z: Observation, s: StateId) -> f64 {
        if features.admits(z, s) {
            self.prob(s, z.indicator())
        } else {
            0.0
        }
    }

    /// `P(z_i = ⊥ | z ~ M(s))`.
    pub fn missing_probability(&self, s: StateId, i: usize) -> f64 {
        self.rows[s].iter().filter(|(r, _)| !r.observed(i)).map(|&(_, p)| p).sum()
    }

    /// States that carry a row.
    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.rows.len()).filter(|&s| !self.rows[s].is_empty())
    }

    /// Union of the supports of all rows.
    pub fn used_indicators(&self) -> BTreeSet<Indicator> {
        self.rows.iter().flatten().filter(|(_, p)| *p > ZERO_TOL).map(|&(r, _)| r).collect()
    }
}

/// Builds a table from explicit `(state, observation, probability)` entries,
/// rejecting observations that the state cannot emit.
pub fn missingness_from_observations(
    features: &FeatureSpace,
    entries: &[(StateId, Observation, f64)],
) -> core::result::Result<MissingnessTable, Vec<Violation>> {
    let mut violations = Vec::new();
    let mut rows: Vec<Vec<(Indicator, f64)>> = vec![Vec::new(); features.n_states()];
    for &(s, z, p) in entries {
        if s >= features.n_states() {
            violations.push(Violation::StateOutOfRange { state: s });
        } else if p > ZERO_TOL && !features.admits(z, s) {
            violations.push(Violation::NonAdmittable { state: s, indicator: z.indicator() });
        } else {
            rows[s].push((z.indicator(), p));
        }
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    let mut table = MissingnessTable::empty(features.len(), features.n_states());
    for (s, row) in rows.into_iter().enumerate() {
        table.set_row(s, row);
    }
    Ok(table)
}

/// One broken invariant found by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("T(. | {state}, {action}) sums to {sum}")]
    TransitionRowSum { state: StateId, action: usize, sum: f64 },
    #[error("reachable state {state} has no transition row for action {action}")]
    MissingTransitionRow { state: StateId, action: usize },
    #[error("negative probability {value} in {context}")]
    NegativeProbability { context: String, value: f64 },
    #[error("initial distribution sums to {0}")]
    InitialSum(f64),
    #[error("missingness row of state {state} sums to {sum}")]
    MissingnessRowSum { state: StateId, sum: f64 },
    #[error("reachable state {state} has no missingness row")]
    MissingMissingnessRow { state: StateId },
    #[error("missingness row of state {state} supports a non-admittable observation")]
    NonAdmittable { state: StateId, indicator: Indicator },
    #[error("state {state} out of range")]
    StateOutOfRange { state: StateId },
    #[error("missingness table covers {table} states, model has {model}")]
    TableSize { table: usize, model: usize },
    #[error("missingness table has {table} features, model has {model}")]
    TableFeatures { table: usize, model: usize },
    #[error("terminal state {state} is not absorbing with zero reward")]
    TerminalNotAbsorbing { state: StateId },
}

/// Checks every distribution invariant of a model and its missingness table.
pub fn validate_model(model: &MissMdp, table: &MissingnessTable) -> core::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let init_sum: f64 = model.initial().iter().map(|&(_, p)| p).sum();
    for &(s, p) in model.initial() {
        if p < 0.0 {
            out.push(Violation::NegativeProbability { context: format!("mu({s})"), value: p });
        }
    }
    if libm::fabs(init_sum - 1.0) > SUM_TOL {
        out.push(Violation::InitialSum(init_sum));
    }
    for &s in model.reachable() {
        for a in 0..model.n_actions() {
            let row = model.transition(s, a);
            if row.is_empty() {
                out.push(Violation::MissingTransitionRow { state: s, action: a });
                continue;
            }
            let mut sum = 0.0;
            for &(next, p) in row {
                if p < 0.0 {
                    out.push(Violation::NegativeProbability { context: format!("T({next} | {s}, {a})"), value: p });
                }
                sum += p;
            }
            if libm::fabs(sum - 1.0) > SUM_TOL {
                out.push(Violation::TransitionRowSum { state: s, action: a, sum });
            }
        }
        if model.is_terminal(s) {
            let absorbing = (0..model.n_actions()).all(|a| {
                let row = model.transition(s, a);
                row.len() == 1 && row[0].0 == s && model.reward(s, a) == 0.0
            });
            if !absorbing {
                out.push(Violation::TerminalNotAbsorbing { state: s });
            }
        }
    }
    if table.n_states() != model.n_states() {
        out.push(Violation::TableSize { table: table.n_states(), model: model.n_states() });
        return Err(out);
    }
    if table.n_features() != model.features().len() {
        out.push(Violation::TableFeatures { table: table.n_features(), model: model.features().len() });
        return Err(out);
    }
    let full = model.features().full_indicator();
    for s in 0..table.n_states() {
        let row = table.row(s);
        if row.is_empty() {
            if model.is_reachable(s) {
                out.push(Violation::MissingMissingnessRow { state: s });
            }
            continue;
        }
        let mut sum = 0.0;
        for &(r, p) in row {
            if p < 0.0 {
                out.push(Violation::NegativeProbability { context: format!("M({} | {s})", r.0), value: p });
            }
            if r.0 & !full.0 != 0 {
                out.push(Violation::NonAdmittable { state: s, indicator: r });
            }
            sum += p;
        }
        if libm::fabs(sum - 1.0) > SUM_TOL {
            out.push(Violation::MissingnessRowSum { state: s, sum });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// `I_always`: features that no row ever drops.
pub fn always_observed_indices(table: &MissingnessTable) -> Vec<usize> {
    (0..table.n_features()).filter(|&i| table.states().all(|s| table.missing_probability(s, i) <= ZERO_TOL)).collect()
}

/// Missingness types, ordered from most to least restrictive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MissingnessKind {
    Mcar,
    SimpleMar,
    Mar,
    Mnar,
}

impl fmt::Display for MissingnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MissingnessKind::Mcar => "MCAR",
            MissingnessKind::SimpleMar => "SimpleMAR",
            MissingnessKind::Mar => "MAR",
            MissingnessKind::Mnar => "MNAR",
        })
    }
}

/// Exact classification of an explicit table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingnessClass {
    pub kind: MissingnessKind,
    /// Zero-based features whose own value changes their missing probability.
    pub self_censoring: Vec<usize>,
}

const CLASS_TOL: f64 = 1e-9;

fn rows_agree(a: &[(Indicator, f64)], b: &[(Indicator, f64)]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let (pa, pb) = match (a.get(i), b.get(j)) {
            (Some(&(ra, pa)), Some(&(rb, pb))) if ra == rb => {
                i += 1;
                j += 1;
                (pa, pb)
            }
            (Some(&(ra, pa)), Some(&(rb, _))) if ra < rb => {
                i += 1;
                (pa, 0.0)
            }
            (Some(&(_, pa)), None) => {
                i += 1;
                (pa, 0.0)
            }
            (_, Some(&(_, pb))) => {
                j += 1;
                (0.0, pb)
            }
            (None, None) => unreachable!(),
        };
        if libm::fabs(pa - pb) > CLASS_TOL {
            return false;
        }
    }
    true
}

/// Groups states (that carry a row) by the observation `apply_indicator(s, mask)`
/// and checks that `value(s)` is constant inside every group.
pub(crate) fn constant_within_groups<F>(
    features: &FeatureSpace,
    table: &MissingnessTable,
    mask: Indicator,
    mut value: F,
) -> bool
where
    F: FnMut(StateId) -> f64,
{
    let mut seen: BTreeMap<StateId, f64> = BTreeMap::new();
    for s in table.states() {
        let key = features.apply_indicator(s, mask).masked_state();
        let v = value(s);
        match seen.get(&key) {
            Some(&w) if libm::fabs(v - w) > CLASS_TOL => return false,
            Some(_) => {}
            None => {
                seen.insert(key, v);
            }
        }
    }
    true
}

/// MCAR check: every indicator has the same probability in every state.
pub fn is_mcar(table: &MissingnessTable) -> bool {
    let mut states = table.states();
    let Some(first) = states.next() else { return true };
    let reference = table.row(first);
    states.all(|s| rows_agree(reference, table.row(s)))
}

/// Simple-MAR check: states agreeing on always-observed features share rows.
pub fn is_simple_mar(features: &FeatureSpace, table: &MissingnessTable) -> bool {
    let always = Indicator::from_observed(always_observed_indices(table));
    let mut reps: BTreeMap<StateId, StateId> = BTreeMap::new();
    for s in table.states() {
        let key = features.apply_indicator(s, always).masked_state();
        match reps.get(&key) {
            Some(&rep) => {
                if !rows_agree(table.row(rep), table.row(s)) {
                    return false;
                }
            }
            None => {
                reps.insert(key, s);
            }
        }
    }
    true
}

/// MAR check: for every indicator `r`, states agreeing on the features `r`
/// reveals give `r` the same probability.
pub fn is_mar(features: &FeatureSpace, table: &MissingnessTable) -> bool {
    table.used_indicators().into_iter().all(|r| constant_within_groups(features, table, r, |s| table.prob(s, r)))
}

/// Features `i` for which two states differing only in `i` give feature `i`
/// different missing probabilities.
pub fn self_censoring_features(features: &FeatureSpace, table: &MissingnessTable) -> Vec<usize> {
    let full = features.full_indicator();
    (0..features.len())
        .filter(|&i| !constant_within_groups(features, table, full.with(i, false), |s| table.missing_probability(s, i)))
        .collect()
}

/// Whether every row factorizes into per-feature missingness marginals.
pub fn indicators_independent(table: &MissingnessTable) -> bool {
    let n = table.n_features();
    table.states().all(|s| {
        let miss: Vec<f64> = (0..n).map(|i| table.missing_probability(s, i)).collect();
        let product =
            |r: Indicator| -> f64 { (0..n).map(|i| if r.observed(i) { 1.0 - miss[i] } else { miss[i] }).product() };
        let mut covered = 0.0;
        for &(r, p) in table.row(s) {
            let q = product(r);
            if libm::fabs(p - q) > CLASS_TOL {
                return false;
            }
            covered += q;
        }
        libm::fabs(covered - 1.0) <= 1e-9
    })
}

/// Exhaustive MCAR / simple MAR / MAR / MNAR classification.
pub fn classify_missingness(features: &FeatureSpace, table: &MissingnessTable) -> MissingnessClass {
    let kind = if is_mcar(table) {
        MissingnessKind::Mcar
    } else if is_simple_mar(features, table) {
        MissingnessKind::SimpleMar
    } else if is_mar(features, table) {
        MissingnessKind::Mar
    } else {
        MissingnessKind::Mnar
    };
    MissingnessClass { kind, self_censoring: self_censoring_features(features, table) }
}
