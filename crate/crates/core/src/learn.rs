//! Estimators for an unknown missingness function.
//!
//! - AMCAR pools indicator-vector counts over all states.
//! - AsMAR keys the counts by the state's values on the always-observed
//!   features, so states that agree there share a row.
//! - AIMI estimates each feature's missing probability separately, from
//!   observations that agree with the state on every conditioning feature,
//!   and multiplies the marginals.
//!
//! Every counter cell receives an additive `κ`, including the cells that
//! make up the denominator. Counting works on real-valued weights so the
//! same code computes population-level (infinite data) fixed points.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::mgraph::MGraph;
use crate::model::{FeatureSpace, Indicator, MissMdp, MissingnessTable, Observation, StateId, ZERO_TOL};
use crate::simulate::ObservationCounts;

pub const DEFAULT_KAPPA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Amcar,
    Asmar,
    Aimi,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Amcar => "amcar",
            Algorithm::Asmar => "asmar",
            Algorithm::Aimi => "aimi",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "amcar" => Some(Algorithm::Amcar),
            "asmar" => Some(Algorithm::Asmar),
            "aimi" => Some(Algorithm::Aimi),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Extra structure AIMI may exploit to merge counters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum AimiKnowledge {
    /// Condition each feature on all other features.
    #[default]
    None,
    /// Condition each indicator on its S-parents only.
    Graph(MGraph),
    /// Drop every feature that was seen missing from the conditioning sets.
    SimpleMar,
    /// No conditioning at all.
    Mcar,
}

/// Learner choice and its knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub algorithm: Algorithm,
    pub kappa: f64,
    /// AsMAR: replaces the estimated always-observed set as conditioning set.
    pub always_override: Option<Vec<usize>>,
    pub knowledge: AimiKnowledge,
}

impl LearnerSpec {
    pub fn new(algorithm: Algorithm) -> Self {
        Self { algorithm, kappa: DEFAULT_KAPPA, always_override: None, knowledge: AimiKnowledge::None }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }
}

/// Counters sharing one conditioning key.
#[derive(Debug, Clone, PartialEq)]
pub struct CountGroup {
    /// AIMI: the feature whose missingness is counted.
    pub feature: Option<usize>,
    /// Conditioning key: the observed features form the conditioning set.
    pub key: Observation,
    /// AMCAR/AsMAR: indexed by indicator bits (`2^n` cells).
    /// AIMI: `[missing, observed]`.
    pub outcomes: Vec<f64>,
}

impl CountGroup {
    pub fn total(&self) -> f64 {
        self.outcomes.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub algorithm: Algorithm,
    pub n_features: usize,
    pub groups: Vec<CountGroup>,
}

impl CountTable {
    /// Pooled count per indicator vector, summed over all groups.
    pub fn pooled_indicator_counts(&self) -> Vec<f64> {
        let mut out = vec![0.0; 1 << self.n_features];
        if self.algorithm != Algorithm::Aimi {
            for g in &self.groups {
                for (o, c) in out.iter_mut().zip(&g.outcomes) {
                    *o += c;
                }
            }
        }
        out
    }

    /// Number of certifiable `(group, outcome)` keys. A two-outcome group
    /// is a single Bernoulli process and counts once.
    pub fn key_count(&self) -> usize {
        self.groups.iter().map(|g| if g.outcomes.len() == 2 { 1 } else { g.outcomes.len() }).sum()
    }
}

/// Learned table with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedMissingness {
    pub table: MissingnessTable,
    pub algorithm: Algorithm,
    pub kappa: f64,
    pub dataset_size: u64,
    /// `Î_always` estimated from the data (zero-based).
    pub always: Vec<usize>,
    /// Reachable states whose row rests on at least one empty counter group.
    pub unvisited: Vec<StateId>,
    pub counts: CountTable,
}

/// `Î_always` for weighted observations.
pub fn estimate_always_from_weights(n_features: usize, weights: &[(Observation, f64)]) -> Vec<usize> {
    (0..n_features).filter(|&i| !weights.iter().any(|&(z, w)| w > 0.0 && z.is_missing(i))).collect()
}

/// Features never seen missing in the data.
pub fn estimate_always_observed(n_features: usize, counts: &ObservationCounts) -> Vec<usize> {
    (0..n_features).filter(|&i| counts.iter().all(|(z, _)| !z.is_missing(i))).collect()
}

fn weights_of(counts: &ObservationCounts) -> Vec<(Observation, f64)> {
    counts.iter().map(|(z, n)| (z, n as f64)).collect()
}

/// Restricts an observation to `mask`; `None` unless every feature in the
/// mask is observed.
fn project(features: &FeatureSpace, z: Observation, mask: Indicator) -> Option<Observation> {
    (z.indicator().bits() & mask.bits() == mask.bits()).then(|| features.apply_indicator(z.masked_state(), mask))
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa >= 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("kappa must be a finite value >= 0, got {kappa}")))
    }
}

/// Runs a learner on dataset counts.
pub fn learn(model: &MissMdp, counts: &ObservationCounts, spec: &LearnerSpec) -> Result<LearnedMissingness> {
    learn_weighted(model, &weights_of(counts), spec, counts.total())
}

/// Runs a learner on arbitrary non-negative observation weights.
pub fn learn_weighted(
    model: &MissMdp,
    weights: &[(Observation, f64)],
    spec: &LearnerSpec,
    dataset_size: u64,
) -> Result<LearnedMissingness> {
    check_kappa(spec.kappa)?;
    let n = model.features().len();
    let always = estimate_always_from_weights(n, weights);
    let (table, counts, unvisited) = match spec.algorithm {
        Algorithm::Amcar => keyed_by_indicator(model, weights, spec.kappa, Indicator(0), Algorithm::Amcar)?,
        Algorithm::Asmar => {
            let conditioning = spec.always_override.clone().unwrap_or_else(|| always.clone());
            if let Some(&i) = conditioning.iter().find(|&&i| i >= n) {
                return Err(Error::InvalidArgument(format!("feature {} out of range", i + 1)));
            }
            let mask = Indicator::from_observed(conditioning);
            keyed_by_indicator(model, weights, spec.kappa, mask, Algorithm::Asmar)?
        }
        Algorithm::Aimi => {
            let masks = aimi_conditioning(n, &spec.knowledge, &always)?;
            per_feature_product(model, weights, spec.kappa, &masks)?
        }
    };
    Ok(LearnedMissingness {
        table,
        algorithm: spec.algorithm,
        kappa: spec.kappa,
        dataset_size,
        always,
        unvisited,
        counts,
    })
}

pub fn learn_amcar(model: &MissMdp, counts: &ObservationCounts, kappa: f64) -> Result<LearnedMissingness> {
    learn(model, counts, &LearnerSpec::new(Algorithm::Amcar).with_kappa(kappa))
}

pub fn learn_asmar(
    model: &MissMdp,
    counts: &ObservationCounts,
    kappa: f64,
    override_always: Option<&[usize]>,
) -> Result<LearnedMissingness> {
    let mut spec = LearnerSpec::new(Algorithm::Asmar).with_kappa(kappa);
    spec.always_override = override_always.map(<[usize]>::to_vec);
    learn(model, counts, &spec)
}

pub fn learn_aimi(
    model: &MissMdp,
    counts: &ObservationCounts,
    kappa: f64,
    knowledge: &AimiKnowledge,
) -> Result<LearnedMissingness> {
    let mut spec = LearnerSpec::new(Algorithm::Aimi).with_kappa(kappa);
    spec.knowledge = knowledge.clone();
    learn(model, counts, &spec)
}

/// `M̂(z | s)` through the indicator table; zero when `z` is not admittable.
pub fn observation_probability(features: &FeatureSpace, table: &MissingnessTable, z: Observation, s: StateId) -> f64 {
    table.observation_probability(features, z, s)
}

/// Per-feature conditioning masks for AIMI.
pub fn aimi_conditioning(n: usize, knowledge: &AimiKnowledge, always: &[usize]) -> Result<Vec<Indicator>> {
    let all = Indicator::all_observed(n);
    let masks = match knowledge {
        AimiKnowledge::None => (0..n).map(|i| all.with(i, false)).collect(),
        AimiKnowledge::Mcar => vec![Indicator(0); n],
        AimiKnowledge::SimpleMar => {
            let keep = Indicator::from_observed(always.iter().copied());
            (0..n).map(|i| keep.with(i, false)).collect()
        }
        AimiKnowledge::Graph(g) => {
            if g.n_features() != n {
                return Err(Error::InvalidGraph(format!("graph has {} features, model has {n}", g.n_features())));
            }
            let flags = g.implied_learner_assumptions();
            if !flags.indicators_independent {
                return Err(Error::AssumptionViolated("graph declares dependent indicators".into()));
            }
            if !flags.self_censoring.is_empty() {
                return Err(Error::AssumptionViolated("graph declares self-censoring".into()));
            }
            (0..n)
                .map(|i| {
                    if g.has_indicator(i) {
                        g.parents_of_indicator(i).map(Indicator::from_observed)
                    } else {
                        Ok(Indicator(0))
                    }
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(masks)
}

type Learned = (MissingnessTable, CountTable, Vec<StateId>);

/// AMCAR (empty mask) and AsMAR: one distribution over indicator vectors per
/// conditioning key.
fn keyed_by_indicator(
    model: &MissMdp,
    weights: &[(Observation, f64)],
    kappa: f64,
    mask: Indicator,
    algorithm: Algorithm,
) -> Result<Learned> {
    let features = model.features();
    let n = features.len();
    let cells = 1usize << n;
    let mut groups: BTreeMap<Observation, Vec<f64>> = BTreeMap::new();
    for &(z, w) in weights {
        if w <= 0.0 {
            continue;
        }
        if let Some(key) = project(features, z, mask) {
            groups.entry(key).or_insert_with(|| vec![0.0; cells])[z.indicator().bits() as usize] += w;
        }
    }
    for &s in model.reachable() {
        groups.entry(features.apply_indicator(s, mask)).or_insert_with(|| vec![0.0; cells]);
    }

    let mut rows: BTreeMap<Observation, Vec<(Indicator, f64)>> = BTreeMap::new();
    for (key, outcomes) in &groups {
        let denom: f64 = outcomes.iter().sum::<f64>() + kappa * cells as f64;
        if denom <= 0.0 {
            continue;
        }
        let row = outcomes
            .iter()
            .enumerate()
            .map(|(bits, &c)| (Indicator(bits as u32), (c + kappa) / denom))
            .filter(|&(_, p)| p > 0.0)
            .collect();
        rows.insert(*key, row);
    }

    let mut table = MissingnessTable::empty(n, features.n_states());
    let mut unvisited = Vec::new();
    for &s in model.reachable() {
        let key = features.apply_indicator(s, mask);
        if groups[&key].iter().sum::<f64>() <= 0.0 {
            unvisited.push(s);
        }
        let row = rows.get(&key).ok_or(Error::EmptyCounts)?;
        table.set_row(s, row.clone());
    }
    let counts = CountTable {
        algorithm,
        n_features: n,
        groups: groups.into_iter().map(|(key, outcomes)| CountGroup { feature: None, key, outcomes }).collect(),
    };
    Ok((table, counts, unvisited))
}

/// AIMI: per-feature missing probabilities multiplied into a full row.
fn per_feature_product(
    model: &MissMdp,
    weights: &[(Observation, f64)],
    kappa: f64,
    masks: &[Indicator],
) -> Result<Learned> {
    let features = model.features();
    let n = features.len();
    let mut groups: Vec<BTreeMap<Observation, [f64; 2]>> = vec![BTreeMap::new(); n];
    for &(z, w) in weights {
        if w <= 0.0 {
            continue;
        }
        for (i, &mask) in masks.iter().enumerate() {
            if let Some(key) = project(features, z, mask) {
                groups[i].entry(key).or_insert([0.0; 2])[z.indicator().observed(i) as usize] += w;
            }
        }
    }
    for &s in model.reachable() {
        for (i, &mask) in masks.iter().enumerate() {
            groups[i].entry(features.apply_indicator(s, mask)).or_insert([0.0; 2]);
        }
    }

    let mut table = MissingnessTable::empty(n, features.n_states());
    let mut unvisited = Vec::new();
    let mut marginals = vec![[0.0f64; 2]; n];
    for &s in model.reachable() {
        let mut empty = false;
        for (i, &mask) in masks.iter().enumerate() {
            let c = groups[i][&features.apply_indicator(s, mask)];
            let denom = c[0] + c[1] + 2.0 * kappa;
            if denom <= 0.0 {
                return Err(Error::EmptyCounts);
            }
            empty |= c[0] + c[1] <= 0.0;
            marginals[i] = [(c[0] + kappa) / denom, (c[1] + kappa) / denom];
        }
        if empty {
            unvisited.push(s);
        }
        let row = features
            .indicators()
            .map(|r| (r, (0..n).map(|i| marginals[i][r.observed(i) as usize]).product::<f64>()))
            .filter(|&(_, p)| p > ZERO_TOL)
            .collect();
        table.set_row(s, row);
    }
    let counts = CountTable {
        algorithm: Algorithm::Aimi,
        n_features: n,
        groups: groups
            .into_iter()
            .enumerate()
            .flat_map(|(i, g)| {
                g.into_iter().map(move |(key, c)| CountGroup { feature: Some(i), key, outcomes: c.to_vec() })
            })
            .collect(),
    };
    Ok((table, counts, unvisited))
}

/// Expected observation weights when states are visited with frequencies
/// `occupancy` and observed through `truth`.
pub fn expected_observation_weights(
    features: &FeatureSpace,
    truth: &MissingnessTable,
    occupancy: &[(StateId, f64)],
) -> Vec<(Observation, f64)> {
    let mut acc: BTreeMap<Observation, f64> = BTreeMap::new();
    for &(s, w) in occupancy {
        for &(r, p) in truth.row(s) {
            *acc.entry(features.apply_indicator(s, r)).or_insert(0.0) += w * p;
        }
    }
    acc.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MissMdpBuilder;

    fn fs() -> FeatureSpace {
        FeatureSpace::new(vec![2, 2]).unwrap()
    }

    fn model() -> MissMdp {
        let fs = fs();
        let mut b = MissMdpBuilder::new(fs.clone(), 1, 0.9);
        for s in 0..4 {
            b.transition(s, 0, (s + 1) % 4, 1.0);
        }
        b.initial(0, 1.0);
        b.build().unwrap()
    }

    fn bits(text: &str) -> Indicator {
        Indicator::parse_bits(text, 2).unwrap()
    }

    fn obs(entries: [Option<u32>; 2]) -> Observation {
        fs().observation(&entries).unwrap()
    }

    #[test]
    fn amcar_ratio() {
        let mut c = ObservationCounts::default();
        c.add(obs([Some(0), Some(1)]), 5);
        c.add(obs([Some(1), None]), 5);
        let m = learn_amcar(&model(), &c, 0.0).unwrap();
        for s in 0..4 {
            assert_eq!(m.table.prob(s, bits("11")), 0.5);
            assert_eq!(m.table.prob(s, bits("10")), 0.5);
        }
    }

    #[test]
    fn amcar_smoothing_only_is_uniform() {
        let m = learn_amcar(&model(), &ObservationCounts::default(), 1.0).unwrap();
        assert_eq!(m.table.row(0).len(), 4);
        assert!(m.table.row(0).iter().all(|&(_, p)| p == 0.25));
        assert_eq!(learn_amcar(&model(), &ObservationCounts::default(), 0.0), Err(Error::EmptyCounts));
    }

    #[test]
    fn asmar_ratio_per_key() {
        let mut c = ObservationCounts::default();
        c.add(obs([Some(0), Some(1)]), 3);
        c.add(obs([None, Some(1)]), 1);
        c.add(obs([Some(0), Some(0)]), 2);
        let m = learn_asmar(&model(), &c, 0.0, None).unwrap();
        assert_eq!(m.always, vec![1]);
        let s01 = fs().encode(&[0, 1]).unwrap();
        let s11 = fs().encode(&[1, 1]).unwrap();
        assert_eq!(m.table.prob(s01, bits("11")), 0.75);
        assert_eq!(m.table.prob(s11, bits("01")), 0.25);
        assert_eq!(m.table.prob(0, bits("11")), 1.0);
    }

    #[test]
    fn aimi_product_of_marginals() {
        // Feature 1 conditioned on s_2 = 1: missing 2, observed 6.
        // Feature 2 conditioned on s_1 = 0: missing 1, observed 3.
        let mut c = ObservationCounts::default();
        c.add(obs([None, Some(1)]), 2);
        c.add(obs([Some(0), Some(1)]), 3);
        c.add(obs([Some(1), Some(1)]), 3);
        c.add(obs([Some(0), None]), 1);
        c.add(obs([Some(1), Some(0)]), 1);
        let m = learn_aimi(&model(), &c, 0.0, &AimiKnowledge::None).unwrap();
        let s = fs().encode(&[0, 1]).unwrap();
        let z = fs().apply_indicator(s, bits("01"));
        assert!((observation_probability(&fs(), &m.table, z, s) - 0.1875).abs() < 1e-12);
    }

    #[test]
    fn never_missing_data_gives_identity() {
        let c: ObservationCounts = (0..4).map(|s| fs().apply_indicator(s, bits("11"))).collect();
        for m in [
            learn_asmar(&model(), &c, 0.0, None).unwrap(),
            learn_aimi(&model(), &c, 0.0, &AimiKnowledge::None).unwrap(),
        ] {
            for s in 0..4 {
                assert_eq!(m.table.row(s), &[(bits("11"), 1.0)]);
            }
        }
    }

    #[test]
    fn aimi_rejects_unsuitable_graphs() {
        let g = crate::mgraph::parse_mgraph("n 2\nedge R1 R2").unwrap();
        let c: ObservationCounts = [obs([Some(0), Some(0)])].into_iter().collect();
        assert!(matches!(learn_aimi(&model(), &c, 0.1, &AimiKnowledge::Graph(g)), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn unvisited_keys_are_flagged() {
        let c: ObservationCounts = [obs([Some(0), Some(0)])].into_iter().collect();
        let m = learn_asmar(&model(), &c, 0.1, None).unwrap();
        assert_eq!(m.unvisited, vec![1, 2, 3]);
        assert!(m.table.row(1).iter().all(|&(_, p)| (p - 0.25).abs() < 1e-12));
    }
}
