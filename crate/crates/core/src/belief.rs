//! Bayes filtering over miss-MDPs.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::model::{MissMdp, MissingnessTable, Observation, StateId};

/// Posterior entries below this are dropped before renormalizing.
pub const PRUNE: f64 = 1e-12;

/// Sparse distribution over states, sorted by state id.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    entries: Vec<(StateId, f64)>,
}

impl Belief {
    /// Normalizes non-negative weights; prunes entries below [`PRUNE`] of the
    /// total mass.
    pub fn from_weights(mut weights: Vec<(StateId, f64)>) -> Result<Self> {
        weights.sort_by_key(|&(s, _)| s);
        let mut merged: Vec<(StateId, f64)> = Vec::with_capacity(weights.len());
        for (s, w) in weights {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::InvalidArgument("belief weights must be finite and non-negative".into()));
            }
            match merged.last_mut() {
                Some((t, acc)) if *t == s => *acc += w,
                _ => merged.push((s, w)),
            }
        }
        let total: f64 = merged.iter().map(|&(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::ImpossibleObservation);
        }
        merged.retain(|&(_, w)| w / total >= PRUNE);
        let kept: f64 = merged.iter().map(|&(_, w)| w).sum();
        for e in &mut merged {
            e.1 /= kept;
        }
        Ok(Self { entries: merged })
    }

    pub fn point(s: StateId) -> Self {
        Self { entries: vec![(s, 1.0)] }
    }

    pub fn entries(&self) -> &[(StateId, f64)] {
        &self.entries
    }

    pub fn prob(&self, s: StateId) -> f64 {
        self.entries.binary_search_by_key(&s, |&(t, _)| t).map_or(0.0, |i| self.entries[i].1)
    }

    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.entries.iter().map(|&(s, _)| s)
    }

    /// `Σ_s b(s) v(s)` for a dense vector `v`.
    #[inline]
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.entries.iter().map(|&(s, p)| p * v[s]).sum()
    }

    pub fn l1_distance(&self, other: &Belief) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut d) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(&(s, p)), Some(&(t, q))) if s == t => {
                    d += libm::fabs(p - q);
                    i += 1;
                    j += 1;
                }
                (Some(&(s, p)), Some(&(t, _))) if s < t => {
                    d += p;
                    i += 1;
                }
                (Some(&(_, p)), None) => {
                    d += p;
                    i += 1;
                }
                (_, Some(&(_, q))) => {
                    d += q;
                    j += 1;
                }
                (None, None) => break,
            }
        }
        d
    }
}

impl fmt::Display for Belief {
    /// `s:p` pairs separated by spaces.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (s, p)) in self.entries.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}:{p}")?;
        }
        Ok(())
    }
}

/// The initial distribution `μ` as a belief.
pub fn initial_belief(model: &MissMdp) -> Result<Belief> {
    Belief::from_weights(model.initial().to_vec())
}

/// `Σ_s T(s' | s, a) b(s)` as sparse weights sorted by `s'`.
pub fn predict(model: &MissMdp, b: &Belief, a: usize) -> Vec<(StateId, f64)> {
    let mut acc: BTreeMap<StateId, f64> = BTreeMap::new();
    for &(s, p) in b.entries() {
        for &(next, t) in model.transition(s, a) {
            *acc.entry(next).or_insert(0.0) += p * t;
        }
    }
    acc.into_iter().collect()
}

/// `b'(s') ∝ M(z | s') Σ_s T(s' | s, a) b(s)`.
pub fn update(model: &MissMdp, table: &MissingnessTable, b: &Belief, a: usize, z: Observation) -> Result<Belief> {
    observe(model, table, &predict(model, b, a), z)
}

/// Update using admittability only; equal to [`update`] whenever the table is MAR.
pub fn update_ignorable(model: &MissMdp, b: &Belief, a: usize, z: Observation) -> Result<Belief> {
    observe_ignorable(model, &predict(model, b, a), z)
}

/// Conditions a prior (not necessarily normalized) on observing `z`.
pub fn observe(model: &MissMdp, table: &MissingnessTable, prior: &[(StateId, f64)], z: Observation) -> Result<Belief> {
    let features = model.features();
    let weights: Vec<_> = prior
        .iter()
        .map(|&(s, p)| (s, p * table.observation_probability(features, z, s)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    Belief::from_weights(weights)
}

pub fn observe_ignorable(model: &MissMdp, prior: &[(StateId, f64)], z: Observation) -> Result<Belief> {
    let features = model.features();
    let weights: Vec<_> = prior.iter().copied().filter(|&(s, p)| p > 0.0 && features.admits(z, s)).collect();
    Belief::from_weights(weights)
}

/// `P(z | b, a) = Σ_s b(s) Σ_s' T(s' | s, a) M(z | s')`.
pub fn obs_probability(model: &MissMdp, table: &MissingnessTable, b: &Belief, a: usize, z: Observation) -> f64 {
    let features = model.features();
    predict(model, b, a).into_iter().map(|(s, p)| p * table.observation_probability(features, z, s)).sum()
}

/// Every observation that can follow `(b, a)` with its probability and the
/// resulting posterior, sorted by observation.
pub fn successors(model: &MissMdp, table: &MissingnessTable, b: &Belief, a: usize) -> Vec<(Observation, f64, Belief)> {
    successors_of(model, table, &predict(model, b, a))
}

/// Splits a predicted state distribution by the observation it emits.
pub fn successors_of(
    model: &MissMdp,
    table: &MissingnessTable,
    predicted: &[(StateId, f64)],
) -> Vec<(Observation, f64, Belief)> {
    let features = model.features();
    let mut by_obs: BTreeMap<Observation, Vec<(StateId, f64)>> = BTreeMap::new();
    for &(s, p) in predicted {
        for &(r, q) in table.row(s) {
            let w = p * q;
            if w > 0.0 {
                by_obs.entry(features.apply_indicator(s, r)).or_default().push((s, w));
            }
        }
    }
    by_obs
        .into_iter()
        .filter_map(|(z, weights)| {
            let total: f64 = weights.iter().map(|&(_, w)| w).sum();
            Belief::from_weights(weights).ok().map(|b| (z, total, b))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureSpace, Indicator, MissMdpBuilder};

    /// Two states (one binary feature), identity dynamics.
    fn identity_model() -> MissMdp {
        let fs = FeatureSpace::new(vec![2]).unwrap();
        let mut b = MissMdpBuilder::new(fs, 1, 0.9);
        b.initial(0, 0.5).initial(1, 0.5).transition(0, 0, 0, 1.0).transition(1, 0, 1, 1.0);
        b.build().unwrap()
    }

    fn censoring_table() -> MissingnessTable {
        let mut t = MissingnessTable::empty(1, 2);
        t.set_row(0, vec![(Indicator(1), 0.5), (Indicator(0), 0.5)]);
        t.set_row(1, vec![(Indicator(0), 1.0)]);
        t
    }

    #[test]
    fn perfect_observation_gives_point_mass() {
        let m = identity_model();
        let t = MissingnessTable::constant(m.features(), &[(Indicator(1), 1.0)]);
        let b = initial_belief(&m).unwrap();
        let z = m.features().apply_indicator(0, Indicator(1));
        assert_eq!(update(&m, &t, &b, 0, z).unwrap(), Belief::point(0));
    }

    #[test]
    fn self_censoring_posterior() {
        let m = identity_model();
        let b = initial_belief(&m).unwrap();
        let z = m.features().apply_indicator(0, Indicator(0));
        let post = update(&m, &censoring_table(), &b, 0, z).unwrap();
        assert!((post.prob(0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((post.prob(1) - 2.0 / 3.0).abs() < 1e-12);
        let ign = update_ignorable(&m, &b, 0, z).unwrap();
        assert!((ign.prob(0) - 0.5).abs() < 1e-12);
        assert!((obs_probability(&m, &censoring_table(), &b, 0, z) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn impossible_observation_is_an_error() {
        let m = identity_model();
        let z = m.features().apply_indicator(1, Indicator(1));
        assert_eq!(update(&m, &censoring_table(), &Belief::point(0), 0, z), Err(Error::ImpossibleObservation));
    }

    #[test]
    fn successor_probabilities_sum_to_one() {
        let m = identity_model();
        let b = initial_belief(&m).unwrap();
        let total: f64 = successors(&m, &censoring_table(), &b, 0).iter().map(|(_, p, _)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l1_and_display() {
        let a = Belief::from_weights(vec![(0, 1.0), (2, 1.0)]).unwrap();
        let b = Belief::point(2);
        assert!((a.l1_distance(&b) - 1.0).abs() < 1e-12);
        assert_eq!(alloc::format!("{b}"), "2:1");
    }
}
