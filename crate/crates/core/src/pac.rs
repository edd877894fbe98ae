//! Okamoto bounds and certification of learned missingness tables.
//!
//! Confidence `δ` is the probability of being correct, so the error budget
//! of a claim is `1 − δ`. Splitting a claim over `k` keys gives every key the
//! budget `(1 − δ) / k`; by the union bound all keys hold jointly with
//! probability at least `δ`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::learn::{aimi_conditioning, Algorithm, CountTable, LearnerSpec};
use crate::model::{Indicator, MissMdp, Observation};

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("confidence {delta} not in (0, 1)")))
    }
}

/// `ln(2 / (1 − δ))`.
fn log_term(delta: f64) -> f64 {
    libm::log(2.0 / (1.0 - delta))
}

/// Smallest `n` with `n ≥ ln(2/(1−δ)) / (2ε²)`.
pub fn sample_size(epsilon: f64, delta: f64) -> Result<u64> {
    check_delta(delta)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("precision {epsilon} not in (0, 1)")));
    }
    Ok(libm::ceil(log_term(delta) / (2.0 * epsilon * epsilon)) as u64)
}

/// Tight precision `sqrt(ln(2/(1−δ)) / (2n))` for `n` samples.
pub fn epsilon_for(n: u64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    Ok(libm::sqrt(log_term(delta) / (2.0 * n as f64)))
}

/// Per-key error budget `(1 − δ) / key_count`.
pub fn split_confidence(delta: f64, key_count: usize) -> Result<f64> {
    check_delta(delta)?;
    if key_count == 0 {
        return Err(Error::InvalidArgument("key count must be at least 1".into()));
    }
    Ok((1.0 - delta) / key_count as f64)
}

/// Split of an overall confidence between "the dataset is large enough"
/// and "the learned table is precise".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSplit {
    /// Fraction of the error budget given to the dataset-adequacy event.
    pub data_share: f64,
}

impl Default for DeltaSplit {
    fn default() -> Self {
        Self { data_share: 0.5 }
    }
}

impl DeltaSplit {
    /// `(δ_data, δ_table)` with `(1 − δ_data) + (1 − δ_table) = 1 − δ`.
    pub fn split(self, delta: f64) -> Result<(f64, f64)> {
        check_delta(delta)?;
        if !(0.0..=1.0).contains(&self.data_share) {
            return Err(Error::InvalidArgument("data share must lie in [0, 1]".into()));
        }
        let err = 1.0 - delta;
        Ok((1.0 - self.data_share * err, 1.0 - (1.0 - self.data_share) * err))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedKey {
    /// AIMI: the feature the counter belongs to.
    pub feature: Option<usize>,
    pub key: Observation,
    /// Indicator bits (AMCAR/AsMAR) or `0` missing / `1` observed (AIMI).
    pub outcome: usize,
    /// Bernoulli repetitions: the total count of the key's group.
    pub n: u64,
    pub epsilon: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacCertificate {
    pub delta: f64,
    pub per_key_error: f64,
    pub global_epsilon: f64,
    pub keys: Vec<CertifiedKey>,
}

impl PacCertificate {
    pub fn flagged(&self) -> impl Iterator<Item = &CertifiedKey> {
        self.keys.iter().filter(|k| k.flagged)
    }
}

/// Per-key precision of a learner's raw counts (κ plays no part).
/// Keys without samples get `ε = 1` and are flagged.
pub fn certify(counts: &CountTable, delta: f64) -> Result<PacCertificate> {
    let per_key_error = split_confidence(delta, counts.key_count().max(1))?;
    let key_delta = 1.0 - per_key_error;
    let mut keys = Vec::with_capacity(counts.key_count());
    let mut global = 0.0f64;
    for g in &counts.groups {
        let n = libm::round(g.total()) as u64;
        let epsilon = if n == 0 { 1.0 } else { epsilon_for(n, key_delta)?.min(1.0) };
        global = global.max(epsilon);
        for outcome in 0..g.outcomes.len() {
            keys.push(CertifiedKey { feature: g.feature, key: g.key, outcome, n, epsilon, flagged: n == 0 });
        }
    }
    Ok(PacCertificate { delta, per_key_error, global_epsilon: global, keys })
}

/// Sample targets that make every key `ε`-precise with joint confidence `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountPlan {
    pub key_count: usize,
    pub per_key_error: f64,
    /// Okamoto target per key (identical since the split is uniform).
    pub target: u64,
    /// Conditioning groups the targets apply to.
    pub groups: Vec<(Option<usize>, Observation)>,
}

/// Enumerates the learner's conditioning groups over the reachable states
/// and derives the per-key Okamoto target. `delta` is the share of
/// confidence assigned to the table (see [`DeltaSplit`]); `always` is the
/// always-observed set AsMAR would condition on.
pub fn required_counts_plan(
    model: &MissMdp,
    spec: &LearnerSpec,
    always: &[usize],
    epsilon: f64,
    delta: f64,
) -> Result<CountPlan> {
    let features = model.features();
    let n = features.len();
    let mut groups: Vec<(Option<usize>, Observation)> = Vec::new();
    let outcomes;
    match spec.algorithm {
        Algorithm::Amcar | Algorithm::Asmar => {
            let mask = if spec.algorithm == Algorithm::Amcar {
                Indicator(0)
            } else {
                Indicator::from_observed(spec.always_override.clone().unwrap_or_else(|| always.to_vec()))
            };
            groups.extend(model.reachable().iter().map(|&s| (None, features.apply_indicator(s, mask))));
            outcomes = 1usize << n;
        }
        Algorithm::Aimi => {
            let masks = aimi_conditioning(n, &spec.knowledge, always)?;
            for (i, &mask) in masks.iter().enumerate() {
                groups.extend(model.reachable().iter().map(|&s| (Some(i), features.apply_indicator(s, mask))));
            }
            outcomes = 2;
        }
    }
    groups.sort();
    groups.dedup();
    let key_count = groups.len() * outcomes;
    let per_key_error = split_confidence(delta, key_count)?;
    let target = sample_size(epsilon, 1.0 - per_key_error)?;
    Ok(CountPlan { key_count, per_key_error, target, groups })
}

/// Samples per key so that every outcome with probability at least `p`
/// shows up at least once, jointly over `key_count` keys with confidence
/// `δ`: `(1 − p)^n ≤ (1 − δ) / key_count`.
pub fn support_sample_size(p: f64, delta: f64, key_count: usize) -> Result<u64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("probability lower bound {p} not in (0, 1]")));
    }
    let err = split_confidence(delta, key_count)?;
    if p >= 1.0 {
        return Ok(1);
    }
    Ok(libm::ceil(libm::log(err) / libm::log(1.0 - p)).max(1.0) as u64)
}
