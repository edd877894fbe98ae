//! Distances between missingness tables and Monte Carlo policy evaluation.

use alloc::vec::Vec;

use crate::belief::{observe, observe_ignorable, predict, Belief};
use crate::error::{Error, Result};
use crate::model::{MissMdp, MissingnessTable, StateId};
use crate::plan::{policy_action, AlphaPolicy};
use crate::rng::{self, pick, uniform};
use crate::simulate::{horizon_for, DATASET_TOL};

/// Normal quantile for a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

/// `½ Σ_r |M̂(r | s) − M(r | s)|`; indicator vectors and admittable
/// observations of `s` are in bijection.
pub fn tv_at_state(mhat: &MissingnessTable, m: &MissingnessTable, s: StateId) -> f64 {
    let (a, b) = (mhat.row(s), m.row(s));
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(ra, pa)), Some(&(rb, pb))) if ra == rb => {
                acc += libm::fabs(pa - pb);
                i += 1;
                j += 1;
            }
            (Some(&(ra, pa)), Some(&(rb, _))) if ra < rb => {
                acc += pa;
                i += 1;
            }
            (Some(&(_, pa)), None) => {
                acc += pa;
                i += 1;
            }
            (_, Some(&(_, pb))) => {
                acc += pb;
                j += 1;
            }
            (None, None) => break,
        }
    }
    (0.5 * acc).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvSummary {
    pub atv: f64,
    pub wtv: f64,
}

/// Average and worst TV over the reachable states.
pub fn tv_summary(model: &MissMdp, mhat: &MissingnessTable, m: &MissingnessTable) -> TvSummary {
    let mut sum = 0.0;
    let mut worst = 0.0f64;
    for &s in model.reachable() {
        let tv = tv_at_state(mhat, m, s);
        sum += tv;
        worst = worst.max(tv);
    }
    let n = model.reachable().len().max(1) as f64;
    TvSummary { atv: (sum / n).min(worst), wtv: worst }
}

pub fn atv(model: &MissMdp, mhat: &MissingnessTable, m: &MissingnessTable) -> f64 {
    tv_summary(model, mhat, m).atv
}

pub fn wtv(model: &MissMdp, mhat: &MissingnessTable, m: &MissingnessTable) -> f64 {
    tv_summary(model, mhat, m).wtv
}

/// Smallest absolute gap between the anchors that still normalizes.
pub const NORMALIZATION_GUARD: f64 = 1e-9;

/// `(v − v_prior) / (v_opt − v_prior)`.
pub fn normalize_value(v: f64, v_prior: f64, v_opt: f64) -> Result<f64> {
    let d = v_opt - v_prior;
    if libm::fabs(d) < NORMALIZATION_GUARD {
        return Err(Error::DegenerateNormalization);
    }
    Ok((v - v_prior) / d)
}

/// Number of steps simulated per episode.
pub fn evaluation_horizon(model: &MissMdp) -> Result<usize> {
    Ok(horizon_for(model.gamma(), model.reward_bound(), DATASET_TOL)?.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    pub episodes: usize,
    pub seed: u64,
    /// Overrides [`evaluation_horizon`].
    pub horizon: Option<usize>,
    /// Track beliefs with admittability only.
    pub ignorable: bool,
}

impl RolloutConfig {
    pub fn new(episodes: usize, seed: u64) -> Self {
        Self { episodes, seed, horizon: None, ignorable: false }
    }
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self::new(2000, 0)
    }
}

/// One simulated episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Episode {
    pub discounted_return: f64,
    /// Observations the tracker's table deemed impossible.
    pub impossible: u64,
}

/// The world emits through `truth`; the agent tracks its belief with
/// `tracker` and acts greedily on `policy`. Uniform draws are consumed in a
/// fixed pattern (one for the start state, then one observation draw and
/// one transition draw per step), so two policies run with the same seed
/// and index face the same environment noise.
pub fn run_episode(
    model: &MissMdp,
    truth: &MissingnessTable,
    tracker: &MissingnessTable,
    policy: &AlphaPolicy,
    horizon: usize,
    ignorable: bool,
    seed: u64,
    index: u64,
) -> Episode {
    let features = model.features();
    let mut world = rng::stream(seed, index);
    let emit = |s: StateId, u: f64| {
        let r = pick(truth.row(s), 1.0, u).unwrap_or_else(|| features.full_indicator());
        features.apply_indicator(s, r)
    };
    let mut impossible = 0u64;
    let mut track = |prior: &[(StateId, f64)], z| -> Belief {
        if !ignorable {
            if let Ok(b) = observe(model, tracker, prior, z) {
                return b;
            }
            impossible += 1;
        }
        observe_ignorable(model, prior, z).unwrap_or_else(|_| {
            let admitting: Vec<_> =
                model.reachable().iter().filter(|&&s| features.admits(z, s)).map(|&s| (s, 1.0)).collect();
            Belief::from_weights(admitting).expect("the emitting state admits its observation")
        })
    };

    let Some(mut s) = pick(model.initial(), 1.0, uniform(&mut world)) else {
        return Episode { discounted_return: 0.0, impossible: 0 };
    };
    let z = emit(s, uniform(&mut world));
    let mut b = track(model.initial(), z);
    let mut ret = 0.0;
    let mut discount = 1.0;
    for _ in 0..horizon {
        if model.is_terminal(s) {
            break;
        }
        let u_obs = uniform(&mut world);
        let u_next = uniform(&mut world);
        let a = policy_action(policy, &b);
        ret += discount * model.reward(s, a);
        discount *= model.gamma();
        let Some(next) = pick(model.transition(s, a), 1.0, u_next) else { break };
        s = next;
        let z = emit(s, u_obs);
        b = track(&predict(model, &b, a), z);
    }
    Episode { discounted_return: ret, impossible }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutStats {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub episodes: usize,
    pub impossible: u64,
}

/// Mean and 95% half-width of returns, summed in index order.
pub fn summarize(episodes: &[Episode]) -> RolloutStats {
    let n = episodes.len();
    if n == 0 {
        return RolloutStats { mean: 0.0, ci95: 0.0, episodes: 0, impossible: 0 };
    }
    let mean = episodes.iter().map(|e| e.discounted_return).sum::<f64>() / n as f64;
    let var = if n > 1 {
        episodes.iter().map(|e| (e.discounted_return - mean) * (e.discounted_return - mean)).sum::<f64>()
            / (n - 1) as f64
    } else {
        0.0
    };
    RolloutStats {
        mean,
        ci95: Z95 * libm::sqrt(var / n as f64),
        episodes: n,
        impossible: episodes.iter().map(|e| e.impossible).sum(),
    }
}

/// Monte Carlo estimate of the policy's value on the true miss-MDP.
pub fn rollout_value(
    model: &MissMdp,
    truth: &MissingnessTable,
    tracker: &MissingnessTable,
    policy: &AlphaPolicy,
    config: &RolloutConfig,
) -> Result<RolloutStats> {
    if config.episodes == 0 {
        return Err(Error::InvalidArgument("at least one episode is required".into()));
    }
    let horizon = match config.horizon {
        Some(h) => h,
        None => evaluation_horizon(model)?,
    };
    let episodes: Vec<Episode> = (0..config.episodes as u64)
        .map(|i| run_episode(model, truth, tracker, policy, horizon, config.ignorable, config.seed, i))
        .collect();
    Ok(summarize(&episodes))
}

/// `|V_M(π) − V_M̂(π)|` estimated with common random numbers; the agent
/// tracks beliefs with `mhat` in both worlds.
pub fn value_difference_check(
    model: &MissMdp,
    m: &MissingnessTable,
    mhat: &MissingnessTable,
    policy: &AlphaPolicy,
    config: &RolloutConfig,
) -> Result<f64> {
    let real = rollout_value(model, m, mhat, policy, config)?;
    let imagined = rollout_value(model, mhat, mhat, policy, config)?;
    Ok(libm::fabs(real.mean - imagined.mean))
}
