//! ICU and Predator benchmark generators and the uninformed prior table.
//!
//! Neither environment has published dynamics; the constructions below
//! follow the qualitative descriptions. ICU: an infection that worsens on
//! its own, antibiotics that reduce it, a test that may reveal it, and
//! temperature / heart rate as noisy functions of the infection. Predator:
//! a predator on a grid chasing a prey that flees, with the prey's two
//! coordinates hidden jointly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::learn::{expected_observation_weights, learn_weighted, Algorithm, LearnerSpec};
use crate::mgraph::MGraph;
use crate::model::{FeatureSpace, Indicator, MissMdp, MissMdpBuilder, MissingnessTable, StateId};
use crate::simulate::dataset_horizon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Environment {
    Icu,
    Predator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Mcar,
    SimpleMar,
    MnarIdentifiable,
    MnarUnidentifiable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Scale {
    Full,
    #[default]
    Desk,
}

impl Scale {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Scale::Full),
            "desk" => Some(Scale::Desk),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scale::Full => "full",
            Scale::Desk => "desk",
        }
    }
}

/// A benchmark instance to build.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub environment: Environment,
    pub variant: Variant,
    pub scale: Scale,
    /// Discount; defaults to 0.95 at full scale and 0.9 at desk scale.
    pub gamma: Option<f64>,
    /// Overrides the feature domain sizes implied by `scale`.
    pub domains: Option<Vec<u32>>,
    pub icu: IcuParams,
    pub predator: PredatorParams,
}

pub const PRESETS: [&str; 6] = ["icu-smar", "icu-mnar-id", "icu-mnar-unid", "pred-mcar", "pred-smar", "pred-mnar-unid"];

impl BenchSpec {
    pub fn preset(name: &str, scale: Scale) -> Result<Self> {
        let (environment, variant) = match name {
            "icu-smar" => (Environment::Icu, Variant::SimpleMar),
            "icu-mnar-id" => (Environment::Icu, Variant::MnarIdentifiable),
            "icu-mnar-unid" => (Environment::Icu, Variant::MnarUnidentifiable),
            "pred-mcar" => (Environment::Predator, Variant::Mcar),
            "pred-smar" => (Environment::Predator, Variant::SimpleMar),
            "pred-mnar-unid" => (Environment::Predator, Variant::MnarUnidentifiable),
            other => return Err(Error::InvalidArgument(format!("unknown benchmark preset {other:?}"))),
        };
        Ok(Self {
            environment,
            variant,
            scale,
            gamma: None,
            domains: None,
            icu: IcuParams::default(),
            predator: PredatorParams::default(),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(match self.scale {
            Scale::Full => 0.95,
            Scale::Desk => 0.9,
        })
    }

    pub fn name(&self) -> String {
        let env = match self.environment {
            Environment::Icu => "icu",
            Environment::Predator => "pred",
        };
        let var = match self.variant {
            Variant::Mcar => "mcar",
            Variant::SimpleMar => "smar",
            Variant::MnarIdentifiable => "mnar-id",
            Variant::MnarUnidentifiable => "mnar-unid",
        };
        format!("{env}-{var}")
    }
}

impl fmt::Display for BenchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name(), self.scale.name())
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub spec: BenchSpec,
    pub model: MissMdp,
    pub table: MissingnessTable,
    pub graph: MGraph,
    /// For self-censoring variants: WTV between the truth and the
    /// population-level AIMI estimate under the data-collection occupancy.
    pub identifiability_gap: Option<f64>,
}

pub fn build(spec: &BenchSpec) -> Result<Benchmark> {
    let (model, table, graph) = match spec.environment {
        Environment::Icu => build_icu(spec)?,
        Environment::Predator => build_predator(spec)?,
    };
    let identifiability_gap =
        if spec.variant == Variant::MnarUnidentifiable { Some(aimi_population_gap(&model, &table)?) } else { None };
    Ok(Benchmark { spec: spec.clone(), model, table, graph, identifiability_gap })
}

/// Each feature goes missing independently with probability `p`, in every state.
pub fn prior_missingness(features: &FeatureSpace, p: f64) -> Result<MissingnessTable> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("missing probability {p} not in [0, 1]")));
    }
    let n = features.len();
    let row: Vec<(Indicator, f64)> = features
        .indicators()
        .map(|r| {
            let observed = (0..n).filter(|&i| r.observed(i)).count() as i32;
            (r, libm::pow(1.0 - p, observed as f64) * libm::pow(p, (n as i32 - observed) as f64))
        })
        .collect();
    Ok(MissingnessTable::constant(features, &row))
}

/// Distribution over `0..n` peaked at `target` with mass `peak`; the rest
/// decays with squared distance, so every level keeps positive probability.
fn noisy_level(target: u32, n: u32, peak: f64) -> Vec<(u32, f64)> {
    if n == 1 {
        return vec![(0, 1.0)];
    }
    let weights: Vec<f64> = (0..n)
        .map(|c| if c == target { 0.0 } else { 1.0 / libm::pow(1.0 + (c as f64 - target as f64).abs(), 2.0) })
        .collect();
    let total: f64 = weights.iter().sum();
    (0..n).map(|c| (c, if c == target { peak } else { (1.0 - peak) * weights[c as usize] / total })).collect()
}

/// Level of a `n`-valued sign for infection `i` out of `ni` levels.
fn scaled(i: u32, ni: u32, n: u32) -> u32 {
    if ni <= 1 {
        0
    } else {
        libm::round(i as f64 * (n - 1) as f64 / (ni - 1) as f64) as u32
    }
}

pub const ICU_WAIT: usize = 0;
pub const ICU_ANTIBIOTICS: usize = 1;
pub const ICU_TEST: usize = 2;

/// Numbers behind the ICU dynamics and missingness.
#[derive(Debug, Clone, PartialEq)]
pub struct IcuParams {
    /// Per-step chance that an untreated infection gets one level worse.
    pub worsen: f64,
    /// Per-step chance that an untreated infection gets one level better.
    pub recover: f64,
    /// Chance that antibiotics lower the infection by one level.
    pub cure: f64,
    pub antibiotics_cost: f64,
    /// Cost of antibiotics given to a patient without infection.
    pub needless_antibiotics_cost: f64,
    pub test_cost: f64,
    /// Charged on the step into the fatal infection level.
    pub death_penalty: f64,
    /// Probability mass of the most likely temperature / heart-rate level.
    pub temperature_peak: f64,
    pub heart_rate_peak: f64,
    /// Chance that a test reveals the infection, by low / high temperature
    /// (sMAR) or low / high heart rate (MNAR variants).
    pub test_success: (f64, f64),
    /// MNAR_unid: drop in test success at high infection.
    pub censoring_drop: f64,
    /// Chance that the infection is recorded without a recent test.
    pub spontaneous: f64,
    /// Chance that heart rate is recorded, by low / high temperature.
    pub heart_rate_recorded: (f64, f64),
}

impl Default for IcuParams {
    fn default() -> Self {
        Self {
            worsen: 0.3,
            recover: 0.05,
            cure: 0.8,
            antibiotics_cost: 0.2,
            needless_antibiotics_cost: 1.0,
            test_cost: 0.05,
            death_penalty: 5.0,
            temperature_peak: 0.4,
            heart_rate_peak: 0.3,
            test_success: (0.9, 0.6),
            censoring_drop: 0.4,
            spontaneous: 0.05,
            heart_rate_recorded: (0.8, 0.5),
        }
    }
}

/// ICU: features infection, test recency (0 = tested on the last step),
/// temperature, heart rate. Test recency and temperature are always
/// observed; infection is revealed mostly right after a test; heart rate
/// drops out more often at high temperature. The top infection level is
/// fatal: terminal, with a one-off penalty charged on the step into it.
pub fn build_icu(spec: &BenchSpec) -> Result<(MissMdp, MissingnessTable, MGraph)> {
    if spec.variant == Variant::Mcar {
        return Err(Error::InvalidArgument("the ICU benchmark has no MCAR variant".into()));
    }
    let p = &spec.icu;
    let domains: Vec<u32> = match (&spec.domains, spec.scale) {
        (Some(d), _) => d.clone(),
        (None, Scale::Full) => vec![4, 5, 4, 10],
        (None, Scale::Desk) => vec![3, 3, 3, 4],
    };
    if domains.len() != 4 {
        return Err(Error::InvalidArgument("ICU has four features".into()));
    }
    let (ni, nt, nc, nh) = (domains[0], domains[1], domains[2], domains[3]);
    if ni < 2 {
        return Err(Error::InvalidArgument("ICU needs at least two infection levels".into()));
    }
    let fs = FeatureSpace::new(domains)?;
    let mut b = MissMdpBuilder::new(fs.clone(), 3, spec.gamma());

    let signs = |i: u32| -> Vec<(u32, u32, f64)> {
        let mut out = Vec::new();
        for (c, pc) in noisy_level(scaled(i, ni, nc), nc, p.temperature_peak) {
            for (h, ph) in noisy_level(scaled(i, ni, nh), nh, p.heart_rate_peak) {
                out.push((c, h, pc * ph));
            }
        }
        out
    };

    for i in 0..ni.min(2) {
        for &(c, h, p) in &signs(i) {
            b.initial(fs.encode(&[i, nt - 1, c, h])?, p / ni.min(2) as f64);
        }
    }

    let fatal = ni - 1;
    for s in 0..fs.n_states() {
        let v = fs.decode(s);
        let (i, t) = (v[0], v[1]);
        if i == fatal {
            b.terminal(s);
            for a in 0..3 {
                b.transition(s, a, s, 1.0).reward(s, a, 0.0);
            }
            continue;
        }
        for a in 0..3 {
            let infection: Vec<(u32, f64)> = if a == ICU_ANTIBIOTICS {
                if i == 0 {
                    vec![(0, 1.0)]
                } else {
                    vec![(i - 1, p.cure), (i, 1.0 - p.cure)]
                }
            } else if i == 0 {
                vec![(1, p.worsen), (0, 1.0 - p.worsen)]
            } else {
                vec![(i + 1, p.worsen), (i - 1, p.recover), (i, 1.0 - p.worsen - p.recover)]
            };
            let t_next = if a == ICU_TEST { 0 } else { (t + 1).min(nt - 1) };
            let mut death = 0.0;
            for &(i2, pi) in &infection {
                if i2 == fatal {
                    death += pi;
                }
                for (c, h, ps) in signs(i2) {
                    b.transition(s, a, fs.encode(&[i2, t_next, c, h])?, pi * ps);
                }
            }
            let cost = match a {
                ICU_ANTIBIOTICS if i == 0 => p.needless_antibiotics_cost,
                ICU_ANTIBIOTICS => p.antibiotics_cost,
                ICU_TEST => p.test_cost,
                _ => 0.0,
            };
            let severity = i as f64 / fatal as f64;
            b.reward(s, a, -severity - cost - p.death_penalty * death);
        }
    }
    let model = b.build()?;

    let high_temp = nc / 2;
    let high_hr = nh / 2;
    let high_inf = ni / 2;
    let variant = spec.variant;
    let table = MissingnessTable::from_fn(&fs, |s| {
        let v = fs.decode(s);
        let (i, t, c, h) = (v[0], v[1], v[2], v[3]);
        let pick = |(low, high): (f64, f64), is_high: bool| if is_high { high } else { low };
        let p_inf = if t == 0 {
            match variant {
                Variant::SimpleMar => pick(p.test_success, c >= high_temp),
                _ => {
                    let by_hr = pick(p.test_success, h >= high_hr);
                    if variant == Variant::MnarUnidentifiable && i >= high_inf {
                        (by_hr - p.censoring_drop).max(0.0)
                    } else {
                        by_hr
                    }
                }
            }
        } else {
            p.spontaneous
        };
        let p_hr = pick(p.heart_rate_recorded, c >= high_temp);
        independent_row(&[p_inf, 1.0, 1.0, p_hr])
    });

    let graph_text = match variant {
        Variant::SimpleMar => "n 4\nalways 2\nalways 3\nedge S2 R1\nedge S3 R1\nedge S3 R4\n",
        Variant::MnarIdentifiable => "n 4\nalways 2\nalways 3\nedge S2 R1\nedge S4 R1\nedge S3 R4\n",
        _ => "n 4\nalways 2\nalways 3\nselfcensor 1\nedge S1 R1\nedge S2 R1\nedge S4 R1\nedge S3 R4\n",
    };
    let graph = crate::mgraph::parse_mgraph(graph_text)?;
    Ok((model, table, graph))
}

/// Row of a table whose indicators are independent with the given
/// per-feature observation probabilities.
fn independent_row(observe: &[f64]) -> Vec<(Indicator, f64)> {
    let n = observe.len();
    (0u32..(1 << n))
        .map(Indicator)
        .map(|r| {
            let p: f64 = (0..n).map(|i| if r.observed(i) { observe[i] } else { 1.0 - observe[i] }).product();
            (r, p)
        })
        .filter(|&(_, p)| p > 0.0)
        .collect()
}

pub const PREDATOR_MOVES: [(i32, i32); 4] = [(0, -1), (0, 1), (1, 0), (-1, 0)];

#[derive(Debug, Clone, PartialEq)]
pub struct PredatorParams {
    /// Probability that a move leaves the predator in place.
    pub slip: f64,
    /// Probability that the prey flees rather than stays.
    pub flee: f64,
    /// Chance that the prey is seen: constant (MCAR), with the predator on
    /// a mountain / plain cell (sMAR), or with the prey outside / inside the
    /// jungle (MNAR_unid).
    pub seen_mcar: f64,
    pub seen_by_predator_cell: (f64, f64),
    pub seen_by_prey_cell: (f64, f64),
}

impl Default for PredatorParams {
    fn default() -> Self {
        Self { slip: 0.1, flee: 0.8, seen_mcar: 0.6, seen_by_predator_cell: (0.9, 0.4), seen_by_prey_cell: (0.8, 0.15) }
    }
}

/// Predator: features predator column/row `(u, v)` and prey column/row
/// `(x, y)`. The predator picks one of four directions and may slip (stay);
/// unless caught, the prey either flees (uniformly among the moves that
/// maximize its Manhattan distance) or stays. Catching is terminal and pays 1.
pub fn build_predator(spec: &BenchSpec) -> Result<(MissMdp, MissingnessTable, MGraph)> {
    if spec.variant == Variant::MnarIdentifiable {
        return Err(Error::InvalidArgument("the Predator benchmark has no identifiable MNAR variant".into()));
    }
    let params = &spec.predator;
    if !(0.0..=1.0).contains(&params.slip) || !(0.0..=1.0).contains(&params.flee) {
        return Err(Error::InvalidArgument("slip and flee probabilities must lie in [0, 1]".into()));
    }
    let (w, h) = match (&spec.domains, spec.scale, spec.variant) {
        (Some(d), _, _) => {
            if d.len() != 4 || d[0] != d[2] || d[1] != d[3] {
                return Err(Error::InvalidArgument("Predator domains must read `w h w h`".into()));
            }
            (d[0], d[1])
        }
        (None, Scale::Full, Variant::Mcar) => (10u32, 5u32),
        (None, Scale::Full, _) => (5, 5),
        (None, Scale::Desk, Variant::Mcar) => (5, 4),
        (None, Scale::Desk, _) => (4, 4),
    };
    let fs = FeatureSpace::new(vec![w, h, w, h])?;
    let mut b = MissMdpBuilder::new(fs.clone(), 4, spec.gamma());
    let step = |x: u32, y: u32, (dx, dy): (i32, i32)| -> (u32, u32) {
        let nx = x as i32 + dx;
        let ny = y as i32 + dy;
        if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
            (x, y)
        } else {
            (nx as u32, ny as u32)
        }
    };
    let dist = |a: (u32, u32), b: (u32, u32)| a.0.abs_diff(b.0) + a.1.abs_diff(b.1);

    let prey_cells = (w * h - 1) as f64;
    for x in 0..w {
        for y in 0..h {
            if (x, y) != (0, 0) {
                b.initial(fs.encode(&[0, 0, x, y])?, 1.0 / prey_cells);
            }
        }
    }
    for s in 0..fs.n_states() {
        let v = fs.decode(s);
        let (pred, prey) = ((v[0], v[1]), (v[2], v[3]));
        if pred == prey {
            b.terminal(s);
            for a in 0..4 {
                b.transition(s, a, s, 1.0).reward(s, a, 0.0);
            }
            continue;
        }
        for (a, &dir) in PREDATOR_MOVES.iter().enumerate() {
            let mut catch = 0.0;
            for (p_next, pp) in [(step(pred.0, pred.1, dir), 1.0 - params.slip), (pred, params.slip)] {
                if p_next == prey {
                    catch += pp;
                    b.transition(s, a, fs.encode(&[p_next.0, p_next.1, prey.0, prey.1])?, pp);
                    continue;
                }
                let options: Vec<(u32, u32)> =
                    [(0, 0), (0, -1), (0, 1), (1, 0), (-1, 0)].iter().map(|&d| step(prey.0, prey.1, d)).collect();
                let best = options.iter().map(|&c| dist(c, p_next)).max().unwrap_or(0);
                let mut fleeing: Vec<(u32, u32)> = options.into_iter().filter(|&c| dist(c, p_next) == best).collect();
                fleeing.sort();
                fleeing.dedup();
                let share = params.flee / fleeing.len() as f64;
                for c in fleeing {
                    b.transition(s, a, fs.encode(&[p_next.0, p_next.1, c.0, c.1])?, pp * share);
                }
                b.transition(s, a, fs.encode(&[p_next.0, p_next.1, prey.0, prey.1])?, pp * (1.0 - params.flee));
            }
            b.reward(s, a, catch);
        }
    }
    let model = b.build()?;

    // Mountains (sMAR) and jungle (MNAR) occupy a diagonal band.
    let special = |x: u32, y: u32| (x + y).is_multiple_of(3);
    let variant = spec.variant;
    let full = Indicator::all_observed(4);
    let hidden = Indicator::from_observed([0, 1]);
    let table = MissingnessTable::from_fn(&fs, |s| {
        let v = fs.decode(s);
        let p = match variant {
            Variant::Mcar => params.seen_mcar,
            Variant::SimpleMar => {
                let (mountain, plain) = params.seen_by_predator_cell;
                if special(v[0], v[1]) {
                    mountain
                } else {
                    plain
                }
            }
            _ => {
                let (open, jungle) = params.seen_by_prey_cell;
                if special(v[2], v[3]) {
                    jungle
                } else {
                    open
                }
            }
        };
        vec![(full, p), (hidden, 1.0 - p)]
    });
    let graph_text = match variant {
        Variant::Mcar => "n 4\nalways 1\nalways 2\nedge R3 R4\n",
        Variant::SimpleMar => "n 4\nalways 1\nalways 2\nedge S1 R3\nedge S2 R3\nedge R3 R4\n",
        _ => "n 4\nalways 1\nalways 2\nselfcensor 3\nedge S3 R3\nedge S4 R3\nedge R3 R4\n",
    };
    let graph = crate::mgraph::parse_mgraph(graph_text)?;
    Ok((model, table, graph))
}

/// Expected number of visits to each state in a trajectory of the dataset
/// protocol (uniform random actions, stop at terminal states or after the
/// dataset horizon).
pub fn behavior_occupancy(model: &MissMdp) -> Result<Vec<(StateId, f64)>> {
    let horizon = dataset_horizon(model)?;
    let n = model.n_states();
    let mut dist = vec![0.0; n];
    for &(s, p) in model.initial() {
        dist[s] += p;
    }
    let mut occ = vec![0.0; n];
    let share = 1.0 / model.n_actions() as f64;
    for _ in 0..horizon {
        let mut next = vec![0.0; n];
        for &s in model.reachable() {
            let p = dist[s];
            if p == 0.0 {
                continue;
            }
            occ[s] += p;
            if model.is_terminal(s) {
                continue;
            }
            for a in 0..model.n_actions() {
                for &(t, q) in model.transition(s, a) {
                    next[t] += p * share * q;
                }
            }
        }
        dist = next;
    }
    Ok(occ.into_iter().enumerate().filter(|&(_, w)| w > 0.0).collect())
}

/// WTV between `table` and what AIMI converges to with unlimited data
/// collected under [`behavior_occupancy`].
pub fn aimi_population_gap(model: &MissMdp, table: &MissingnessTable) -> Result<f64> {
    let occupancy = behavior_occupancy(model)?;
    let weights = expected_observation_weights(model.features(), table, &occupancy);
    let learned = learn_weighted(model, &weights, &LearnerSpec::new(Algorithm::Aimi).with_kappa(0.0), 0)?;
    Ok(crate::eval::wtv(model, &learned.table, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{classify_missingness, validate_model, MissingnessKind};

    #[test]
    fn prior_table() {
        let fs = FeatureSpace::new(vec![2, 3]).unwrap();
        let t = prior_missingness(&fs, 0.5).unwrap();
        assert!(t.row(4).iter().all(|&(_, p)| (p - 0.25).abs() < 1e-15));
        let id = prior_missingness(&fs, 0.0).unwrap();
        assert_eq!(id.row(0), &[(Indicator(3), 1.0)]);
        assert_eq!(classify_missingness(&fs, &t).kind, MissingnessKind::Mcar);
    }

    #[test]
    fn desk_presets_are_valid_and_classified() {
        let expected = [
            ("icu-smar", MissingnessKind::SimpleMar, false),
            ("icu-mnar-id", MissingnessKind::Mnar, false),
            ("icu-mnar-unid", MissingnessKind::Mnar, true),
            ("pred-mcar", MissingnessKind::Mcar, false),
            ("pred-smar", MissingnessKind::SimpleMar, false),
            ("pred-mnar-unid", MissingnessKind::Mnar, true),
        ];
        for (name, kind, censoring) in expected {
            let bench = build(&BenchSpec::preset(name, Scale::Desk).unwrap()).unwrap();
            assert_eq!(validate_model(&bench.model, &bench.table), Ok(()), "{name}");
            let class = classify_missingness(bench.model.features(), &bench.table);
            assert_eq!(class.kind, kind, "{name}");
            assert_eq!(!class.self_censoring.is_empty(), censoring, "{name}");
            assert!(crate::mgraph::consistent_with(bench.model.features(), &bench.table, &bench.graph), "{name}");
            if let Some(gap) = bench.identifiability_gap {
                assert!(gap >= 0.1, "{name}: gap {gap}");
            }
        }
    }

    #[test]
    fn full_icu_counts() {
        let bench = build(&BenchSpec::preset("icu-smar", Scale::Full).unwrap()).unwrap();
        assert_eq!(bench.model.reachable().len(), 800);
        assert_eq!(bench.model.features().n_observations(), 1650);
    }

    #[test]
    fn desk_icu_is_small() {
        let bench = build(&BenchSpec::preset("icu-mnar-unid", Scale::Desk).unwrap()).unwrap();
        assert!(bench.model.reachable().len() <= 200);
    }

    #[test]
    fn prey_coordinates_go_missing_together() {
        let bench = build(&BenchSpec::preset("pred-mnar-unid", Scale::Desk).unwrap()).unwrap();
        for s in bench.table.states() {
            for &(r, _) in bench.table.row(s) {
                assert_eq!(r.observed(2), r.observed(3));
            }
        }
        assert!(!crate::model::indicators_independent(&bench.table));
    }
}
