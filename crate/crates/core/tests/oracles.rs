//! Results checked against independently computed reference values.

use missmdp_core::belief::{initial_belief, obs_probability, update, update_ignorable, Belief};
use missmdp_core::eval::{rollout_value, RolloutConfig};
use missmdp_core::learn::{learn, AimiKnowledge, Algorithm, LearnerSpec};
use missmdp_core::model::MissMdpBuilder;
use missmdp_core::pac::{certify, epsilon_for, sample_size};
use missmdp_core::plan::{exact_finite_horizon_value, policy_value_at, solve_point_based, SolveConfig};
use missmdp_core::rng::{stream, uniform};
use missmdp_core::simulate::{generate_dataset, horizon_for, BehaviorPolicy, Dataset, History};
use missmdp_core::{FeatureSpace, Indicator, MissMdp, MissingnessTable, StateId};

fn r(bits: &str, n: usize) -> Indicator {
    Indicator::parse_bits(bits, n).unwrap()
}

#[test]
fn okamoto_matches_closed_form() {
    assert_eq!(sample_size(0.1, 0.95).unwrap(), 185);
    assert_eq!(sample_size(0.5, 0.5).unwrap(), 3);
    let reference = ((2.0f64 / 0.05).ln() / 400.0).sqrt();
    assert!((epsilon_for(200, 0.95).unwrap() - reference).abs() < 1e-12);
    assert!((epsilon_for(200, 0.95).unwrap() - 0.09603).abs() < 1e-5);
    assert!(epsilon_for(185, 0.95).unwrap() <= 0.1);
    assert!(epsilon_for(0, 0.95).is_err());
}

#[test]
fn horizon_matches_log_formula() {
    for &gamma in &[0.0, 0.3, 0.5, 0.9, 0.95, 0.99] {
        for &rho in &[0.5, 1.0, 2.0] {
            let tol = 1e-3;
            let l = horizon_for(gamma, rho, tol).unwrap();
            let tail = |k: i32| gamma.powi(k) * rho / (1.0 - gamma);
            assert!(tail(l as i32) < tol);
            if l > 0 {
                assert!(tail(l as i32 - 1) >= tol);
            }
        }
    }
    assert_eq!(horizon_for(0.95, 1.0, 1e-3).unwrap(), 194);
    assert_eq!(horizon_for(0.0, 1.0, 1e-3).unwrap(), 1);
    assert_eq!(horizon_for(0.5, 2.0, 4.0).unwrap(), 1);
}

/// Two states `s1 = 0`, `s2 = 1` on one binary feature.
fn two_state_identity(gamma: f64) -> (FeatureSpace, MissMdp) {
    let fs = FeatureSpace::new(vec![2]).unwrap();
    let mut b = MissMdpBuilder::new(fs.clone(), 1, gamma);
    b.initial(0, 0.5).initial(1, 0.5).transition(0, 0, 0, 1.0).transition(1, 0, 1, 1.0);
    (fs, b.build().unwrap())
}

#[test]
fn self_censoring_update_by_hand() {
    let (fs, model) = two_state_identity(0.9);
    let table = MissingnessTable::from_fn(&fs, |s| {
        if s == 0 {
            vec![(r("1", 1), 0.5), (r("0", 1), 0.5)]
        } else {
            vec![(r("0", 1), 1.0)]
        }
    });
    let b = initial_belief(&model).unwrap();
    let z = fs.apply_indicator(0, r("0", 1));
    let post = update(&model, &table, &b, 0, z).unwrap();
    assert!((post.prob(0) - 1.0 / 3.0).abs() < 1e-12);
    assert!((post.prob(1) - 2.0 / 3.0).abs() < 1e-12);
    let plain = update_ignorable(&model, &b, 0, z).unwrap();
    assert!((plain.prob(0) - 0.5).abs() < 1e-12);
    assert!((obs_probability(&model, &table, &b, 0, z) - 0.75).abs() < 1e-12);

    let seen = fs.apply_indicator(0, r("1", 1));
    assert_eq!(update(&model, &table, &b, 0, seen).unwrap(), Belief::point(0));
    assert!(update(&model, &table, &Belief::point(1), 0, seen).is_err());
}

/// Random 4-state model over two binary features with an arbitrary table.
fn small_pomdp() -> (FeatureSpace, MissMdp, MissingnessTable) {
    let fs = FeatureSpace::new(vec![2, 2]).unwrap();
    let mut rng = stream(99, 0);
    let mut b = MissMdpBuilder::new(fs.clone(), 2, 0.8);
    for s in 0..4 {
        b.initial(s, 0.25);
        for a in 0..2 {
            let w: Vec<f64> = (0..4).map(|_| uniform(&mut rng) + 0.05).collect();
            let total: f64 = w.iter().sum();
            for (next, wi) in w.iter().enumerate() {
                b.transition(s, a, next, wi / total);
            }
            b.reward(s, a, uniform(&mut rng) * 2.0 - 1.0);
        }
    }
    let model = b.build().unwrap();
    let table = MissingnessTable::from_fn(&fs, |_| {
        let w: Vec<f64> = (0..4).map(|_| uniform(&mut rng) + 0.05).collect();
        let total: f64 = w.iter().sum();
        (0..4u32).map(|i| (Indicator(i), w[i as usize] / total)).collect()
    });
    (fs, model, table)
}

#[test]
fn two_step_filter_matches_joint_enumeration() {
    let (fs, model, table) = small_pomdp();
    let b0 = initial_belief(&model).unwrap();
    let lik = |s: StateId, z| table.observation_probability(&fs, z, s);
    for (a0, a1) in [(0, 1), (1, 1), (1, 0)] {
        for (r1, r2) in [("10", "01"), ("00", "11"), ("01", "00")] {
            let (z1, z2) = (fs.apply_indicator(2, r(r1, 2)), fs.apply_indicator(3, r(r2, 2)));
            let b1 = update(&model, &table, &b0, a0, z1).unwrap();
            let b2 = update(&model, &table, &b1, a1, z2).unwrap();
            let mut joint = [0.0; 4];
            for s0 in 0..4 {
                for s1 in 0..4 {
                    for s2 in 0..4 {
                        let t1 = model.transition(s0, a0).iter().find(|e| e.0 == s1).map_or(0.0, |e| e.1);
                        let t2 = model.transition(s1, a1).iter().find(|e| e.0 == s2).map_or(0.0, |e| e.1);
                        joint[s2] += b0.prob(s0) * t1 * lik(s1, z1) * t2 * lik(s2, z2);
                    }
                }
            }
            let total: f64 = joint.iter().sum();
            for s in 0..4 {
                assert!((b2.prob(s) - joint[s] / total).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fully_observed_mdp_matches_value_iteration() {
    let fs = FeatureSpace::new(vec![2]).unwrap();
    let mut b = MissMdpBuilder::new(fs.clone(), 2, 0.9);
    b.initial(0, 1.0);
    b.transition(0, 0, 0, 1.0).transition(0, 1, 1, 0.8).transition(0, 1, 0, 0.2);
    b.transition(1, 0, 1, 0.7).transition(1, 0, 0, 0.3).transition(1, 1, 0, 1.0);
    b.reward(0, 0, 0.1).reward(1, 0, 1.0).reward(1, 1, 0.5);
    let model = b.build().unwrap();
    let table = MissingnessTable::constant(&fs, &[(r("1", 1), 1.0)]);

    let mut v = [0.0f64; 2];
    for _ in 0..5000 {
        let q = |s: usize, a: usize| {
            model.reward(s, a) + 0.9 * model.transition(s, a).iter().map(|&(n, p)| p * v[n]).sum::<f64>()
        };
        v = [q(0, 0).max(q(0, 1)), q(1, 0).max(q(1, 1))];
    }
    let policy = solve_point_based(&model, &table, &SolveConfig::new(1e-7)).unwrap();
    for s in 0..2 {
        assert!((policy_value_at(&policy, &Belief::point(s)) - v[s]).abs() < 1e-6, "state {s}");
    }
}

/// Tiger-style problem: listening reveals the hidden side 85% of the time,
/// opening the right door pays 1, the wrong one costs 10.
fn tiger() -> (MissMdp, MissingnessTable) {
    let fs = FeatureSpace::new(vec![2, 2]).unwrap();
    // Feature 0: tiger side (hidden unless heard). Feature 1: a "heard" flag.
    let mut b = MissMdpBuilder::new(fs.clone(), 3, 0.75);
    let state = |side: u32, heard: u32| fs.encode(&[side, heard]).unwrap();
    for side in 0..2 {
        b.initial(state(side, 0), 0.5);
        for heard in 0..2 {
            let s = state(side, heard);
            b.transition(s, 0, state(side, 1), 0.85).transition(s, 0, state(1 - side, 1), 0.0);
            b.transition(s, 0, state(side, 0), 0.15);
            b.reward(s, 0, -0.1);
            for open in 1..3u32 {
                let pay = if open - 1 == side { 1.0 } else { -10.0 };
                b.reward(s, open as usize, pay);
                b.transition(s, open as usize, state(0, 0), 0.5).transition(s, open as usize, state(1, 0), 0.5);
            }
        }
    }
    let model = b.build().unwrap();
    let table = MissingnessTable::from_fn(&fs, |s| {
        if fs.value(s, 1) == 1 {
            vec![(r("11", 2), 1.0)]
        } else {
            vec![(r("01", 2), 1.0)]
        }
    });
    (model, table)
}

#[test]
fn point_based_value_is_near_exact_on_tiger() {
    let (model, table) = tiger();
    let b0 = initial_belief(&model).unwrap();
    let eps = 0.01;
    let policy = solve_point_based(&model, &table, &SolveConfig::new(eps)).unwrap();
    let h = 12;
    let exact = exact_finite_horizon_value(&model, &table, &b0, h, 1_000_000).unwrap();
    let tail = 0.75f64.powi(h as i32) * model.reward_bound() / 0.25;
    let approx = policy_value_at(&policy, &b0);
    assert!(approx <= exact + tail + 1e-9, "lower bound: {approx} vs {exact}");
    assert!(exact - tail - approx <= eps, "precision: {approx} vs {exact}");

    let stats = rollout_value(&model, &table, &table, &policy, &RolloutConfig::new(4000, 5)).unwrap();
    assert!((stats.mean - approx).abs() <= stats.ci95 * 1.5 + eps + 1e-3, "{} vs {approx}", stats.mean);
}

#[test]
fn exact_value_of_constant_reward() {
    let fs = FeatureSpace::new(vec![1]).unwrap();
    let mut b = MissMdpBuilder::new(fs.clone(), 1, 0.5);
    b.initial(0, 1.0).transition(0, 0, 0, 1.0).reward(0, 0, 1.0);
    let model = b.build().unwrap();
    let t = MissingnessTable::constant(&fs, &[(r("1", 1), 1.0)]);
    let b0 = Belief::point(0);
    assert_eq!(exact_finite_horizon_value(&model, &t, &b0, 0, 10).unwrap(), 0.0);
    assert!((exact_finite_horizon_value(&model, &t, &b0, 3, 10).unwrap() - 1.75).abs() < 1e-12);
    let policy = solve_point_based(&model, &t, &SolveConfig::new(1e-6)).unwrap();
    assert!((policy_value_at(&policy, &b0) - 2.0).abs() < 1e-5);
}

fn dataset_of(fs: &FeatureSpace, items: &[(StateId, &str, usize)]) -> Dataset {
    let mut h = History::default();
    for &(s, bits, times) in items {
        for _ in 0..times {
            h.observations.push(fs.apply_indicator(s, r(bits, fs.len())));
        }
    }
    h.actions = vec![0; h.observations.len() - 1];
    Dataset::new(vec![h])
}

#[test]
fn learners_reproduce_count_ratios() {
    let (fs, model) = two_state_identity(0.9);
    let data = dataset_of(&fs, &[(0, "1", 5), (1, "0", 5)]);
    let amcar = learn(&model, &data.counts(), &LearnerSpec::new(Algorithm::Amcar).with_kappa(0.0)).unwrap();
    assert_eq!(amcar.table.prob(0, r("1", 1)), 0.5);
    assert_eq!(amcar.table.prob(1, r("0", 1)), 0.5);

    let fs2 = FeatureSpace::new(vec![2, 2]).unwrap();
    let mut b = MissMdpBuilder::new(fs2.clone(), 1, 0.9);
    let s = fs2.encode(&[1, 1]).unwrap();
    b.initial(s, 1.0);
    for t in 0..4 {
        b.transition(t, 0, t, 1.0);
    }
    let model2 = b.build().unwrap();
    // Each feature is missing in 2 of 8 observations.
    let data = dataset_of(&fs2, &[(s, "11", 5), (s, "01", 1), (s, "10", 1), (s, "00", 1)]);
    let spec = LearnerSpec { knowledge: AimiKnowledge::Mcar, ..LearnerSpec::new(Algorithm::Aimi).with_kappa(0.0) };
    let aimi = learn(&model2, &data.counts(), &spec).unwrap();
    assert!((aimi.table.prob(s, r("01", 2)) - 0.25 * 0.75).abs() < 1e-12);
    assert!((aimi.table.prob(s, r("00", 2)) - 0.25 * 0.25).abs() < 1e-12);

    let asmar = learn(&model2, &data.counts(), &LearnerSpec::new(Algorithm::Asmar).with_kappa(0.0)).unwrap();
    assert!((asmar.table.prob(s, r("11", 2)) - 5.0 / 8.0).abs() < 1e-12);
}

#[test]
fn missing_rate_tracks_the_table() {
    let fs = FeatureSpace::new(vec![2, 2]).unwrap();
    let mut b = MissMdpBuilder::new(fs.clone(), 2, 0.9);
    for s in 0..4 {
        b.initial(s, 0.25);
        for a in 0..2 {
            b.transition(s, a, (s + a) % 4, 1.0);
        }
    }
    let model = b.build().unwrap();
    let table = MissingnessTable::constant(&fs, &[(r("11", 2), 0.5), (r("10", 2), 0.5)]);
    let data = generate_dataset(&model, &table, BehaviorPolicy::UniformRandom, 20_000, 3).unwrap();
    let counts = data.counts();
    let n = counts.total() as f64;
    let missing = counts.count_set(|z| z.is_missing(1)) as f64;
    let sigma = (0.25 / n).sqrt();
    assert!((missing / n - 0.5).abs() < 3.0 * sigma);
    assert_eq!(counts.count_set(|z| z.is_missing(0)), 0);
}

#[test]
fn bernoulli_coverage() {
    let (p, n, delta) = (0.3, 185u64, 0.95);
    let eps = epsilon_for(n, delta).unwrap();
    let reps = 2000;
    let mut covered = 0;
    for rep in 0..reps {
        let mut rng = stream(17, rep);
        let hits = (0..n).filter(|_| uniform(&mut rng) < p).count();
        if (hits as f64 / n as f64 - p).abs() <= eps {
            covered += 1;
        }
    }
    let slack = 3.0 * (delta * (1.0 - delta) / reps as f64).sqrt();
    assert!(covered as f64 / reps as f64 >= delta - slack);
}

#[test]
fn certificate_chain() {
    let (fs, model) = two_state_identity(0.9);
    let data = dataset_of(&fs, &[(0, "1", 100), (1, "0", 85)]);
    let learned = learn(&model, &data.counts(), &LearnerSpec::new(Algorithm::Amcar)).unwrap();
    let cert = certify(&learned.counts, 0.95).unwrap();
    assert!(cert.global_epsilon <= 0.1);
    let doubled = dataset_of(&fs, &[(0, "1", 200), (1, "0", 170)]);
    let learned2 = learn(&model, &doubled.counts(), &LearnerSpec::new(Algorithm::Amcar)).unwrap();
    assert!(certify(&learned2.counts, 0.95).unwrap().global_epsilon < cert.global_epsilon);
}
