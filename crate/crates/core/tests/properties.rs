use missmdp_core::belief::{initial_belief, obs_probability, successors, update, update_ignorable, Belief};
use missmdp_core::eval::tv_summary;
use missmdp_core::mgraph::{consistent_with, parse_mgraph, MGraph};
use missmdp_core::model::{
    classify_missingness, indicator_of, is_mar, is_mcar, is_simple_mar, validate_model, MissMdpBuilder, MissingnessKind,
};
use missmdp_core::pac::{epsilon_for, sample_size};
use missmdp_core::{FeatureSpace, Indicator, MissMdp, MissingnessTable};
use proptest::prelude::*;

/// 0: MCAR, 1: simple MAR on feature 0, 2: arbitrary.
fn table_from(fs: &FeatureSpace, kind: u8, weights: &[f64]) -> MissingnessTable {
    let n = fs.len();
    let k = 1usize << n;
    let row = |offset: usize, mask_feature0: bool| -> Vec<(Indicator, f64)> {
        let cells: Vec<(Indicator, f64)> = (0..k as u32)
            .map(Indicator)
            .filter(|r| !mask_feature0 || r.observed(0))
            .map(|r| (r, weights[(offset + r.0 as usize) % weights.len()] + 0.01))
            .collect();
        let total: f64 = cells.iter().map(|c| c.1).sum();
        cells.into_iter().map(|(r, w)| (r, w / total)).collect()
    };
    MissingnessTable::from_fn(fs, |s| match kind {
        0 => row(0, false),
        1 => row(k * fs.value(s, 0) as usize, true),
        _ => row(k * s, false),
    })
}

fn feature_space() -> impl Strategy<Value = FeatureSpace> {
    prop::collection::vec(1u32..4, 1..4).prop_map(|d| FeatureSpace::new(d).unwrap())
}

fn chain_model(fs: &FeatureSpace, shift: usize) -> MissMdp {
    let n = fs.n_states();
    let mut b = MissMdpBuilder::new(fs.clone(), 2, 0.9);
    for s in 0..n {
        b.initial(s, 1.0 / n as f64);
        b.transition(s, 0, s, 1.0);
        b.transition(s, 1, (s + shift) % n, 0.5).transition(s, 1, s, 0.5);
        b.reward(s, 1, 1.0);
    }
    b.build().unwrap()
}

proptest! {
    #[test]
    fn encode_decode_is_a_bijection(fs in feature_space()) {
        for s in 0..fs.n_states() {
            prop_assert_eq!(fs.encode(&fs.decode(s)).unwrap(), s);
        }
    }

    #[test]
    fn masking_round_trips(fs in feature_space(), bits in 0u32..8) {
        let r = Indicator(bits & ((1 << fs.len()) - 1));
        for s in 0..fs.n_states() {
            let z = fs.apply_indicator(s, r);
            prop_assert!(fs.admits(z, s));
            prop_assert_eq!(indicator_of(z), r);
            prop_assert_eq!(fs.apply_indicator(s, indicator_of(z)), z);
        }
    }

    #[test]
    fn classification_is_nested(
        fs in feature_space(),
        kind in 0u8..3,
        weights in prop::collection::vec(0.0f64..1.0, 8..64),
    ) {
        let t = table_from(&fs, kind, &weights);
        for s in 0..fs.n_states() {
            let sum: f64 = t.row(s).iter().map(|e| e.1).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
        let class = classify_missingness(&fs, &t);
        if is_mcar(&t) {
            prop_assert!(is_simple_mar(&fs, &t));
        }
        if is_simple_mar(&fs, &t) {
            prop_assert!(is_mar(&fs, &t));
        }
        prop_assert_eq!(class.kind == MissingnessKind::Mnar, !is_mar(&fs, &t));
        if kind == 0 {
            prop_assert_eq!(class.kind, MissingnessKind::Mcar);
        }
        if kind == 1 {
            prop_assert!(is_simple_mar(&fs, &t));
        }
    }

    #[test]
    fn complete_graph_accepts_everything(
        fs in feature_space(),
        kind in 0u8..3,
        weights in prop::collection::vec(0.0f64..1.0, 8..64),
    ) {
        let t = table_from(&fs, kind, &weights);
        prop_assert!(consistent_with(&fs, &t, &MGraph::complete(fs.len()).unwrap()));
    }

    #[test]
    fn adding_edges_keeps_consistency(
        kind in 0u8..3,
        weights in prop::collection::vec(0.0f64..1.0, 8..64),
        extra in prop::collection::vec((1usize..3, 1usize..3), 0..4),
    ) {
        let fs = FeatureSpace::new(vec![2, 3]).unwrap();
        let t = table_from(&fs, kind, &weights);
        let base = "n 2\nedge S1 R2\n";
        let g = parse_mgraph(base).unwrap();
        let mut text = String::from(base);
        for (s, r) in extra {
            if s != r {
                text.push_str(&format!("edge S{s} R{r}\n"));
            }
        }
        text.push_str("edge R1 R2\n");
        let bigger = parse_mgraph(&text).unwrap();
        if consistent_with(&fs, &t, &g) {
            prop_assert!(consistent_with(&fs, &t, &bigger));
        }
    }

    #[test]
    fn mgraph_render_round_trips(
        always in prop::collection::btree_set(1usize..5, 0..3),
        edges in prop::collection::btree_set((1usize..5, 1usize..5), 0..6),
    ) {
        let mut text = String::from("n 4\n");
        for i in &always {
            text.push_str(&format!("always {i}\n"));
        }
        for (s, r) in &edges {
            if s != r && !always.contains(r) {
                text.push_str(&format!("edge S{s} R{r}\n"));
            }
        }
        let g = parse_mgraph(&text).unwrap();
        prop_assert_eq!(parse_mgraph(&g.render()).unwrap(), g);
    }

    #[test]
    fn mar_updates_ignore_missingness(
        kind in 0u8..2,
        weights in prop::collection::vec(0.0f64..1.0, 8..64),
        shift in 1usize..5,
        a in 0usize..2,
        start in 0usize..6,
    ) {
        let fs = FeatureSpace::new(vec![2, 3]).unwrap();
        let t = table_from(&fs, kind, &weights);
        let model = chain_model(&fs, shift);
        let b = Belief::from_weights(vec![(start, 0.3), ((start + 1) % 6, 0.7)]).unwrap();
        let mut total = 0.0;
        for (z, p, posterior) in successors(&model, &t, &b, a) {
            total += p;
            let plain = update_ignorable(&model, &b, a, z).unwrap();
            for s in 0..6 {
                let (x, y) = (posterior.prob(s), plain.prob(s));
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300));
            }
            prop_assert!((obs_probability(&model, &t, &b, a, z) - p).abs() < 1e-12);
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn posterior_support_is_admitted(
        weights in prop::collection::vec(0.0f64..1.0, 8..64),
        shift in 1usize..5,
    ) {
        let fs = FeatureSpace::new(vec![2, 3]).unwrap();
        let t = table_from(&fs, 2, &weights);
        let model = chain_model(&fs, shift);
        let b = initial_belief(&model).unwrap();
        for (z, _, posterior) in successors(&model, &t, &b, 1) {
            for s in posterior.support() {
                prop_assert!(fs.admits(z, s));
            }
            let direct = update(&model, &t, &b, 1, z).unwrap();
            prop_assert!(direct.l1_distance(&posterior) < 1e-12);
        }
    }

    #[test]
    fn okamoto_inverse(eps in 0.01f64..0.5, delta in 0.5f64..0.999) {
        let n = sample_size(eps, delta).unwrap();
        prop_assert!(epsilon_for(n, delta).unwrap() <= eps + 1e-12);
        if n > 1 {
            prop_assert!(epsilon_for(n - 1, delta).unwrap() > eps);
        }
        prop_assert!(sample_size(eps * 1.5, delta).unwrap() <= n);
    }

    #[test]
    fn atv_never_exceeds_wtv(
        w1 in prop::collection::vec(0.0f64..1.0, 8..64),
        w2 in prop::collection::vec(0.0f64..1.0, 8..64),
    ) {
        let fs = FeatureSpace::new(vec![2, 3]).unwrap();
        let model = chain_model(&fs, 1);
        let (a, b) = (table_from(&fs, 2, &w1), table_from(&fs, 2, &w2));
        let tv = tv_summary(&model, &a, &b);
        prop_assert!(tv.atv <= tv.wtv + 1e-15);
        prop_assert!((0.0..=1.0).contains(&tv.wtv));
        let same = tv_summary(&model, &a, &a);
        prop_assert_eq!((same.atv, same.wtv), (0.0, 0.0));
    }

    #[test]
    fn generated_tables_validate(
        fs in feature_space(),
        kind in 0u8..3,
        weights in prop::collection::vec(0.0f64..1.0, 8..64),
    ) {
        let t = table_from(&fs, kind, &weights);
        prop_assert!(validate_model(&chain_model(&fs, 1), &t).is_ok());
    }
}
