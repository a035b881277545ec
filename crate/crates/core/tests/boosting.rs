use proptest::prelude::*;
use rarerisk::boosting::{
    confusion, cv_select_trees, fit_boost, fit_boost_cv, in_sample_importance, BoostConfig, BoostModel, Node,
    RegressionTree,
};
use rarerisk::dataset::{base_rate, synthesize, DataSet, SynthSpec};
use rarerisk::math::{logit, sigmoid};
use rarerisk::RiskModel;

fn planted(n: usize, seed: u64) -> DataSet {
    synthesize(&SynthSpec {
        base_rate: 0.1,
        ..SynthSpec::planted(n, 8, 3, 1.0, 0.4, seed)
    })
    .unwrap()
}

fn small(seed: u64) -> BoostConfig {
    BoostConfig {
        interaction_depth: 3,
        max_trees: 40,
        cv_folds: 3,
        seed,
        ..BoostConfig::default()
    }
}

#[test]
fn cost_ratio_shifts_the_starting_log_odds() {
    let ds = planted(1000, 1);
    let r = base_rate(&ds);
    for cost in [1.0, 5.0, 10.0] {
        let m = fit_boost(&ds, &BoostConfig { max_trees: 0, cost_ratio: cost, ..small(0) }).unwrap();
        let expected = logit(r) + cost.ln();
        assert!((m.intercept - expected).abs() < 1e-12, "cost {cost}");
    }
}

#[test]
fn heavier_false_negative_cost_forecasts_more_positives() {
    let ds = planted(3000, 2);
    let share = |cost: f64| {
        let m = fit_boost(&ds, &BoostConfig { cost_ratio: cost, ..small(2) }).unwrap();
        let t = confusion(&m, &ds, 0.5).unwrap();
        (t.fp + t.tp) as f64 / t.total() as f64
    };
    assert!(share(10.0) > share(1.0));
}

#[test]
fn trees_respect_depth() {
    let ds = planted(2000, 3);
    for depth in [1, 2, 4] {
        let m = fit_boost(&ds, &BoostConfig { interaction_depth: depth, ..small(3) }).unwrap();
        assert!(m.trees.iter().all(|t| t.depth() <= depth));
        assert!(m.trees.iter().any(|t| t.depth() == depth));
    }
}

#[test]
fn cv_selection_is_the_curve_argmin() {
    let ds = planted(1500, 4);
    let cv = cv_select_trees(&ds, &small(4)).unwrap();
    let (k, &best) = cv
        .curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    assert_eq!(cv.n_trees, k + 1);
    assert_eq!(cv.selected_deviance(), best);
    let m = fit_boost_cv(&ds, &small(4)).unwrap();
    assert_eq!(m.n_trees_used, cv.n_trees);
    assert_eq!(m.cv_curve, cv.curve);
}

#[test]
fn truncation_keeps_predictions() {
    let ds = planted(1500, 5);
    let m = fit_boost_cv(&ds, &small(5)).unwrap();
    let mut t = m.clone();
    t.truncate_to_used();
    assert_eq!(t.trees.len(), m.n_trees_used);
    assert_eq!(t.predict(ds.x()).unwrap(), m.predict(ds.x()).unwrap());
}

#[test]
fn hand_built_model_predicts_sigmoid_of_sum() {
    let trees = vec![
        RegressionTree::stump(0, -0.5, 1.5, 2),
        RegressionTree::from_nodes(
            vec![
                Node::Split { feature: 1, left: 1, right: 2 },
                Node::Leaf { value: 0.25 },
                Node::Split { feature: 0, left: 3, right: 4 },
                Node::Leaf { value: -1.0 },
                Node::Leaf { value: 2.0 },
            ],
            2,
        ),
    ];
    let m = BoostModel::from_parts(-1.0, 0.5, trees, 2);
    let expect = |a: f64, b: f64| sigmoid(-1.0 + 0.5 * (a + b));
    assert_eq!(m.risk(&[0, 0]), expect(-0.5, 0.25));
    assert_eq!(m.risk(&[1, 0]), expect(1.5, 0.25));
    assert_eq!(m.risk(&[0, 1]), expect(-0.5, -1.0));
    assert_eq!(m.risk(&[1, 1]), expect(1.5, 2.0));
    assert!(m.predict(&rarerisk::BinaryMatrix::zeros(1, 3)).is_err());
}

#[test]
fn constant_predictor_gets_no_importance() {
    let mut ds = planted(1500, 6);
    let mut x = ds.x().clone();
    x.fill_column(7, true);
    ds = DataSet::new(ds.schema().clone(), x, ds.y().to_vec()).unwrap();
    let m = fit_boost(&ds, &small(6)).unwrap();
    assert!(m.trees.iter().all(|t| !t.uses(7)));
    assert_eq!(in_sample_importance(&m)[7], 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn json_round_trip_is_bit_exact(seed in 0u64..1000, depth in 1usize..4, trees in 1usize..15) {
        let ds = planted(400, seed);
        let cfg = BoostConfig { interaction_depth: depth, max_trees: trees, min_node: 5, ..small(seed) };
        let m = fit_boost(&ds, &cfg).unwrap();
        let back = BoostModel::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &m);
        let a = m.predict(ds.x()).unwrap();
        let b = back.predict(ds.x()).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn importance_is_a_percentage_split(seed in 0u64..1000, trees in 1usize..20) {
        let ds = planted(400, seed);
        let m = fit_boost(&ds, &BoostConfig { max_trees: trees, min_node: 5, ..small(seed) }).unwrap();
        let imp = in_sample_importance(&m);
        prop_assert!(imp.iter().all(|&v| v >= 0.0));
        let total: f64 = imp.iter().sum();
        prop_assert!(total == 0.0 || (total - 100.0).abs() < 1e-9);
    }

    #[test]
    fn risks_are_probabilities(seed in 0u64..1000) {
        let ds = planted(300, seed);
        let m = fit_boost(&ds, &BoostConfig { max_trees: 20, min_node: 3, ..small(seed) }).unwrap();
        prop_assert!(m.predict(ds.x()).unwrap().iter().all(|&r| (0.0..=1.0).contains(&r)));
    }
}
