use aced::algorithms::{
    aced_fixed_budget, aced_fixed_budget_efficient, aced_fixed_confidence, aced_waterfilled,
    baseline_iwal, baseline_passive, baseline_uniform_disagreement, psi_design_objective,
    EfficientParams, FixedBudgetParams, FixedConfidenceParams, IwalParams, IwalVariant,
    PassiveParams, RunRecord, UniformDisagreementParams, WaterfilledParams,
};
use aced::class::{gap_table, ExplicitClass, HypothesisClass, LinearClass};
use aced::design::{smd_solve, Design, DesignObjective, GaussianObjective};
use aced::instances::{make_prop3_instance, make_thresholds, Instance};
use aced::oracles::LogisticConfig;
use aced::pool::{LabelModel, Pool};
use aced::EstimatorKind;

fn thresholds(n: usize) -> Instance {
    make_thresholds(n, n / 2, 1.0).unwrap()
}

fn check_probabilities(r: &RunRecord) {
    for q in &r.queries {
        assert_eq!(q.prob, r.rounds[q.round - 1].sampling[q.index]);
    }
}

#[test]
fn single_hypothesis_needs_no_queries() {
    let inst = Instance::explicit(vec![vec![true, false, true]], vec![0.5; 3], false, 0).unwrap();
    let mut labels = inst.labels.clone();
    let r = aced_fixed_confidence(&inst.class, &mut labels, &FixedConfidenceParams::default(), 1).unwrap();
    assert!(r.queries.is_empty());
    assert_eq!(r.returned, Some(0));
}

#[test]
fn fixed_confidence_finds_threshold() {
    let inst = thresholds(16);
    let star = gap_table(&inst.class, inst.eta()).unwrap().h_star;
    for seed in 0..5 {
        let mut labels = inst.labels.reseeded(seed);
        let r = aced_fixed_confidence(&inst.class, &mut labels, &FixedConfidenceParams::default(), seed).unwrap();
        assert_eq!(r.returned, Some(star));
        let sizes: Vec<usize> = r.rounds.iter().map(|k| k.survivors.unwrap()).collect();
        assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
        check_probabilities(&r);
    }
}

#[test]
fn half_accuracy_is_one_round() {
    let inst = thresholds(8);
    let params = FixedBudgetParams { budget: 37, epsilon: 0.5, ..FixedBudgetParams::default() };
    let mut labels = inst.labels.clone();
    let r = aced_fixed_budget(&inst.class, &mut labels, &params, 3).unwrap();
    assert_eq!(r.rounds.len(), 1);
    assert_eq!(r.queries.len(), 37);
    check_probabilities(&r);
}

#[test]
fn budget_below_round_count_is_rejected() {
    let inst = thresholds(8);
    let params = FixedBudgetParams { budget: 2, epsilon: 0.1, ..FixedBudgetParams::default() };
    let mut labels = inst.labels.clone();
    assert!(aced_fixed_budget(&inst.class, &mut labels, &params, 0).is_err());
}

#[test]
fn fixed_budget_estimators_respect_budget() {
    let inst = thresholds(16);
    for estimator in [EstimatorKind::Naive, EstimatorKind::Ips, EstimatorKind::Chaining] {
        let params = FixedBudgetParams { budget: 200, epsilon: 0.125, estimator, ..FixedBudgetParams::default() };
        let mut labels = inst.labels.clone();
        let r = aced_fixed_budget(&inst.class, &mut labels, &params, 4).unwrap();
        assert_eq!(r.rounds.len(), 3);
        assert!(r.unique_queries() <= 200 && r.queries.len() <= 200);
        check_probabilities(&r);
    }
}

#[test]
fn naive_estimator_recovers_erm_when_disagreement_is_covered() {
    let inst = Instance::explicit(
        vec![vec![false; 4], vec![true, false, false, false], vec![true, true, false, false], vec![true, true, true, true]],
        vec![1.0, 1.0, 0.0, 0.0],
        true,
        0,
    )
    .unwrap();
    let params = FixedBudgetParams { budget: 120, epsilon: 0.25, ..FixedBudgetParams::default() };
    let mut labels = inst.labels.clone();
    let r = aced_fixed_budget(&inst.class, &mut labels, &params, 5).unwrap();
    assert_eq!(r.unique_queries(), 4);
    assert_eq!(r.returned, Some(2));
}

#[test]
fn efficient_variant_mixes_designs() {
    let m = 4;
    let inst = make_prop3_instance(m).unwrap();
    let params = EfficientParams { budget: 60, epsilon: 0.5, ..EfficientParams::default() };
    let mut labels = inst.labels.clone();
    let seed = 7;
    let r = aced_fixed_budget_efficient(&inst.class, &mut labels, &params, seed).unwrap();
    let lambda = &r.rounds[0].sampling;

    let n = inst.n();
    let anchor = inst.class.explicit().unwrap().hypothesis(0);
    let cost = vec![0.0; n];
    let width = GaussianObjective::fixed_budget(&inst.class, &anchor, &cost, 1.0, params.n_max).unwrap();
    let first = smd_solve(&DesignObjective::Gaussian(width), &params.solver, seed + 1).unwrap();
    let psi = psi_design_objective(&inst.class, &anchor, &cost, 1.0).unwrap();
    let second = smd_solve(&DesignObjective::Pieces(psi), &params.solver, 0).unwrap();
    for i in 0..n {
        let mean = 0.5 * (first.lambda.as_slice()[i] + second.lambda.as_slice()[i]);
        assert!((lambda[i] - mean).abs() <= 1e-12);
    }
    let floor = 1.0 / (4.0 * (m * m) as f64);
    assert!(lambda[m..].iter().all(|&l| l >= floor), "{lambda:?}");
    check_probabilities(&r);
    assert_eq!(Design::mix(&first.lambda, &second.lambda).unwrap().as_slice(), lambda.as_slice());
}

#[test]
fn waterfilled_needs_persistent_labels_and_respects_budget() {
    let inst = thresholds(32);
    let mut fresh = inst.labels.clone();
    assert!(aced_waterfilled(&inst.class, &mut fresh, &WaterfilledParams::default(), 0).is_err());

    let mut persistent = LabelModel::new(inst.eta().to_vec(), true, 1).unwrap();
    let params = WaterfilledParams { budget: 20, epsilon: 0.1, batch: Some(4), ..WaterfilledParams::default() };
    let r = aced_waterfilled(&inst.class, &mut persistent, &params, 2).unwrap();
    assert!(r.unique_queries() <= 20);
    assert_eq!(r.unique_queries(), r.queries.len());
}

#[test]
fn passive_examples() {
    let inst = thresholds(12);
    let star = gap_table(&inst.class, inst.eta()).unwrap().h_star;
    let mut labels = inst.labels.clone();
    let all = baseline_passive(&inst.class, &mut labels, &PassiveParams { budget: 12, checkpoint_every: None }, 1).unwrap();
    assert_eq!(all.unique_queries(), 12);
    assert_eq!(all.returned, Some(star));
    let none = baseline_passive(&inst.class, &mut labels, &PassiveParams { budget: 0, checkpoint_every: None }, 1).unwrap();
    assert_eq!(none.returned, Some(0));
}

#[test]
fn uniform_disagreement_stops_without_disagreement() {
    let inst = Instance::explicit(vec![vec![true, false], vec![true, false]], vec![0.5; 2], false, 0).unwrap();
    let mut labels = inst.labels.clone();
    let params = UniformDisagreementParams { budget: 10, delta: 0.1, checkpoint_every: None };
    let r = baseline_uniform_disagreement(&inst.class, &mut labels, &params, 0).unwrap();
    assert!(r.queries.is_empty());
    assert!(r.flags.iter().any(|f| f == "disagreement_empty"));
    assert_eq!(r.returned, Some(0));
}

#[test]
fn uniform_disagreement_spends_budget_on_tail() {
    let m = 4;
    let inst = make_prop3_instance(m).unwrap();
    let mut labels = inst.labels.clone();
    let params = UniformDisagreementParams { budget: 60, delta: 0.1, checkpoint_every: None };
    let r = baseline_uniform_disagreement(&inst.class, &mut labels, &params, 3).unwrap();
    let tail = r.queries.iter().filter(|q| q.index >= m).count();
    assert!(tail * 2 >= r.queries.len());
}

#[test]
fn iwal_zero_gap_always_queries() {
    for variant in [IwalVariant::Iwal0, IwalVariant::Iwal1, IwalVariant::Oracular0, IwalVariant::Oracular1] {
        for k in [1, 2, 10, 1000] {
            assert_eq!(aced::algorithms::iwal_probability(0.0, k, 1e-3, variant), 1.0);
        }
        let p = aced::algorithms::iwal_probability(0.9, 1000, 1e-3, variant);
        assert!(p > 0.0 && p < 1.0);
    }
}

fn line_pool(n: usize) -> Pool {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
    Pool::with_features((0..n).map(|i| format!("x{i}")).collect(), &rows).unwrap()
}

#[test]
fn iwal_is_sensitive_to_aggressiveness() {
    let n = 400;
    let class = HypothesisClass::Linear(LinearClass::new(line_pool(n), LogisticConfig::default()).unwrap());
    let eta: Vec<f64> = (0..n).map(|i| if i >= n / 3 { 1.0 } else { 0.0 }).collect();
    let counts: Vec<usize> = [1e-7, 1e-5, 1e-3, 1e-1, 1.0]
        .iter()
        .map(|&c0| {
            let mut labels = LabelModel::new(eta.clone(), true, 0).unwrap();
            let params = IwalParams { c0, variant: IwalVariant::Iwal0, budget: n, checkpoint_every: None };
            baseline_iwal(&class, &mut labels, &params, 11).unwrap().queries.len()
        })
        .collect();
    let lo = *counts.iter().min().unwrap();
    let hi = *counts.iter().max().unwrap();
    assert!(hi > 10 * lo.max(1), "{counts:?}");
}

#[test]
fn iwal_on_explicit_class() {
    let inst = thresholds(16);
    for variant in [IwalVariant::Iwal1, IwalVariant::Oracular0] {
        let mut labels = LabelModel::new(inst.eta().to_vec(), true, 0).unwrap();
        let params = IwalParams { c0: 1e-2, variant, budget: 16, checkpoint_every: None };
        let r = baseline_iwal(&inst.class, &mut labels, &params, 2).unwrap();
        assert!(r.queries.iter().all(|q| q.prob > 0.0 && q.prob <= 1.0));
        assert!(r.returned.is_some());
    }
}

#[test]
fn runs_are_deterministic() {
    let inst = thresholds(16);
    let replay = |seed: u64| {
        let mut labels = inst.labels.reseeded(seed);
        let a = aced_fixed_budget(&inst.class, &mut labels, &FixedBudgetParams { budget: 120, epsilon: 0.25, ..FixedBudgetParams::default() }, seed).unwrap();
        let mut labels = inst.labels.reseeded(seed);
        let b = aced_fixed_confidence(&inst.class, &mut labels, &FixedConfidenceParams::default(), seed).unwrap();
        let mut labels = inst.labels.reseeded(seed);
        let c = baseline_uniform_disagreement(&inst.class, &mut labels, &UniformDisagreementParams { budget: 40, delta: 0.1, checkpoint_every: None }, seed).unwrap();
        (a, b, c)
    };
    assert_eq!(replay(9), replay(9));
    let e = ExplicitClass::new(vec![vec![true]], false).unwrap();
    assert_eq!(e.len(), 1);
}
