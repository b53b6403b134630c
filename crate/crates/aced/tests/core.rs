use aced::class::{gap_table, to_bandit, ExplicitClass, HypothesisClass};
use aced::complexity::make_prop3_instance;
use aced::pool::{pool_error, LabelModel, LabelSource, Pool};
use aced::AcedError;
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Error by direct summation over points, written independently of the library.
fn direct_error(h: &[bool], eta: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..h.len() {
        let hi = if h[i] { 1.0 } else { 0.0 };
        total += eta[i] * (1.0 - hi) + (1.0 - eta[i]) * hi;
    }
    total / h.len() as f64
}

fn explicit(rows: Vec<Vec<bool>>) -> HypothesisClass {
    HypothesisClass::Explicit(ExplicitClass::new(rows, true).unwrap())
}

#[test]
fn pool_error_examples() {
    assert_eq!(pool_error(&[false; 5], &[0.0; 5]).unwrap(), 0.0);
    let inst = make_prop3_instance(4).unwrap();
    let c = inst.class.explicit().unwrap();
    assert_eq!(inst.class.pool_error(0, inst.eta()).unwrap(), 0.0);
    for h in 1..c.len() {
        assert_relative_eq!(inst.class.pool_error(h, inst.eta()).unwrap(), 0.25, epsilon = 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let eta: Vec<f64> = (0..9).map(|_| rng.random()).collect();
        let h: Vec<bool> = (0..9).map(|_| rng.random()).collect();
        assert_relative_eq!(pool_error(&h, &eta).unwrap(), direct_error(&h, &eta), epsilon = 1e-12);
    }
    assert!(matches!(inst.class.pool_error(99, inst.eta()), Err(AcedError::IndexOutOfRange { .. })));
}

#[test]
fn gap_table_examples() {
    let single = explicit(vec![vec![true, false]]);
    let t = gap_table(&single, &[0.3, 0.6]).unwrap();
    assert_eq!((t.h_star, t.gaps.clone()), (0, vec![0.0]));
    assert_relative_eq!(t.nu, direct_error(&[true, false], &[0.3, 0.6]));
    assert_eq!(t.delta_min, None);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let rows: Vec<Vec<bool>> = (0..8).map(|_| (0..6).map(|_| rng.random()).collect()).collect();
        let eta: Vec<f64> = (0..6).map(|_| rng.random()).collect();
        let class = HypothesisClass::Explicit(ExplicitClass::new(rows.clone(), false).unwrap());
        let t = gap_table(&class, &eta).unwrap();
        let errs: Vec<f64> = rows.iter().map(|r| direct_error(r, &eta)).collect();
        let best = errs.iter().copied().fold(f64::INFINITY, f64::min);
        let first = errs.iter().position(|&e| e == best).unwrap();
        assert_eq!(t.h_star, first);
        for (g, e) in t.gaps.iter().zip(&errs) {
            assert_relative_eq!(*g, e - best, epsilon = 1e-12);
        }
    }
}

#[test]
fn gap_table_needs_explicit_class() {
    let pool = Pool::with_features(vec!["a".into(), "b".into()], &[vec![0.0], vec![1.0]]).unwrap();
    let class = HypothesisClass::Linear(aced::LinearClass::new(pool, Default::default()).unwrap());
    assert!(matches!(gap_table(&class, &[0.0, 1.0]), Err(AcedError::Unsupported(_))));
}

#[test]
fn dedup_keeps_first_occurrence() {
    let c = ExplicitClass::new(vec![vec![true, false], vec![false, false], vec![true, false]], true).unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c.row(0), &[true, false]);
}

#[test]
fn query_examples() {
    let mut certain = LabelModel::new(vec![1.0, 0.0], false, 0).unwrap();
    assert!((0..100).all(|_| certain.query(0).unwrap()));
    assert!((0..100).all(|_| !certain.query(1).unwrap()));

    let mut persistent = LabelModel::new(vec![0.5; 10], true, 4).unwrap();
    for i in 0..10 {
        let y = persistent.query(i).unwrap();
        assert_eq!(persistent.query(i).unwrap(), y);
    }

    let mut fresh = LabelModel::new(vec![0.3], false, 9).unwrap();
    let draws = 100_000;
    let ones = (0..draws).filter(|_| fresh.query(0).unwrap()).count();
    assert!((ones as f64 / draws as f64 - 0.3).abs() <= 0.01);
    assert!(matches!(fresh.query(1), Err(AcedError::IndexOutOfRange { .. })));
}

#[test]
fn bandit_view_examples() {
    let half = to_bandit(&[0.5; 4]);
    assert!(half.mu.iter().all(|&m| m == 0.0));
    assert_eq!(half.value(&[true, true, false, true]), 0.0);

    let inst = make_prop3_instance(3).unwrap();
    assert!(to_bandit(inst.eta()).mu.iter().all(|&m| m == -1.0));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let eta: Vec<f64> = (0..7).map(|_| if rng.random() { 1.0 } else { 0.0 }).collect();
        let rows: Vec<Vec<bool>> = (0..10).map(|_| (0..7).map(|_| rng.random()).collect()).collect();
        let view = to_bandit(&eta);
        assert!(view.mu.iter().all(|m| m.abs() == 1.0));
        let class = HypothesisClass::Explicit(ExplicitClass::new(rows.clone(), false).unwrap());
        let star = gap_table(&class, &eta).unwrap().h_star;
        let best = rows.iter().map(|r| view.value(r)).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(view.value(&rows[star]), best);
    }
}

fn class_and_eta() -> impl Strategy<Value = (Vec<Vec<bool>>, Vec<f64>)> {
    (1usize..10).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(any::<bool>(), n), 1..64),
            prop::collection::vec(0.0..=1.0f64, n),
        )
    })
}

proptest! {
    #[test]
    fn argmin_error_is_argmax_set_sum((rows, eta) in class_and_eta()) {
        let class = HypothesisClass::Explicit(ExplicitClass::new(rows.clone(), true).unwrap());
        let table = gap_table(&class, &eta).unwrap();
        let view = to_bandit(&eta);
        let c = class.explicit().unwrap();
        let best = c.rows().iter().map(|r| view.value(r)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((view.value(c.row(table.h_star)) - best).abs() <= 1e-12);
        for r in c.rows() {
            prop_assert!((view.error(r) - pool_error(r, &eta).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn pool_error_is_affine_in_eta(
        (h, a, b) in (1usize..12).prop_flat_map(|n| (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0.0..=1.0f64, n),
            prop::collection::vec(0.0..=1.0f64, n),
        ))
    ) {
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        let lhs = pool_error(&h, &mid).unwrap();
        let rhs = (pool_error(&h, &a).unwrap() + pool_error(&h, &b).unwrap()) / 2.0;
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn persistent_queries_are_idempotent(
        eta in prop::collection::vec(0.0..=1.0f64, 1..20),
        seed in any::<u64>(),
        order in prop::collection::vec(0usize..20, 1..60),
    ) {
        let mut model = LabelModel::new(eta.clone(), true, seed).unwrap();
        let mut first = vec![None; eta.len()];
        for i in order.into_iter().map(|i| i % eta.len()) {
            let y = model.query(i).unwrap();
            prop_assert_eq!(*first[i].get_or_insert(y), y);
        }
    }
}
