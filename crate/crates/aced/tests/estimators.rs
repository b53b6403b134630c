use aced::estimators::{
    chaining_estimate, err_from_estimate, ips_estimate, level_cap, naive_estimate,
    ridge_ips_pair, ridge_ips_vector, AdmissibleSequence, EstimatorKind, EtaEstimate, Query,
};
use aced::pool::pool_error;
use aced::AcedError;
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q(index: usize, prob: f64, label: bool) -> Query {
    Query { round: 0, index, prob, label }
}

/// `t` i.i.d. draws from `lambda` with Bernoulli(`eta`) labels.
fn draw_log(rng: &mut ChaCha8Rng, lambda: &[f64], eta: &[f64], t: usize) -> Vec<Query> {
    let dist = WeightedIndex::new(lambda).unwrap();
    (0..t)
        .map(|_| {
            let i = dist.sample(rng);
            q(i, lambda[i], rng.random::<f64>() < eta[i])
        })
        .collect()
}

#[test]
fn naive_examples() {
    let est = naive_estimate(1, &[q(0, 1.0, true), q(0, 1.0, true), q(0, 1.0, false)]).unwrap();
    assert_relative_eq!(est.values[0], 2.0 / 3.0);

    let eta = [1.0, 0.0, 0.0, 1.0];
    let log: Vec<Query> = (0..4).map(|i| q(i, 0.25, eta[i] == 1.0)).collect();
    assert_eq!(naive_estimate(4, &log).unwrap().values, eta.to_vec());

    let empty = naive_estimate(3, &[]).unwrap();
    assert_eq!((empty.values, empty.mu), (vec![0.5; 3], vec![0.0; 3]));

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let log: Vec<Query> = (0..5)
        .flat_map(|i| (0..10_000).map(move |_| i))
        .map(|i| q(i, 0.2, rng.random::<bool>()))
        .collect();
    let est = naive_estimate(5, &log).unwrap();
    assert_eq!(est.t, est.counts.iter().sum::<usize>());
    assert!(est.values.iter().all(|v| (v - 0.5).abs() <= 0.05));
}

#[test]
fn ips_examples() {
    let log = [q(0, 1.0, true), q(0, 1.0, false), q(0, 1.0, true), q(0, 1.0, true)];
    assert_relative_eq!(ips_estimate(1, &log, 0.0).unwrap().values[0], 0.75);
    let far = ips_estimate(1, &log, 1e12).unwrap();
    assert!(far.values[0].abs() < 1e-11 && far.mu[0].abs() < 1e-11);
    assert!(matches!(ips_estimate(1, &[q(0, 0.0, true)], 0.0), Err(AcedError::InvalidDesign(_))));
}

#[test]
fn ips_is_unbiased() {
    let lambda = [0.1, 0.15, 0.2, 0.25, 0.3];
    let eta = [0.9, 0.2, 0.5, 0.7, 0.05];
    let reps = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sum = [0.0; 5];
    let mut sq = [0.0; 5];
    for _ in 0..reps {
        let est = ips_estimate(5, &draw_log(&mut rng, &lambda, &eta, 40), 0.0).unwrap();
        for i in 0..5 {
            sum[i] += est.values[i];
            sq[i] += est.values[i] * est.values[i];
        }
    }
    for i in 0..5 {
        let mean = sum[i] / reps as f64;
        let sd = (sq[i] / reps as f64 - mean * mean).sqrt();
        assert!((mean - eta[i]).abs() <= 3.0 * sd / (reps as f64).sqrt(), "coordinate {i}: {mean}");
    }
}

#[test]
fn ridge_pair_closed_form() {
    let n = 4;
    let lambda = vec![0.25; n];
    let log: Vec<Query> = (0..n).flat_map(|i| vec![q(i, 0.25, true); 3 + i]).collect();
    let t = log.len() as f64;
    let delta = 0.1;
    for i in 0..n {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        let s = ((2.0f64 / delta).ln() / (3.0 / (t * 0.25))).sqrt();
        let expect = (3 + i) as f64 / (t * 0.25 + s);
        assert_relative_eq!(ridge_ips_pair(&log, &lambda, &v, delta).unwrap(), expect, epsilon = 1e-12);
    }
    assert_eq!(ridge_ips_pair(&log, &lambda, &[0.0; 4], delta).unwrap(), 0.0);
    let holes = [0.5, 0.5, 0.0, 0.0];
    assert!(matches!(
        ridge_ips_pair(&log, &holes, &[0.0, 0.0, 1.0, 0.0], delta),
        Err(AcedError::InvalidDesign(_))
    ));
}

#[test]
fn ridge_pair_bias_bound() {
    let lambda = [0.3, 0.1, 0.2, 0.4];
    let mu = [1.0, -1.0, 1.0, 1.0];
    let eta: Vec<f64> = mu.iter().map(|m| (1.0 + m) / 2.0).collect();
    let v = [1.0, -1.0, 0.0, 1.0];
    let (t, delta, reps) = (100, 0.1, 20_000);
    let truth: f64 = v.iter().zip(&mu).map(|(a, b)| a * b).sum();
    let norm_sq: f64 = v.iter().zip(&lambda).map(|(a, l)| a * a / (t as f64 * l)).sum();
    let s = ((2.0f64 / delta).ln() / (3.0 * norm_sq)).sqrt();
    let bound: f64 = v.iter().zip(&lambda).map(|(a, l)| s * a * a / (t as f64 * l + s)).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..reps {
        let e = ridge_ips_pair(&draw_log(&mut rng, &lambda, &eta, t), &lambda, &v, delta).unwrap() - truth;
        sum += e;
        sq += e * e;
    }
    let mean = sum / reps as f64;
    let se = (sq / reps as f64 - mean * mean).sqrt() / (reps as f64).sqrt();
    assert!(mean.abs() <= bound + 3.0 * se, "bias {mean} bound {bound}");
}

#[test]
fn ridge_pair_coverage() {
    let lambda = [0.25, 0.1, 0.15, 0.2, 0.1, 0.2];
    let eta = [0.8, 0.3, 0.5, 0.6, 0.1, 0.45];
    let mu: Vec<f64> = eta.iter().map(|e| 2.0 * e - 1.0).collect();
    let v = [1.0, 0.0, -1.0, 0.0, 1.0, 0.0];
    let (t, delta, reps) = (200, 0.1, 2000);
    let truth: f64 = v.iter().zip(&mu).map(|(a, b)| a * b).sum();
    let norm: f64 = v.iter().zip(&lambda).map(|(a, l)| a * a / l).sum();
    let radius = ((2.0f64 / 3.0).sqrt() + 1.0) * (2.0 * norm * (2.0f64 / delta).ln() / t as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let misses = (0..reps)
        .filter(|_| {
            let est = ridge_ips_pair(&draw_log(&mut rng, &lambda, &eta, t), &lambda, &v, delta).unwrap();
            (est - truth).abs() > radius
        })
        .count();
    assert!(misses as f64 / reps as f64 <= delta + 0.02, "{misses} misses");
}

#[test]
fn admissible_sequence_caps() {
    assert_eq!((level_cap(0), level_cap(1), level_cap(2), level_cap(3)), (1, 4, 16, 256));
    let seq = AdmissibleSequence::greedy(300, |a, b| (a as f64 - b as f64).abs());
    seq.assert_caps();
    let last = seq.levels.last().unwrap();
    assert_eq!(last.len(), 300);
    for w in seq.levels.windows(2) {
        assert!(w[1].starts_with(&w[0]));
    }
}

fn random_group(rng: &mut ChaCha8Rng, size: usize, n: usize) -> Vec<Vec<bool>> {
    (0..size).map(|_| (0..n).map(|_| rng.random()).collect()).collect()
}

#[test]
fn chaining_small_groups() {
    let lambda = vec![0.125; 8];
    let eta = vec![0.7; 8];
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let log = draw_log(&mut rng, &lambda, &eta, 400);

    let one = [vec![true; 8]];
    let refs: Vec<&[bool]> = one.iter().map(|r| r.as_slice()).collect();
    let est = chaining_estimate(&refs, &log, &lambda, 0.1).unwrap();
    assert_eq!(est.feasible, Some(true));
    assert_eq!(est.kind, EstimatorKind::Chaining);

    let pair = [vec![true, true, false, false, true, false, true, false], vec![false; 8]];
    let refs: Vec<&[bool]> = pair.iter().map(|r| r.as_slice()).collect();
    let est = chaining_estimate(&refs, &log, &lambda, 0.1).unwrap();
    assert_eq!(est.feasible, Some(true));
    let v: Vec<f64> = pair[0].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let dev: f64 = v.iter().zip(&est.mu).map(|(a, m)| a * (m - 0.4)).sum::<f64>().abs();
    let norm: f64 = v.iter().zip(&lambda).map(|(a, l)| a * a / l).sum();
    let u = (20.0f64.ln() / 2.0).sqrt();
    let width = 2.0 * ((2.0f64 / 3.0).sqrt() + 1.0) * (u + 2f64.sqrt()) * (norm / 400.0).sqrt();
    let ridge = ridge_ips_pair(&log, &lambda, &v, 0.1).unwrap();
    assert!(dev <= width + (ridge - 4.0 * 0.4).abs() + 1e-9, "{dev} vs {width}");
}

#[test]
fn chaining_feasibility_rate() {
    let n = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let group = random_group(&mut rng, 64, n);
    let refs: Vec<&[bool]> = group.iter().map(|r| r.as_slice()).collect();
    let lambda = vec![1.0 / n as f64; n];
    let eta: Vec<f64> = (0..n).map(|i| 0.2 + 0.05 * i as f64).collect();
    let runs = 100;
    let feasible = (0..runs)
        .filter(|_| {
            let log = draw_log(&mut rng, &lambda, &eta, 300);
            let est = chaining_estimate(&refs, &log, &lambda, 0.1).unwrap();
            assert!(est.mu.iter().all(|m| m.abs() <= 1.0));
            est.feasible == Some(true)
        })
        .count();
    assert!(feasible as f64 / runs as f64 >= 0.9, "{feasible}/{runs}");
}

#[test]
fn chaining_rejects_oversized_group() {
    let rows = vec![vec![false; 2]; 4097];
    let refs: Vec<&[bool]> = rows.iter().map(|r| r.as_slice()).collect();
    assert!(chaining_estimate(&refs, &[], &[0.5, 0.5], 0.1).is_err());
}

#[test]
fn err_from_estimate_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let eta: Vec<f64> = (0..7).map(|_| rng.random()).collect();
        let h: Vec<bool> = (0..7).map(|_| rng.random()).collect();
        let g: Vec<bool> = (0..7).map(|_| rng.random()).collect();
        let est = EtaEstimate::from_mu(EstimatorKind::Naive, eta.iter().map(|e| 2.0 * e - 1.0).collect(), vec![0; 7], 0);
        assert_relative_eq!(err_from_estimate(&h, &est), pool_error(&h, &eta).unwrap(), epsilon = 1e-12);
        let direct: f64 = (0..7)
            .map(|i| (f64::from(u8::from(g[i])) - f64::from(u8::from(h[i]))) * (2.0 * eta[i] - 1.0))
            .sum::<f64>()
            / 7.0;
        assert_relative_eq!(err_from_estimate(&h, &est) - err_from_estimate(&g, &est), direct, epsilon = 1e-12);
    }
}

#[test]
fn ridge_vector_shrinks() {
    let log = [q(0, 0.5, true), q(0, 0.5, true), q(1, 0.5, false)];
    let v = ridge_ips_vector(2, &log, &[0.5, 0.5], 1.0).unwrap();
    assert_relative_eq!(v[0], 2.0 / 2.5);
    assert_relative_eq!(v[1], -1.0 / 2.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chaining_output_stays_in_box(seed in any::<u64>(), size in 1usize..24, t in 1usize..200) {
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let group = random_group(&mut rng, size, n);
        let refs: Vec<&[bool]> = group.iter().map(|r| r.as_slice()).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let lambda: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let eta: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let log = draw_log(&mut rng, &lambda, &eta, t);
        let est = chaining_estimate(&refs, &log, &lambda, 0.1).unwrap();
        prop_assert!(est.mu.iter().all(|m| (-1.0..=1.0).contains(m)));
        prop_assert!(est.feasible.is_some());
    }

    #[test]
    fn naive_values_are_clipped(labels in prop::collection::vec((0usize..5, any::<bool>()), 0..80)) {
        let log: Vec<Query> = labels.iter().map(|&(i, y)| q(i, 0.2, y)).collect();
        let est = naive_estimate(5, &log).unwrap();
        prop_assert!(est.values.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(est.t, est.counts.iter().sum::<usize>());
    }
}
