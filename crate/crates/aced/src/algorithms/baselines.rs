use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_labels, erm_observed, RunRecord};
use crate::class::{HypothesisClass, LinearHypothesis};
use crate::design::{sample_unique, Design};
use crate::error::{AcedError, Result};
use crate::estimators::Query;
use crate::oracles::{constrained_weighted_max, weighted_max};
use crate::pool::{LabelSource, Pool};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassiveParams {
    pub budget: usize,
    /// Labels between checkpoints; `None` uses a tenth of the budget.
    pub checkpoint_every: Option<usize>,
}

fn checkpoint_step(budget: usize, every: Option<usize>) -> usize {
    every.unwrap_or(budget / 10).max(1)
}

/// Uniformly random distinct queries, then ERM on the observed labels.
pub fn baseline_passive(
    class: &HypothesisClass,
    labels: &mut dyn LabelSource,
    params: &PassiveParams,
    seed: u64,
) -> Result<RunRecord> {
    check_labels(class, labels)?;
    let n = class.n();
    let mut record = RunRecord::new("passive", seed, &[("budget", params.budget as f64)]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = Design::uniform(n);
    let (order, _) = sample_unique(&uniform, params.budget.min(n), &vec![false; n], &mut rng)?;
    if params.budget > n {
        record.flag("pool_exhausted");
    }
    let step = checkpoint_step(params.budget, params.checkpoint_every);
    let prob = 1.0 / n as f64;
    for (t, &i) in order.iter().enumerate() {
        let label = labels.query(i)?;
        record.queries.push(Query {
            round: t / step + 1,
            index: i,
            prob,
            label,
        });
        if (t + 1) % step == 0 || t + 1 == order.len() {
            let h = erm_observed(class, &record.queries)?;
            record.checkpoint(t + 1, &h);
        }
    }
    record.finish(erm_observed(class, &record.queries)?);
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformDisagreementParams {
    pub budget: usize,
    pub delta: f64,
    pub checkpoint_every: Option<usize>,
}

/// Version-space elimination querying uniformly on the disagreement region, with a
/// Bernstein radius and a union bound over the class.
pub fn baseline_uniform_disagreement(
    class: &HypothesisClass,
    labels: &mut dyn LabelSource,
    params: &UniformDisagreementParams,
    seed: u64,
) -> Result<RunRecord> {
    check_labels(class, labels)?;
    let c = class.require_explicit()?;
    if !(params.delta > 0.0 && params.delta < 1.0) {
        return Err(AcedError::InvalidArgument("delta must lie in (0, 1)".into()));
    }
    let n = c.n();
    let nf = n as f64;
    let size = c.len();
    let mut record = RunRecord::new(
        "uniform_disagreement",
        seed,
        &[("budget", params.budget as f64), ("delta", params.delta)],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alive = vec![true; size];
    // Importance-weighted loss sums: each draw from DIS(V) carries weight |DIS(V)| / n.
    let mut loss = vec![0.0; size];
    let step = checkpoint_step(params.budget, params.checkpoint_every);
    let mut weights: Vec<(usize, bool, f64)> = Vec::new();
    let best = |alive: &[bool], loss: &[f64]| -> usize {
        (0..size)
            .filter(|&h| alive[h])
            .fold(None, |acc: Option<usize>, h| match acc {
                Some(b) if loss[b] <= loss[h] => Some(b),
                _ => Some(h),
            })
            .expect("the version space is never empty")
    };
    for t in 1..=params.budget {
        let dis: Vec<usize> = (0..n)
            .filter(|&i| {
                let mut seen = [false; 2];
                for h in (0..size).filter(|&h| alive[h]) {
                    seen[usize::from(c.row(h)[i])] = true;
                }
                seen[0] && seen[1]
            })
            .collect();
        if dis.is_empty() {
            record.flag("disagreement_empty");
            break;
        }
        let i = dis[rng.random_range(0..dis.len())];
        let label = labels.query(i)?;
        let w = dis.len() as f64 / nf;
        record.queries.push(Query {
            round: t,
            index: i,
            prob: 1.0 / dis.len() as f64,
            label,
        });
        weights.push((i, label, w));
        for h in 0..size {
            if c.row(h)[i] != label {
                loss[h] += w;
            }
        }
        let tf = t as f64;
        let log_term = (2.0 * size as f64 * tf * (tf + 1.0) / params.delta).ln();
        let lead = best(&alive, &loss);
        for h in 0..size {
            if !alive[h] || h == lead {
                continue;
            }
            // Empirical second moment of the per-draw loss difference against the leader.
            let second: f64 = weights
                .iter()
                .filter(|(j, _, _)| c.row(h)[*j] != c.row(lead)[*j])
                .map(|(_, _, w)| w * w)
                .sum::<f64>()
                / tf;
            let radius = (2.0 * second * log_term / tf).sqrt() + 2.0 * log_term / (3.0 * tf);
            if (loss[h] - loss[lead]) / tf > radius {
                alive[h] = false;
            }
        }
        if t % step == 0 || t == params.budget {
            let h = c.hypothesis(best(&alive, &loss));
            record.checkpoint(t, &h);
        }
    }
    let out = c.hypothesis(best(&alive, &loss));
    record.checkpoint(record.queries.len(), &out);
    record.finish(out);
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IwalVariant {
    Iwal0,
    Iwal1,
    Oracular0,
    Oracular1,
}

impl IwalVariant {
    fn constants(self) -> (f64, f64) {
        match self {
            Self::Iwal0 | Self::Oracular0 => (5.0 + 2.0 * std::f64::consts::SQRT_2, 5.0),
            Self::Iwal1 | Self::Oracular1 => (1.0, 1.0),
        }
    }

    fn oracular(self) -> bool {
        matches!(self, Self::Oracular0 | Self::Oracular1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IwalParams {
    pub c0: f64,
    pub variant: IwalVariant,
    /// Maximum number of labels; the stream ends earlier if the pool runs out.
    pub budget: usize,
    pub checkpoint_every: Option<usize>,
}

/// Query probability for loss gap `gap` at stream position `k`.
pub fn iwal_probability(gap: f64, k: usize, c0: f64, variant: IwalVariant) -> f64 {
    if k <= 1 {
        return 1.0;
    }
    let km1 = (k - 1) as f64;
    let b = c0 * (k as f64).ln() / km1;
    let a = b.sqrt();
    if gap <= a + b {
        return 1.0;
    }
    // gap = (c1/sqrt(s) - c1 + 1) a + (c2/s - c2 + 1) b, solved for x = 1/sqrt(s).
    let (c1, c2) = variant.constants();
    let qa = c2 * b;
    let qb = c1 * a;
    let qc = (1.0 - c1) * a + (1.0 - c2) * b - gap;
    let x = if qa > 0.0 {
        (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa)
    } else if qb > 0.0 {
        -qc / qb
    } else {
        return 1.0;
    };
    if !(x > 0.0) || !x.is_finite() {
        return 1.0;
    }
    (1.0 / (x * x)).min(1.0)
}

fn logistic_loss(pool: &Pool, lin: &LinearHypothesis, i: usize, y: bool) -> f64 {
    let s = lin.score(pool.row(i).unwrap_or(&[]));
    let m = if y { s } else { -s };
    // log(1 + exp(-m)), stable for large |m|.
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Streaming importance-weighted active learning over a random pool order.
pub fn baseline_iwal(
    class: &HypothesisClass,
    labels: &mut dyn LabelSource,
    params: &IwalParams,
    seed: u64,
) -> Result<RunRecord> {
    check_labels(class, labels)?;
    if !(params.c0 > 0.0) {
        return Err(AcedError::InvalidArgument("c0 must be positive".into()));
    }
    let n = class.n();
    let mut record = RunRecord::new(
        match params.variant {
            IwalVariant::Iwal0 => "iwal0",
            IwalVariant::Iwal1 => "iwal1",
            IwalVariant::Oracular0 => "oracular0",
            IwalVariant::Oracular1 => "oracular1",
        },
        seed,
        &[("c0", params.c0), ("budget", params.budget as f64)],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stream: Vec<usize> = (0..n).collect();
    stream.shuffle(&mut rng);
    let step = checkpoint_step(params.budget, params.checkpoint_every);
    // w_i = sum over labeled copies of (2y - 1) / p: the weighted ERM is max_h sum_i w_i h_i.
    let mut w = vec![0.0; n];
    let mut labeled: Vec<(usize, bool, f64)> = Vec::new();
    let surrogate = match class {
        HypothesisClass::Linear(c) if !params.variant.oracular() => Some(&c.pool),
        _ => None,
    };
    for (pos, &x) in stream.iter().enumerate() {
        if record.queries.len() >= params.budget {
            break;
        }
        let k = pos + 1;
        let (h, _) = weighted_max(class, &w)?;
        let flipped = !h.labels[x];
        let Some((alt, _)) = constrained_weighted_max(class, &w, x, flipped)? else {
            continue;
        };
        assert_ne!(alt.labels[x], h.labels[x], "flip constraint must hold");
        let gap = if k > 1 {
            let total: f64 = labeled
                .iter()
                .map(|&(i, y, inv_p)| {
                    let (lh, la) = match (surrogate, &h.linear, &alt.linear) {
                        (Some(pool), Some(a), Some(b)) => (logistic_loss(pool, a, i, y), logistic_loss(pool, b, i, y)),
                        _ => (f64::from(u8::from(h.labels[i] != y)), f64::from(u8::from(alt.labels[i] != y))),
                    };
                    inv_p * (la - lh)
                })
                .sum();
            total / (k - 1) as f64
        } else {
            0.0
        };
        let p = iwal_probability(gap, k, params.c0, params.variant);
        if rng.random::<f64>() < p {
            let y = labels.query(x)?;
            w[x] += if y { 1.0 } else { -1.0 } / p;
            labeled.push((x, y, 1.0 / p));
            record.queries.push(Query {
                round: k,
                index: x,
                prob: p,
                label: y,
            });
            let t = record.queries.len();
            if t.is_multiple_of(step) {
                let cur = weighted_max(class, &w)?.0;
                record.checkpoint(t, &cur);
            }
        }
    }
    let out = weighted_max(class, &w)?.0;
    record.checkpoint(record.queries.len(), &out);
    record.finish(out);
    Ok(record)
}
