//! Estimators of the label means from a query log.

use serde::{Deserialize, Serialize};

use crate::error::{check_index, check_len, AcedError, Result};

/// One answered label query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub round: usize,
    pub index: usize,
    /// Probability with which `index` was drawn.
    pub prob: f64,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Naive,
    Ips,
    RidgeIps,
    Chaining,
}

/// Estimate of `eta` (in `values`) and of the bandit mean `mu` (in `mu`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimate {
    pub kind: EstimatorKind,
    pub values: Vec<f64>,
    pub mu: Vec<f64>,
    pub counts: Vec<usize>,
    pub t: usize,
    /// Whether the chaining polyhedron was found non-empty.
    pub feasible: Option<bool>,
}

impl EtaEstimate {
    /// A fixed estimate with no data behind it.
    pub fn constant(kind: EstimatorKind, n: usize, eta: f64) -> Self {
        Self {
            kind,
            values: vec![eta; n],
            mu: vec![2.0 * eta - 1.0; n],
            counts: vec![0; n],
            t: 0,
            feasible: None,
        }
    }

    pub fn from_mu(kind: EstimatorKind, mu: Vec<f64>, counts: Vec<usize>, t: usize) -> Self {
        Self {
            kind,
            values: mu.iter().map(|m| (1.0 + m) / 2.0).collect(),
            mu,
            counts,
            t,
            feasible: None,
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Per-coordinate cost `1 - 2 eta_hat`: plug-in error differences are
    /// `(1/n) sum_i cost_i (h_i - h'_i)`.
    pub fn cost(&self) -> Vec<f64> {
        self.values.iter().map(|v| 1.0 - 2.0 * v).collect()
    }
}

fn counts_and_sums(n: usize, log: &[Query]) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut counts = vec![0; n];
    let mut sums = vec![0.0; n];
    for q in log {
        check_index(q.index, n)?;
        counts[q.index] += 1;
        sums[q.index] += if q.label { 1.0 } else { -1.0 };
    }
    Ok((counts, sums))
}

/// Per-coordinate average of observed labels; unqueried coordinates get 0.5.
pub fn naive_estimate(n: usize, log: &[Query]) -> Result<EtaEstimate> {
    let mut counts = vec![0usize; n];
    let mut ones = vec![0usize; n];
    for q in log {
        check_index(q.index, n)?;
        counts[q.index] += 1;
        ones[q.index] += usize::from(q.label);
    }
    let values: Vec<f64> = counts
        .iter()
        .zip(&ones)
        .map(|(&c, &o)| if c == 0 { 0.5 } else { o as f64 / c as f64 })
        .collect();
    Ok(EtaEstimate {
        kind: EstimatorKind::Naive,
        mu: values.iter().map(|v| 2.0 * v - 1.0).collect(),
        values,
        counts,
        t: log.len(),
        feasible: None,
    })
}

/// Importance-weighted estimate with propensity shift `gamma`.
pub fn ips_estimate(n: usize, log: &[Query], gamma: f64) -> Result<EtaEstimate> {
    if !(gamma >= 0.0) {
        return Err(AcedError::InvalidArgument("gamma must be non-negative".into()));
    }
    let mut counts = vec![0; n];
    let mut values = vec![0.0; n];
    let mut mu = vec![0.0; n];
    for q in log {
        check_index(q.index, n)?;
        let denom = q.prob + gamma;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(AcedError::InvalidDesign(format!(
                "query of {} has propensity {}",
                q.index, q.prob
            )));
        }
        counts[q.index] += 1;
        if q.label {
            values[q.index] += 1.0 / denom;
        }
        mu[q.index] += if q.label { 1.0 } else { -1.0 } / denom;
    }
    if !log.is_empty() {
        let t = log.len() as f64;
        values.iter_mut().for_each(|v| *v /= t);
        mu.iter_mut().for_each(|v| *v /= t);
    }
    Ok(EtaEstimate {
        kind: EstimatorKind::Ips,
        values,
        mu,
        counts,
        t: log.len(),
        feasible: None,
    })
}

/// `sum_i v_i^2 / (t lambda_i)`; infinite when `v` touches a zero-mass coordinate.
pub fn design_norm_sq(v: &[(usize, f64)], lambda: &[f64], t: f64) -> f64 {
    v.iter()
        .map(|&(i, a)| {
            if a == 0.0 {
                0.0
            } else {
                a * a / (t * lambda[i])
            }
        })
        .sum()
}

/// Ridge-shrunk inverse-propensity vector `(t A(lambda) + s I)^{-1} X^T y`.
pub fn ridge_ips_vector(n: usize, log: &[Query], lambda: &[f64], shift: f64) -> Result<Vec<f64>> {
    check_len(n, lambda.len())?;
    let (_, sums) = counts_and_sums(n, log)?;
    let t = log.len() as f64;
    Ok((0..n)
        .map(|i| {
            let d = t * lambda[i] + shift;
            if d > 0.0 {
                sums[i] / d
            } else {
                0.0
            }
        })
        .collect())
}

fn sparse(v: &[f64]) -> Vec<(usize, f64)> {
    v.iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(i, a)| (i, *a))
        .collect()
}

fn check_support(v: &[(usize, f64)], lambda: &[f64]) -> Result<()> {
    match v.iter().find(|(i, _)| lambda[*i] <= 0.0) {
        Some((i, _)) => Err(AcedError::InvalidDesign(format!(
            "direction touches coordinate {i} with zero design mass"
        ))),
        None => Ok(()),
    }
}

/// Ridge-IPS estimate of `<v, mu>` with the shift tuned to confidence `delta`.
pub fn ridge_ips_pair(log: &[Query], lambda: &[f64], v: &[f64], delta: f64) -> Result<f64> {
    let n = lambda.len();
    check_len(n, v.len())?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AcedError::InvalidArgument("delta must lie in (0, 1)".into()));
    }
    let sv = sparse(v);
    if sv.is_empty() || log.is_empty() {
        return Ok(0.0);
    }
    check_support(&sv, lambda)?;
    let t = log.len() as f64;
    let shift = ((2.0 / delta).ln() / (3.0 * design_norm_sq(&sv, lambda, t))).sqrt();
    let (_, sums) = counts_and_sums(n, log)?;
    Ok(sv
        .iter()
        .map(|&(i, a)| a * sums[i] / (t * lambda[i] + shift))
        .sum())
}

/// Nested hypothesis subsets with `|levels[k]| <= 2^(2^k)` and `levels[0]` a singleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSequence {
    pub levels: Vec<Vec<usize>>,
}

/// `2^(2^k)`, saturating.
pub fn level_cap(k: usize) -> usize {
    if k == 0 {
        return 1;
    }
    match 1usize.checked_shl(1u32 << k.min(31)) {
        Some(v) if k < 6 => v,
        _ => usize::MAX,
    }
}

impl AdmissibleSequence {
    /// Farthest-point ordering under `dist`, truncated to each level's cap.
    pub fn greedy(size: usize, dist: impl Fn(usize, usize) -> f64) -> Self {
        assert!(size >= 1, "admissible sequence needs a non-empty set");
        let mut order = vec![0];
        let mut gap: Vec<f64> = (0..size).map(|j| dist(0, j)).collect();
        let mut used = vec![false; size];
        used[0] = true;
        while order.len() < size {
            let mut next = None;
            for j in 0..size {
                if !used[j] && next.is_none_or(|b: usize| gap[j] > gap[b]) {
                    next = Some(j);
                }
            }
            let j = next.expect("unused element exists");
            used[j] = true;
            order.push(j);
            for m in 0..size {
                if !used[m] {
                    gap[m] = gap[m].min(dist(j, m));
                }
            }
        }
        let mut levels = vec![vec![order[0]]];
        let mut k = 1;
        loop {
            let take = level_cap(k).min(size);
            levels.push(order[..take].to_vec());
            if take == size {
                break;
            }
            k += 1;
        }
        let seq = Self { levels };
        seq.assert_caps();
        seq
    }

    pub fn assert_caps(&self) {
        assert_eq!(self.levels[0].len(), 1, "first level must be a singleton");
        for (k, level) in self.levels.iter().enumerate() {
            assert!(level.len() <= level_cap(k), "level {k} exceeds its cardinality cap");
        }
    }
}

/// Slab `|<v, z> - center| <= width` over the sparse direction `v`.
struct Slab {
    v: Vec<(usize, f64)>,
    norm_sq: f64,
    center: f64,
    width: f64,
}

/// Widening factor of the pairwise slabs.
const SLAB_CONSTANT: f64 = 2.0 * (0.816_496_580_927_726 + 1.0);
const MAX_SWEEPS: usize = 10_000;

fn diff(a: &[bool], b: &[bool]) -> Vec<(usize, f64)> {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, (x, _))| (i, if *x { 1.0 } else { -1.0 }))
        .collect()
}

/// Multi-scale estimator over the hypotheses `group`: any point of `[-1, 1]^n` consistent
/// with all pairwise ridge-IPS estimates along a greedy admissible sequence.
pub fn chaining_estimate(
    group: &[&[bool]],
    log: &[Query],
    lambda: &[f64],
    delta: f64,
) -> Result<EtaEstimate> {
    let n = lambda.len();
    if group.is_empty() {
        return Err(AcedError::InvalidArgument("hypothesis group is empty".into()));
    }
    if group.len() > 4096 {
        return Err(AcedError::InvalidArgument(
            "chaining estimator supports at most 4096 hypotheses".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AcedError::InvalidArgument("delta must lie in (0, 1)".into()));
    }
    for h in group {
        check_len(n, h.len())?;
    }
    let (counts, sums) = counts_and_sums(n, log)?;
    let t = log.len();
    if t == 0 {
        let mut est = EtaEstimate::from_mu(EstimatorKind::Chaining, vec![0.0; n], counts, 0);
        est.feasible = Some(true);
        return Ok(est);
    }
    let tf = t as f64;
    let dist = |a: usize, b: usize| design_norm_sq(&diff(group[a], group[b]), lambda, tf).sqrt();

    let shifted = |shift: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let d = tf * lambda[i] + shift;
                if d > 0.0 {
                    (sums[i] / d).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let log_term = (2.0 / delta).ln();
    let mut diameter = 0.0_f64;
    for a in 0..group.len() {
        for b in a + 1..group.len() {
            diameter = diameter.max(dist(a, b));
        }
    }
    if diameter == 0.0 {
        let ones: Vec<(usize, f64)> = (0..n).map(|i| (i, 1.0)).collect();
        diameter = design_norm_sq(&ones, lambda, tf).sqrt();
    }
    let fallback = shifted((log_term / 3.0).sqrt() / diameter);

    let seq = AdmissibleSequence::greedy(group.len(), dist);
    let u = (log_term / 2.0).sqrt();
    let mut slabs = Vec::new();
    for (k, level) in seq.levels.iter().enumerate().skip(1) {
        let scale = u + 2f64.powf(k as f64 / 2.0);
        for (x, &a) in level.iter().enumerate() {
            for &b in &level[x + 1..] {
                let v = diff(group[a], group[b]);
                check_support(&v, lambda)?;
                let norm = design_norm_sq(&v, lambda, tf).sqrt();
                if norm == 0.0 {
                    continue;
                }
                let shift = (1.0f64 / 3.0).sqrt() * scale / norm;
                let center = v
                    .iter()
                    .map(|&(i, s)| s * sums[i] / (tf * lambda[i] + shift))
                    .sum();
                slabs.push(Slab {
                    norm_sq: v.len() as f64,
                    v,
                    center,
                    width: SLAB_CONSTANT * scale * norm,
                });
            }
        }
    }

    let (z, feasible) = project_onto_slabs(&slabs, fallback.clone());
    let mut est = EtaEstimate::from_mu(
        EstimatorKind::Chaining,
        if feasible { z } else { fallback },
        counts,
        t,
    );
    est.feasible = Some(feasible);
    Ok(est)
}

fn violation(slab: &Slab, z: &[f64]) -> f64 {
    let dot: f64 = slab.v.iter().map(|&(i, s)| s * z[i]).sum();
    dot - slab.center
}

/// Cyclic projections onto the slabs and the box, starting from `z`.
fn project_onto_slabs(slabs: &[Slab], mut z: Vec<f64>) -> (Vec<f64>, bool) {
    let feasible = |z: &[f64]| {
        slabs
            .iter()
            .all(|s| violation(s, z).abs() <= s.width * (1.0 + 1e-9) + 1e-12)
    };
    for _ in 0..MAX_SWEEPS {
        if feasible(&z) {
            return (z, true);
        }
        for s in slabs {
            let r = violation(s, &z);
            let excess = if r > s.width {
                r - s.width
            } else if r < -s.width {
                r + s.width
            } else {
                continue;
            };
            let step = excess / s.norm_sq;
            for &(i, a) in &s.v {
                z[i] -= step * a;
            }
        }
        for x in z.iter_mut() {
            *x = x.clamp(-1.0, 1.0);
        }
    }
    let ok = feasible(&z);
    (z, ok)
}

/// Plug-in error of a labeling under the estimate.
pub fn err_from_estimate(labels: &[bool], est: &EtaEstimate) -> f64 {
    let total: f64 = labels
        .iter()
        .zip(&est.values)
        .map(|(&h, &e)| if h { 1.0 - e } else { e })
        .sum();
    total / est.values.len() as f64
}
