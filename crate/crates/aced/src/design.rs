//! Sampling designs, design objectives and their solvers.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class::{ExplicitClass, Hypothesis, HypothesisClass};
use crate::error::{check_len, AcedError, Result};
use crate::oracles::weighted_max;

pub const DEFAULT_FLOOR: f64 = 1e-9;

/// A probability distribution over pool indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    lambda: Vec<f64>,
}

/// Normalizes `v` to the simplex with every entry at least `floor`.
fn floor_normalize(v: &mut [f64], floor: f64) {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    let mut pinned = vec![false; v.len()];
    loop {
        let mut changed = false;
        for (x, p) in v.iter_mut().zip(pinned.iter_mut()) {
            if !*p && *x < floor {
                *x = floor;
                *p = true;
                changed = true;
            }
        }
        let fixed = pinned.iter().filter(|p| **p).count() as f64 * floor;
        let free: f64 = v.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(x, _)| x).sum();
        if free > 0.0 {
            let scale = (1.0 - fixed) / free;
            v.iter_mut()
                .zip(&pinned)
                .filter(|(_, p)| !**p)
                .for_each(|(x, _)| *x *= scale);
        }
        if !changed {
            break;
        }
    }
}

impl Design {
    pub fn uniform(n: usize) -> Self {
        Self {
            lambda: vec![1.0 / n as f64; n],
        }
    }

    /// Normalizes non-negative weights and applies the floor.
    pub fn new(weights: Vec<f64>, floor: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(AcedError::InvalidDesign("empty design".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(AcedError::InvalidDesign("weights must be finite and non-negative".into()));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(AcedError::InvalidDesign("weights sum to zero".into()));
        }
        if !(floor >= 0.0 && floor * (weights.len() as f64) < 1.0) {
            return Err(AcedError::InvalidDesign("floor too large for the pool".into()));
        }
        let mut lambda = weights;
        floor_normalize(&mut lambda, floor);
        Ok(Self { lambda })
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambda
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.lambda
    }

    /// Coordinatewise average of two designs.
    pub fn mix(a: &Design, b: &Design) -> Result<Design> {
        check_len(a.n(), b.n())?;
        Ok(Design {
            lambda: a.lambda.iter().zip(&b.lambda).map(|(x, y)| 0.5 * (x + y)).collect(),
        })
    }

    /// Total variation distance to another distribution.
    pub fn tv(&self, other: &[f64]) -> f64 {
        0.5 * self
            .lambda
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Solver hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Absolute certificate tolerance.
    pub tol: f64,
    /// Certificate tolerance relative to the current value; the looser of the two applies.
    pub rel_tol: f64,
    pub b0: usize,
    pub max_batch: usize,
    pub max_iter: usize,
    pub floor: f64,
    pub initial_step: f64,
    pub max_halvings: usize,
    /// Multiple of the paired standard error below which two step sizes tie.
    pub tie_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            rel_tol: 0.02,
            b0: 16,
            max_batch: 1 << 16,
            max_iter: 100_000,
            floor: DEFAULT_FLOOR,
            initial_step: 1.0,
            max_halvings: 30,
            tie_factor: 1.0,
        }
    }
}

impl SolverConfig {
    fn tolerance(&self, value: f64) -> f64 {
        self.tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub lambda: Design,
    pub value: f64,
    pub value_se: f64,
    pub certificate: f64,
    pub batch_trajectory: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// One hypothesis of an enumerated objective: `f = inv_den * sum_i diff_i * z_i`.
#[derive(Debug, Clone)]
struct Candidate {
    index: usize,
    diff: Vec<(usize, f64)>,
    inv_den: f64,
}

#[derive(Debug, Clone)]
enum Search<'a> {
    Enumerate(Vec<Candidate>),
    Oracle {
        class: &'a HypothesisClass,
        cost: Vec<f64>,
        scale: f64,
        n_max: usize,
    },
}

/// `weight * max over pairs of sum_{i in pair} 1 / (n^2 lambda_i)`.
#[derive(Debug, Clone)]
struct PairTerm {
    weight: f64,
    sets: Vec<Vec<usize>>,
}

impl PairTerm {
    fn argmax(&self, lambda: &[f64], n2: f64) -> (f64, usize) {
        let mut best = (0.0, 0);
        for (s, set) in self.sets.iter().enumerate() {
            let v: f64 = set.iter().map(|&i| 1.0 / (n2 * lambda[i])).sum();
            if v > best.0 {
                best = (v, s);
            }
        }
        best
    }
}

/// Expected maximum over hypotheses of a Gaussian process indexed by the class.
#[derive(Debug, Clone)]
pub struct GaussianObjective<'a> {
    n: usize,
    anchor: Vec<bool>,
    anchor_index: Option<usize>,
    search: Search<'a>,
    pair: Option<PairTerm>,
}

fn signed_diff(a: &[bool], b: &[bool]) -> Vec<(usize, f64)> {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, (x, _))| (i, if *x { 1.0 } else { -1.0 }))
        .collect()
}

fn gap_against(cost: &[f64], h: &[bool], anchor: &[bool]) -> f64 {
    let n = cost.len() as f64;
    cost.iter()
        .zip(h.iter().zip(anchor))
        .map(|(c, (&x, &y))| c * (f64::from(u8::from(x)) - f64::from(u8::from(y))))
        .sum::<f64>()
        / n
}

impl<'a> GaussianObjective<'a> {
    /// Budgeted objective: `f(h) = (anchor - h)^T z / (scale + err(h) - err(anchor))` with
    /// plug-in errors from `cost` and `z_i = zeta_i / (n sqrt(lambda_i))`.
    pub fn fixed_budget(
        class: &'a HypothesisClass,
        anchor: &Hypothesis,
        cost: &[f64],
        scale: f64,
        n_max: usize,
    ) -> Result<Self> {
        let n = class.n();
        check_len(n, anchor.labels.len())?;
        check_len(n, cost.len())?;
        if !(scale > 0.0) {
            return Err(AcedError::InvalidArgument("scale must be positive".into()));
        }
        let search = match class {
            HypothesisClass::Explicit(c) => {
                let mut cands = Vec::new();
                for (h, row) in c.rows().iter().enumerate() {
                    let diff = signed_diff(&anchor.labels, row);
                    if diff.is_empty() {
                        continue;
                    }
                    let den = scale + gap_against(cost, row, &anchor.labels);
                    if !(den > 0.0) {
                        return Err(AcedError::DegenerateObjective(format!(
                            "hypothesis {h} has denominator {den}"
                        )));
                    }
                    cands.push(Candidate {
                        index: h,
                        diff,
                        inv_den: 1.0 / den,
                    });
                }
                Search::Enumerate(cands)
            }
            HypothesisClass::Linear(_) => Search::Oracle {
                class,
                cost: cost.to_vec(),
                scale,
                n_max: n_max.max(1),
            },
        };
        Ok(Self {
            n,
            anchor: anchor.labels.clone(),
            anchor_index: anchor.index,
            search,
            pair: None,
        })
    }

    /// Diagnostic objective with true gaps: `f(h) = (h* - h)^T z / max(gap_h, epsilon)`.
    pub fn true_gap(class: &ExplicitClass, h_star: usize, gaps: &[f64], epsilon: f64) -> Result<Self> {
        check_len(class.len(), gaps.len())?;
        let anchor = class.row(h_star).to_vec();
        let mut cands = Vec::new();
        for (h, row) in class.rows().iter().enumerate() {
            let diff = signed_diff(&anchor, row);
            if diff.is_empty() {
                continue;
            }
            let den = gaps[h].max(epsilon);
            if !(den > 0.0) {
                return Err(AcedError::DegenerateObjective(format!(
                    "hypothesis {h} ties the optimum with epsilon = 0"
                )));
            }
            cands.push(Candidate {
                index: h,
                diff,
                inv_den: 1.0 / den,
            });
        }
        Ok(Self {
            n: class.n(),
            anchor,
            anchor_index: Some(h_star),
            search: Search::Enumerate(cands),
            pair: None,
        })
    }

    /// Confidence objective over the listed hypotheses:
    /// `E[max_h (h - h_0)^T z]^2 + log_weight * max_{h,h'} sum_{i: h_i != h'_i} 1/(n^2 lambda_i)`.
    pub fn fixed_confidence(class: &ExplicitClass, members: &[usize], log_weight: f64) -> Result<Self> {
        let Some(&first) = members.first() else {
            return Err(AcedError::InvalidArgument("no surviving hypotheses".into()));
        };
        let anchor = class.row(first).to_vec();
        let mut cands = Vec::new();
        let mut sets = Vec::new();
        for (x, &h) in members.iter().enumerate() {
            let diff = signed_diff(class.row(h), &anchor);
            if !diff.is_empty() {
                cands.push(Candidate {
                    index: h,
                    diff,
                    inv_den: 1.0,
                });
            }
            for &g in &members[x + 1..] {
                let set: Vec<usize> = signed_diff(class.row(h), class.row(g))
                    .into_iter()
                    .map(|(i, _)| i)
                    .collect();
                if !set.is_empty() {
                    sets.push(set);
                }
            }
        }
        sets.sort();
        sets.dedup();
        Ok(Self {
            n: class.n(),
            anchor,
            anchor_index: Some(first),
            search: Search::Enumerate(cands),
            pair: Some(PairTerm {
                weight: log_weight,
                sets,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Per-sample maximum, its maximizer, and the sparse gradient in `lambda`.
    fn sample_max(
        &self,
        lambda: &[f64],
        zeta: &[f64],
        want_grad: bool,
    ) -> Result<(f64, Option<usize>, Option<Vec<bool>>, Vec<(usize, f64)>)> {
        let nf = self.n as f64;
        let z: Vec<f64> = zeta
            .iter()
            .zip(lambda)
            .map(|(q, l)| q / (nf * l.sqrt()))
            .collect();
        match &self.search {
            Search::Enumerate(cands) => {
                let mut best: Option<&Candidate> = None;
                let mut best_val = 0.0;
                for c in cands {
                    let v = c.inv_den * c.diff.iter().map(|&(i, s)| s * z[i]).sum::<f64>();
                    if v > best_val {
                        best_val = v;
                        best = Some(c);
                    }
                }
                let grad = match (best, want_grad) {
                    (Some(c), true) => c
                        .diff
                        .iter()
                        .map(|&(i, s)| (i, -0.5 * s * z[i] / lambda[i] * c.inv_den))
                        .collect(),
                    _ => Vec::new(),
                };
                Ok((best_val, best.map(|c| c.index).or(self.anchor_index), None, grad))
            }
            Search::Oracle {
                class,
                cost,
                scale,
                n_max,
            } => {
                let (value, h) = line_search_max(class, lambda, zeta, &self.anchor, cost, *scale, *n_max)?;
                if value <= 0.0 {
                    return Ok((0.0, self.anchor_index, None, Vec::new()));
                }
                let den = scale + gap_against(cost, &h.labels, &self.anchor);
                let grad = if want_grad {
                    signed_diff(&self.anchor, &h.labels)
                        .into_iter()
                        .map(|(i, s)| (i, -0.5 * s * z[i] / lambda[i] / den))
                        .collect()
                } else {
                    Vec::new()
                };
                Ok((value, h.index, Some(h.labels), grad))
            }
        }
    }

    /// Value of `max_h f(lambda; h; zeta)` and the maximizing class index (the anchor on ties).
    pub fn objective_sample(&self, lambda: &Design, zeta: &[f64]) -> Result<(f64, Option<usize>)> {
        check_len(self.n, zeta.len())?;
        check_len(self.n, lambda.n())?;
        let (v, idx, _, _) = self.sample_max(lambda.as_slice(), zeta, false)?;
        Ok((v, idx))
    }

    /// Batch estimate of the objective and, optionally, its gradient.
    pub fn evaluate(&self, lambda: &[f64], zetas: &[Vec<f64>], want_grad: bool) -> Result<Evaluation> {
        let b = zetas.len();
        let bf = b as f64;
        let per: Vec<(f64, Vec<(usize, f64)>)> = zetas
            .par_iter()
            .map(|z| self.sample_max(lambda, z, want_grad).map(|(v, _, _, g)| (v, g)))
            .collect::<Result<_>>()?;
        let samples: Vec<f64> = per.iter().map(|p| p.0).collect();
        let (mean, sd) = mean_sd(&samples);
        let n = self.n;
        let mut gsum = vec![0.0; n];
        let mut gsq = vec![0.0; n];
        if want_grad {
            for (_, g) in &per {
                for &(i, v) in g {
                    gsum[i] += v;
                    gsq[i] += v * v;
                }
            }
        }
        let grad_mean: Vec<f64> = gsum.iter().map(|s| s / bf).collect();
        let grad_sd: Vec<f64> = gsq
            .iter()
            .zip(&grad_mean)
            .map(|(sq, m)| {
                if b > 1 {
                    ((sq - bf * m * m).max(0.0) / (bf - 1.0)).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let root_b = bf.sqrt();
        match &self.pair {
            None => Ok(Evaluation {
                value: mean,
                value_se: sd / root_b,
                samples,
                slope: 1.0,
                grad: grad_mean,
                grad_se: grad_sd.iter().map(|s| s / root_b).collect(),
            }),
            Some(pair) => {
                let n2 = (n * n) as f64;
                let (pv, ps) = pair.argmax(lambda, n2);
                let mut grad: Vec<f64> = grad_mean.iter().map(|g| 2.0 * mean * g).collect();
                if want_grad && pv > 0.0 {
                    for &i in &pair.sets[ps] {
                        grad[i] -= pair.weight / (n2 * lambda[i] * lambda[i]);
                    }
                }
                Ok(Evaluation {
                    value: mean * mean + pair.weight * pv,
                    value_se: 2.0 * mean.abs() * sd / root_b,
                    samples,
                    slope: 2.0 * mean,
                    grad,
                    grad_se: grad_sd.iter().map(|s| 2.0 * mean.abs() * s / root_b).collect(),
                })
            }
        }
    }

    /// Gaussian-width part only: mean and standard error of the per-sample maximum.
    pub fn width(&self, lambda: &Design, samples: usize, seed: u64) -> Result<(f64, f64)> {
        let zetas = gaussian_batch(seed, 0, samples, self.n);
        let per: Vec<f64> = zetas
            .par_iter()
            .map(|z| self.sample_max(lambda.as_slice(), z, false).map(|r| r.0))
            .collect::<Result<_>>()?;
        let (m, sd) = mean_sd(&per);
        Ok((m, sd / (samples as f64).sqrt()))
    }
}

/// Batch evaluation of an objective.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub value_se: f64,
    /// Per-sample maxima, used for paired comparisons on a shared batch.
    pub samples: Vec<f64>,
    /// Derivative of `value` with respect to the mean of `samples`.
    pub slope: f64,
    pub grad: Vec<f64>,
    pub grad_se: Vec<f64>,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Standard normal vectors for batch `stream` of a solver seeded with `seed`.
pub fn gaussian_batch(seed: u64, stream: u64, count: usize, n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Deterministic objective `max_h sum_i a_{h,i} / lambda_i` with non-negative coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceObjective {
    n: usize,
    pieces: Vec<Vec<(usize, f64)>>,
}

impl PieceObjective {
    pub fn new(n: usize, pieces: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for p in &pieces {
            for &(i, a) in p {
                if i >= n || !(a.is_finite() && a >= 0.0) {
                    return Err(AcedError::InvalidArgument("bad piece coefficient".into()));
                }
            }
        }
        Ok(Self {
            n,
            pieces: pieces.into_iter().filter(|p| !p.is_empty()).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn piece_values(&self, lambda: &[f64]) -> Vec<f64> {
        self.pieces
            .iter()
            .map(|p| p.iter().map(|&(i, a)| a / lambda[i]).sum())
            .collect()
    }

    /// Objective value at `lambda`.
    pub fn value(&self, lambda: &[f64]) -> f64 {
        self.piece_values(lambda).into_iter().fold(0.0, f64::max)
    }

    /// Dual value `(sum_i sqrt(c_i))^2` of weights `q` with `c = A^T q`, and the
    /// induced design `lambda_i ∝ sqrt(c_i)`.
    fn dual(&self, q: &[f64]) -> (f64, Vec<f64>) {
        let mut c = vec![0.0; self.n];
        for (p, &w) in self.pieces.iter().zip(q) {
            for &(i, a) in p {
                c[i] += w * a;
            }
        }
        let roots: Vec<f64> = c.iter().map(|v| v.sqrt()).collect();
        let s: f64 = roots.iter().sum();
        (s * s, roots.iter().map(|r| r / s).collect())
    }
}

/// Mirror ascent over piece weights on the simplex; the iterate's induced design is the
/// primal point and `primal - dual` the certificate.
fn solve_pieces(obj: &PieceObjective, cfg: &SolverConfig) -> Result<SolverReport> {
    let n = obj.n;
    let m = obj.pieces.len();
    if m == 0 {
        return Ok(SolverReport {
            lambda: Design::new(vec![1.0; n], cfg.floor)?,
            value: 0.0,
            value_se: 0.0,
            certificate: 0.0,
            batch_trajectory: vec![1],
            iterations: 0,
            converged: true,
        });
    }
    let q_floor = 1e-15 / m as f64;
    let mut q = vec![1.0 / m as f64; m];
    let (mut dual, mut raw) = obj.dual(&q);
    let mut iterations = 0;
    let report = |raw: &[f64], dual: f64, iterations: usize, converged: bool| -> Result<SolverReport> {
        let lambda = Design::new(raw.to_vec(), cfg.floor)?;
        let value = obj.value(lambda.as_slice());
        Ok(SolverReport {
            certificate: (value - dual).max(0.0),
            lambda,
            value,
            value_se: 0.0,
            batch_trajectory: vec![1],
            iterations,
            converged,
        })
    };
    while iterations < cfg.max_iter {
        let current = report(&raw, dual, iterations, true)?;
        if current.certificate <= cfg.tolerance(current.value) {
            return Ok(current);
        }
        iterations += 1;
        // The dual gradient in q_h is the piece value at the induced design.
        let grad = obj.piece_values(&raw);
        let top = grad.iter().copied().fold(f64::MIN, f64::max);
        let bottom = grad.iter().copied().fold(f64::MAX, f64::min);
        let spread = top - bottom;
        if !(spread > 0.0) || !spread.is_finite() {
            return report(&raw, dual, iterations, spread == 0.0);
        }
        let step = |eta: f64| -> (Vec<f64>, f64, Vec<f64>) {
            let mut next: Vec<f64> = q
                .iter()
                .zip(&grad)
                .map(|(w, g)| w * (eta * (g - top) / spread).exp())
                .collect();
            let s: f64 = next.iter().sum();
            next.iter_mut().for_each(|w| *w = (*w / s).max(q_floor));
            let s: f64 = next.iter().sum();
            next.iter_mut().for_each(|w| *w /= s);
            let (d, r) = obj.dual(&next);
            (next, d, r)
        };
        let mut eta = cfg.initial_step;
        let mut cand = step(eta);
        for _ in 0..cfg.max_halvings {
            let half = step(eta / 2.0);
            if cand.1 <= dual || half.1 > cand.1 {
                eta /= 2.0;
                cand = half;
            } else {
                break;
            }
        }
        if cand.1 <= dual {
            return report(&raw, dual, iterations, false);
        }
        q = cand.0;
        dual = cand.1;
        raw = cand.2;
    }
    report(&raw, dual, iterations, false)
}

#[derive(Debug, Clone)]
pub enum DesignObjective<'a> {
    Gaussian(GaussianObjective<'a>),
    Pieces(PieceObjective),
}

impl DesignObjective<'_> {
    pub fn n(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.n,
            Self::Pieces(p) => p.n,
        }
    }
}

fn paired_difference(a: &Evaluation, b: &Evaluation, tie: f64) -> (f64, f64) {
    let d: Vec<f64> = a.samples.iter().zip(&b.samples).map(|(x, y)| x - y).collect();
    let (_, sd) = mean_sd(&d);
    let slope = 0.5 * (a.slope + b.slope).abs();
    let se = slope * sd / (d.len() as f64).sqrt();
    (a.value - b.value, tie * se)
}

fn mirror_step(lambda: &[f64], grad: &[f64], eta: f64, floor: f64) -> Vec<f64> {
    let center: f64 = grad.iter().zip(lambda).map(|(g, l)| g * l).sum();
    let scale = grad
        .iter()
        .map(|g| (g - center).abs())
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return lambda.to_vec();
    }
    let mut next: Vec<f64> = lambda
        .iter()
        .zip(grad)
        .map(|(l, g)| l * (-eta * (g - center) / scale).exp())
        .collect();
    floor_normalize(&mut next, floor);
    next
}

/// Minimizes a design objective over the simplex.
///
/// Gaussian objectives use stochastic mirror descent with adaptive batches and a
/// backtracking step; the certificate is `2 max_k se(g_k) + max_k <g, lambda - e_k>`.
/// Deterministic piece objectives are solved through their dual.
pub fn smd_solve(obj: &DesignObjective, cfg: &SolverConfig, seed: u64) -> Result<SolverReport> {
    if !(cfg.tol > 0.0) {
        return Err(AcedError::InvalidArgument("tol must be positive".into()));
    }
    if cfg.b0 < 2 {
        return Err(AcedError::InvalidArgument("initial batch must be at least 2".into()));
    }
    match obj {
        DesignObjective::Pieces(p) => solve_pieces(p, cfg),
        DesignObjective::Gaussian(g) => smd_gaussian(g, cfg, seed),
    }
}

fn smd_gaussian(obj: &GaussianObjective, cfg: &SolverConfig, seed: u64) -> Result<SolverReport> {
    let n = obj.n;
    let mut lambda = Design::new(vec![1.0; n], cfg.floor)?.into_vec();
    let mut batch = cfg.b0;
    let mut trajectory = vec![batch];
    let mut best: Option<SolverReport> = None;
    for iter in 0..cfg.max_iter {
        let zetas = gaussian_batch(seed, iter as u64, batch, n);
        let ev = obj.evaluate(&lambda, &zetas, true)?;
        let center: f64 = ev.grad.iter().zip(&lambda).map(|(g, l)| g * l).sum();
        let low = ev.grad.iter().copied().fold(f64::INFINITY, f64::min);
        let gap = (center - low).max(0.0);
        let noise = 2.0 * ev.grad_se.iter().copied().fold(0.0, f64::max);
        let certificate = noise + gap;
        let report = SolverReport {
            lambda: Design {
                lambda: lambda.clone(),
            },
            value: ev.value,
            value_se: ev.value_se,
            certificate,
            batch_trajectory: trajectory.clone(),
            iterations: iter,
            converged: true,
        };
        if certificate <= cfg.tolerance(ev.value) {
            return Ok(report);
        }
        if best.as_ref().is_none_or(|b| certificate < b.certificate) {
            best = Some(SolverReport {
                converged: false,
                ..report
            });
        }
        lambda = backtrack(obj, &lambda, &ev, &zetas, cfg)?;
        if noise >= gap && batch < cfg.max_batch {
            batch = (batch * 2).min(cfg.max_batch);
            trajectory.push(batch);
        }
    }
    let mut out = best.expect("at least one iteration");
    out.iterations = cfg.max_iter;
    Ok(out)
}

fn backtrack(
    obj: &GaussianObjective,
    lambda: &[f64],
    current: &Evaluation,
    zetas: &[Vec<f64>],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let mut eta = cfg.initial_step;
    let mut cand = mirror_step(lambda, &current.grad, eta, cfg.floor);
    let mut cand_ev = obj.evaluate(&cand, zetas, false)?;
    for _ in 0..cfg.max_halvings {
        let (d0, s0) = paired_difference(&cand_ev, current, cfg.tie_factor);
        let half = mirror_step(lambda, &current.grad, eta / 2.0, cfg.floor);
        let half_ev = obj.evaluate(&half, zetas, false)?;
        let (dh, sh) = paired_difference(&half_ev, &cand_ev, cfg.tie_factor);
        if d0 > s0 || dh < -sh {
            eta /= 2.0;
            cand = half;
            cand_ev = half_ev;
        } else {
            break;
        }
    }
    let (d0, s0) = paired_difference(&cand_ev, current, cfg.tie_factor);
    Ok(if d0 > s0 { lambda.to_vec() } else { cand })
}

/// Maximizes `f(lambda; h; zeta)` over an oracle-backed class with the multi-scale
/// line search on the ratio threshold `r`.
pub fn line_search_max(
    class: &HypothesisClass,
    lambda: &[f64],
    zeta: &[f64],
    anchor: &[bool],
    cost: &[f64],
    scale: f64,
    n_max: usize,
) -> Result<(f64, Hypothesis)> {
    let n = class.n();
    check_len(n, lambda.len())?;
    check_len(n, zeta.len())?;
    check_len(n, anchor.len())?;
    check_len(n, cost.len())?;
    let nf = n as f64;
    let z: Vec<f64> = zeta.iter().zip(lambda).map(|(q, l)| q / (nf * l.sqrt())).collect();
    // g(r) = max_h [num_h - r den_h] = a r + b + max_h sum_i (c_i r + d_i) h_i
    let a = -scale + cost.iter().zip(anchor).filter(|(_, h)| **h).map(|(c, _)| c).sum::<f64>() / nf;
    let b: f64 = z.iter().zip(anchor).filter(|(_, h)| **h).map(|(v, _)| v).sum();
    let mut found: Vec<Hypothesis> = Vec::new();
    let oracle = |r: f64, found: &mut Vec<Hypothesis>| -> Result<f64> {
        let w: Vec<f64> = cost.iter().zip(&z).map(|(c, zi)| -c / nf * r - zi).collect();
        let (h, v) = weighted_max(class, &w)?;
        found.push(h);
        Ok(a * r + b + v)
    };
    let mut r = 100.0;
    let mut gamma = 10.0;
    let shrink = std::f64::consts::SQRT_2;
    let mut t = 0;
    let mut g = oracle(r, &mut found)?;
    while g < 0.0 && t < n_max {
        r /= 2.0;
        g = oracle(r, &mut found)?;
        t += 1;
    }
    for _ in t..n_max {
        g = oracle(r, &mut found)?;
        if g > 0.0 {
            r *= gamma;
        } else {
            r /= gamma * gamma;
            gamma /= shrink;
        }
    }
    let mut best: Option<(f64, Hypothesis)> = None;
    for h in found {
        let den = scale + gap_against(cost, &h.labels, anchor);
        if !(den > 0.0) {
            continue;
        }
        let num: f64 = signed_diff(anchor, &h.labels).iter().map(|&(i, s)| s * z[i]).sum();
        let f = num / den;
        if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
            best = Some((f, h));
        }
    }
    match best {
        Some((f, h)) if f >= 0.0 => Ok((f, h)),
        _ => Ok((
            0.0,
            Hypothesis {
                index: None,
                labels: anchor.to_vec(),
                linear: None,
            },
        )),
    }
}

/// Next-round sampling distribution whose cumulative mass best tracks `k * lambda_k`.
pub fn waterfill(lambda_k: &Design, prior: &[Design], k: usize) -> Result<Design> {
    if k == 0 {
        return Err(AcedError::InvalidArgument("rounds are numbered from 1".into()));
    }
    check_len(k - 1, prior.len())?;
    let n = lambda_k.n();
    for p in prior {
        check_len(n, p.n())?;
    }
    if k == 1 {
        return Ok(lambda_k.clone());
    }
    let target = lambda_k.as_slice();
    let deficit: Vec<f64> = (0..n)
        .map(|j| {
            let spent: f64 = prior.iter().map(|p| p.lambda[j]).sum();
            (k as f64 * target[j] - spent).max(0.0)
        })
        .collect();
    let total: f64 = deficit.iter().sum();
    let q: Vec<f64> = if total <= 1.0 {
        deficit
            .iter()
            .zip(target)
            .map(|(d, l)| d + (1.0 - total) * l)
            .collect()
    } else {
        // Water level L with sum_j max(0, d_j - L) = 1.
        let (mut lo, mut hi) = (0.0, deficit.iter().copied().fold(0.0, f64::max));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let mass: f64 = deficit.iter().map(|d| (d - mid).max(0.0)).sum();
            if mass > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        deficit.iter().map(|d| (d - hi).max(0.0)).collect()
    };
    Design::new(q, DEFAULT_FLOOR)
}

/// Worst residual deficit `max_j max(0, k lambda_kj - sum_i p_ij - q_j)`.
pub fn waterfill_residual(lambda_k: &Design, prior: &[Design], k: usize, q: &[f64]) -> f64 {
    (0..lambda_k.n())
        .map(|j| {
            let spent: f64 = prior.iter().map(|p| p.lambda[j]).sum();
            (k as f64 * lambda_k.lambda[j] - spent - q[j]).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Draws `count` distinct indices not yet queried, by rejection sampling from `p`.
/// Falls back to uniform draws over unqueried indices when `p` lacks support; the
/// returned flag reports the fallback.
pub fn sample_unique(
    p: &Design,
    count: usize,
    queried: &[bool],
    rng: &mut impl Rng,
) -> Result<(Vec<usize>, bool)> {
    let n = p.n();
    check_len(n, queried.len())?;
    let support_cut = 2.0 * DEFAULT_FLOOR;
    let mut taken = queried.to_vec();
    let supported = (0..n).filter(|&i| !taken[i] && p.lambda[i] > support_cut).count();
    let mut out = Vec::with_capacity(count);
    let fallback;
    if supported >= count {
        let dist = WeightedIndex::new(&p.lambda)
            .map_err(|e| AcedError::InvalidDesign(e.to_string()))?;
        let mut attempts = 0usize;
        let cap = 1_000_000 + 1000 * count;
        while out.len() < count && attempts < cap {
            attempts += 1;
            let i = dist.sample(rng);
            if !taken[i] && p.lambda[i] > support_cut {
                taken[i] = true;
                out.push(i);
            }
        }
        fallback = out.len() < count;
    } else {
        fallback = true;
    }
    while out.len() < count {
        let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        if free.is_empty() {
            break;
        }
        let i = free[rng.random_range(0..free.len())];
        taken[i] = true;
        out.push(i);
    }
    Ok((out, fallback))
}
