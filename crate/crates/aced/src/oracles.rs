//! Weighted classification oracles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::class::{set_sum, ExplicitClass, Hypothesis, HypothesisClass, LinearHypothesis};
use crate::error::{check_index, AcedError, Result};
use crate::pool::Pool;

/// One weighted, labeled pool example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub index: usize,
    pub label: bool,
    pub weight: f64,
}

impl WeightedSample {
    pub fn new(index: usize, label: bool, weight: f64) -> Self {
        Self {
            index,
            label,
            weight,
        }
    }
}

fn validate(samples: &[WeightedSample], n: usize) -> Result<()> {
    for s in samples {
        check_index(s.index, n)?;
        if !(s.weight.is_finite() && s.weight >= 0.0) {
            return Err(AcedError::InvalidArgument(format!(
                "sample weight {} must be finite and non-negative",
                s.weight
            )));
        }
    }
    Ok(())
}

/// Weighted 0/1 loss of a labeling.
pub fn weighted_loss(labels: &[bool], samples: &[WeightedSample]) -> f64 {
    samples
        .iter()
        .filter(|s| labels[s.index] != s.label)
        .map(|s| s.weight)
        .sum()
}

/// Exact weighted ERM by enumeration; ties go to the lowest index.
pub fn erm_exact(class: &ExplicitClass, samples: &[WeightedSample]) -> Result<usize> {
    if class.is_empty() {
        return Err(AcedError::InvalidArgument("hypothesis class is empty".into()));
    }
    validate(samples, class.n())?;
    let mut best = (0, f64::INFINITY);
    for (h, row) in class.rows().iter().enumerate() {
        let loss = weighted_loss(row, samples);
        if loss < best.1 {
            best = (h, loss);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogisticSolver {
    GradientDescent,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub reg: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub solver: LogisticSolver,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            reg: 1e-6,
            tol: 1e-6,
            max_iter: 5000,
            solver: LogisticSolver::Newton,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub hypothesis: LinearHypothesis,
    pub converged: bool,
    pub iterations: usize,
    /// Weighted logistic loss plus penalty, divided by the total weight.
    pub objective: f64,
}

/// `log(1 + exp(-z))` without overflow.
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weighted logistic regression over rows `phi` with fixed score offsets.
struct Problem {
    phi: Vec<Vec<f64>>,
    offset: f64,
    y: Vec<f64>,
    w: Vec<f64>,
    penalized: Vec<bool>,
    reg: f64,
    total: f64,
}

impl Problem {
    fn dim(&self) -> usize {
        self.penalized.len()
    }

    fn margin(&self, theta: &[f64], j: usize) -> f64 {
        let s: f64 = self.phi[j].iter().zip(theta).map(|(a, b)| a * b).sum();
        self.y[j] * (s + self.offset)
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let loss: f64 = (0..self.y.len())
            .map(|j| self.w[j] * softplus_neg(self.margin(theta, j)))
            .sum();
        let pen: f64 = theta
            .iter()
            .zip(&self.penalized)
            .filter(|(_, p)| **p)
            .map(|(t, _)| t * t)
            .sum();
        (loss + self.reg * pen) / self.total
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; d];
        for j in 0..self.y.len() {
            let c = -self.w[j] * self.y[j] * sigmoid(-self.margin(theta, j));
            for (gk, x) in g.iter_mut().zip(&self.phi[j]) {
                *gk += c * x;
            }
        }
        for k in 0..d {
            if self.penalized[k] {
                g[k] += 2.0 * self.reg * theta[k];
            }
            g[k] /= self.total;
        }
        g
    }

    fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::<f64>::zeros(d, d);
        for j in 0..self.y.len() {
            let p = sigmoid(self.margin(theta, j));
            let c = self.w[j] * p * (1.0 - p);
            if c == 0.0 {
                continue;
            }
            let x = &self.phi[j];
            for a in 0..d {
                for b in 0..=a {
                    h[(a, b)] += c * x[a] * x[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
            if self.penalized[a] {
                h[(a, a)] += 2.0 * self.reg;
            }
        }
        h / self.total
    }

    fn solve(&self, cfg: &LogisticConfig) -> (Vec<f64>, bool, usize, f64) {
        let d = self.dim();
        let mut theta = vec![0.0; d];
        let mut f = self.value(&theta);
        let mut step = 1.0_f64;
        for it in 0..cfg.max_iter {
            let g = self.gradient(&theta);
            let gnorm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if gnorm <= cfg.tol {
                return (theta, true, it, f);
            }
            let dir: Vec<f64> = match cfg.solver {
                LogisticSolver::Newton => newton_direction(&self.hessian(&theta), &g),
                LogisticSolver::GradientDescent => g.iter().map(|v| -v).collect(),
            };
            let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
            let (dir, slope) = if slope < 0.0 {
                (dir, slope)
            } else {
                let sd: Vec<f64> = g.iter().map(|v| -v).collect();
                let s = -g.iter().map(|v| v * v).sum::<f64>();
                (sd, s)
            };
            let mut t = match cfg.solver {
                LogisticSolver::Newton => 1.0,
                LogisticSolver::GradientDescent => (step * 2.0).min(1e6),
            };
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                let fc = self.value(&cand);
                if fc <= f + 1e-4 * t * slope {
                    theta = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            step = t;
            if !accepted {
                return (theta, false, it + 1, f);
            }
        }
        (theta, false, cfg.max_iter, f)
    }
}

fn newton_direction(h: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let d = g.len();
    let rhs = -DVector::from_column_slice(g);
    let mut damping = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        for a in 0..d {
            m[(a, a)] += damping;
        }
        if let Some(ch) = m.cholesky() {
            return ch.solve(&rhs).iter().copied().collect();
        }
        damping = if damping == 0.0 { 1e-10 } else { damping * 100.0 };
    }
    rhs.iter().copied().collect()
}

fn features(pool: &Pool) -> Result<()> {
    if pool.has_features() {
        Ok(())
    } else {
        Err(AcedError::Unsupported("logistic oracle needs feature vectors".into()))
    }
}

/// Weighted L2-regularized logistic regression; the intercept is not penalized.
pub fn erm_logistic(
    pool: &Pool,
    samples: &[WeightedSample],
    cfg: &LogisticConfig,
) -> Result<LogisticFit> {
    features(pool)?;
    validate(samples, pool.len())?;
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    if total <= 0.0 {
        return Err(AcedError::InvalidArgument(
            "logistic fit needs a positive-weight sample".into(),
        ));
    }
    let p = pool.dim();
    let kept: Vec<&WeightedSample> = samples.iter().filter(|s| s.weight > 0.0).collect();
    let problem = Problem {
        phi: kept
            .iter()
            .map(|s| {
                let mut r = pool.row(s.index).expect("features checked").to_vec();
                r.push(1.0);
                r
            })
            .collect(),
        offset: 0.0,
        y: kept.iter().map(|s| if s.label { 1.0 } else { -1.0 }).collect(),
        w: kept.iter().map(|s| s.weight).collect(),
        penalized: (0..=p).map(|k| k < p).collect(),
        reg: cfg.reg,
        total,
    };
    let (theta, converged, iterations, objective) = problem.solve(cfg);
    Ok(LogisticFit {
        hypothesis: LinearHypothesis {
            weights: theta[..p].to_vec(),
            bias: theta[p],
        },
        converged,
        iterations,
        objective,
    })
}

/// Logistic fit constrained to label the anchor point `desired`: features are centered
/// at the anchor and the intercept is pinned to a signed margin.
pub fn erm_flip_constrained(
    pool: &Pool,
    samples: &[WeightedSample],
    anchor: &[f64],
    desired: bool,
    margin: f64,
    cfg: &LogisticConfig,
) -> Result<LogisticFit> {
    features(pool)?;
    validate(samples, pool.len())?;
    if anchor.len() != pool.dim() {
        return Err(AcedError::LengthMismatch {
            expected: pool.dim(),
            got: anchor.len(),
        });
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(AcedError::InvalidArgument("margin must be positive".into()));
    }
    let offset = if desired { margin } else { -margin };
    let p = pool.dim();
    let kept: Vec<&WeightedSample> = samples.iter().filter(|s| s.weight > 0.0).collect();
    let total: f64 = kept.iter().map(|s| s.weight).sum();
    let (w, converged, iterations, objective) = if kept.is_empty() {
        (vec![0.0; p], true, 0, 0.0)
    } else {
        let problem = Problem {
            phi: kept
                .iter()
                .map(|s| {
                    let r = pool.row(s.index).expect("features checked");
                    r.iter().zip(anchor).map(|(a, b)| a - b).collect()
                })
                .collect(),
            offset,
            y: kept.iter().map(|s| if s.label { 1.0 } else { -1.0 }).collect(),
            w: kept.iter().map(|s| s.weight).collect(),
            penalized: vec![true; p],
            reg: cfg.reg,
            total,
        };
        problem.solve(cfg)
    };
    let dot: f64 = w.iter().zip(anchor).map(|(a, b)| a * b).sum();
    let mut hypothesis = LinearHypothesis {
        weights: w,
        bias: offset - dot,
    };
    // Guard against cancellation error in the pinned intercept.
    while hypothesis.predict(anchor) != desired {
        hypothesis.bias += offset;
    }
    Ok(LogisticFit {
        hypothesis,
        converged,
        iterations,
        objective,
    })
}

/// Weighted ERM over any class.
pub fn erm(class: &HypothesisClass, samples: &[WeightedSample]) -> Result<Hypothesis> {
    match class {
        HypothesisClass::Explicit(c) => Ok(c.hypothesis(erm_exact(c, samples)?)),
        HypothesisClass::Linear(c) => {
            if samples.iter().all(|s| s.weight == 0.0) {
                validate(samples, c.pool.len())?;
                let lin = LinearHypothesis::zero(c.pool.dim());
                return Ok(Hypothesis {
                    index: None,
                    labels: lin.labels(&c.pool),
                    linear: Some(lin),
                });
            }
            let fit = erm_logistic(&c.pool, samples, &c.fit)?;
            Ok(Hypothesis {
                index: None,
                labels: fit.hypothesis.labels(&c.pool),
                linear: Some(fit.hypothesis),
            })
        }
    }
}

fn sign_samples(w: &[f64]) -> Vec<WeightedSample> {
    w.iter()
        .enumerate()
        .map(|(i, &v)| WeightedSample::new(i, v >= 0.0, v.abs()))
        .collect()
}

/// `max_h sum_i w_i h_i`, solved as one weighted ERM call on `(|w_i|, x_i, 1{w_i >= 0})`.
pub fn weighted_max(class: &HypothesisClass, w: &[f64]) -> Result<(Hypothesis, f64)> {
    if w.len() != class.n() {
        return Err(AcedError::LengthMismatch {
            expected: class.n(),
            got: w.len(),
        });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(AcedError::InvalidArgument("weights must be finite".into()));
    }
    let h = erm(class, &sign_samples(w))?;
    let value = set_sum(&h.labels, w);
    Ok((h, value))
}

/// `max_h sum_i w_i h_i` over hypotheses with `h(x_coord) = value`; `None` when no
/// hypothesis satisfies the constraint.
pub fn constrained_weighted_max(
    class: &HypothesisClass,
    w: &[f64],
    coord: usize,
    value: bool,
) -> Result<Option<(Hypothesis, f64)>> {
    check_index(coord, class.n())?;
    match class {
        HypothesisClass::Explicit(c) => {
            let mut best: Option<(usize, f64)> = None;
            for (h, row) in c.rows().iter().enumerate() {
                if row[coord] != value {
                    continue;
                }
                let v = set_sum(row, w);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((h, v));
                }
            }
            Ok(best.map(|(h, v)| (c.hypothesis(h), v)))
        }
        HypothesisClass::Linear(c) => {
            let samples = sign_samples(w);
            let anchor = c.pool.row(coord).expect("linear class has features");
            let fit = erm_flip_constrained(&c.pool, &samples, anchor, value, 1e-3, &c.fit)?;
            let labels = fit.hypothesis.labels(&c.pool);
            let v = set_sum(&labels, w);
            Ok(Some((
                Hypothesis {
                    index: None,
                    labels,
                    linear: Some(fit.hypothesis),
                },
                v,
            )))
        }
    }
}
