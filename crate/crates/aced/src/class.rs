//! Hypothesis classes, gap tables and the combinatorial-bandit view.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{check_index, check_len, AcedError, Result};
use crate::oracles::LogisticConfig;
use crate::pool::{pool_error, Pool};

/// Affine classifier `x -> 1{w.x + b >= 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHypothesis {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearHypothesis {
    pub fn zero(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.score(x) >= 0.0
    }

    /// Labels every pool row.
    pub fn labels(&self, pool: &Pool) -> Vec<bool> {
        (0..pool.len())
            .map(|i| self.predict(pool.row(i).unwrap_or(&[])))
            .collect()
    }
}

/// A concrete labeling of the pool, with its class index when the class is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub index: Option<usize>,
    pub labels: Vec<bool>,
    pub linear: Option<LinearHypothesis>,
}

/// Finite class stored as a matrix of labelings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitClass {
    n: usize,
    rows: Vec<Vec<bool>>,
}

impl ExplicitClass {
    /// Builds the class; with `dedup`, repeated labelings keep their first occurrence.
    pub fn new(rows: Vec<Vec<bool>>, dedup: bool) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(AcedError::InvalidArgument("hypothesis class is empty".into()));
        };
        let n = first.len();
        if n == 0 {
            return Err(AcedError::InvalidArgument("labelings must be non-empty".into()));
        }
        for row in &rows {
            check_len(n, row.len())?;
        }
        let rows = if dedup {
            let mut seen = HashSet::new();
            rows.into_iter().filter(|r| seen.insert(r.clone())).collect()
        } else {
            rows
        };
        Ok(Self { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn row(&self, h: usize) -> &[bool] {
        &self.rows[h]
    }

    pub fn hypothesis(&self, h: usize) -> Hypothesis {
        Hypothesis {
            index: Some(h),
            labels: self.rows[h].clone(),
            linear: None,
        }
    }

    /// Sub-class of the listed hypotheses (no dedup).
    pub fn select(&self, members: &[usize]) -> Result<Self> {
        for &h in members {
            check_index(h, self.len())?;
        }
        Self::new(members.iter().map(|&h| self.rows[h].clone()).collect(), false)
    }

    /// Restricts every labeling to `coords` and deduplicates. Returns the new class and,
    /// for each new hypothesis, the index of its first source row.
    pub fn restrict(&self, coords: &[usize]) -> Result<(Self, Vec<usize>)> {
        for &c in coords {
            check_index(c, self.n)?;
        }
        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        let mut origin = Vec::new();
        for (h, row) in self.rows.iter().enumerate() {
            let r: Vec<bool> = coords.iter().map(|&c| row[c]).collect();
            if seen.insert(r.clone()) {
                rows.push(r);
                origin.push(h);
            }
        }
        Ok((Self::new(rows, false)?, origin))
    }
}

/// Class backed by a weighted logistic-regression oracle over pool features.
#[derive(Debug, Clone)]
pub struct LinearClass {
    pub pool: Pool,
    pub fit: LogisticConfig,
}

impl LinearClass {
    pub fn new(pool: Pool, fit: LogisticConfig) -> Result<Self> {
        if !pool.has_features() {
            return Err(AcedError::Unsupported(
                "a linear class needs feature vectors".into(),
            ));
        }
        Ok(Self { pool, fit })
    }
}

#[derive(Debug, Clone)]
pub enum HypothesisClass {
    Explicit(ExplicitClass),
    Linear(LinearClass),
}

impl HypothesisClass {
    pub fn n(&self) -> usize {
        match self {
            Self::Explicit(c) => c.n(),
            Self::Linear(c) => c.pool.len(),
        }
    }

    pub fn explicit(&self) -> Option<&ExplicitClass> {
        match self {
            Self::Explicit(c) => Some(c),
            Self::Linear(_) => None,
        }
    }

    pub fn require_explicit(&self) -> Result<&ExplicitClass> {
        self.explicit().ok_or_else(|| {
            AcedError::Unsupported("operation needs an explicit hypothesis class".into())
        })
    }

    /// Pool error of hypothesis `h` of an explicit class.
    pub fn pool_error(&self, h: usize, eta: &[f64]) -> Result<f64> {
        let class = self.require_explicit()?;
        check_index(h, class.len())?;
        pool_error(class.row(h), eta)
    }
}

/// Exact errors and gaps of every hypothesis in an explicit class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub h_star: usize,
    pub nu: f64,
    pub errors: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Smallest positive gap, if any.
    pub delta_min: Option<f64>,
}

pub fn gap_table(class: &HypothesisClass, eta: &[f64]) -> Result<GapTable> {
    let class = class.require_explicit()?;
    let errors = class
        .rows()
        .iter()
        .map(|r| pool_error(r, eta))
        .collect::<Result<Vec<_>>>()?;
    let mut h_star = 0;
    for (h, &e) in errors.iter().enumerate() {
        if e < errors[h_star] {
            h_star = h;
        }
    }
    let nu = errors[h_star];
    let gaps: Vec<f64> = errors.iter().map(|e| (e - nu).max(0.0)).collect();
    let delta_min = gaps
        .iter()
        .copied()
        .filter(|&g| g > 0.0)
        .min_by(f64::total_cmp);
    Ok(GapTable {
        h_star,
        nu,
        errors,
        gaps,
        delta_min,
    })
}

/// Bandit coordinates: `mu = 2 eta - 1` and hypotheses as subsets of the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditView {
    pub mu: Vec<f64>,
    eta_sum: f64,
}

impl BanditView {
    /// Sum of `mu` over the coordinates labeled 1.
    pub fn value(&self, labels: &[bool]) -> f64 {
        set_sum(labels, &self.mu)
    }

    /// Pool error recovered from the bandit value.
    pub fn error(&self, labels: &[bool]) -> f64 {
        (self.eta_sum - self.value(labels)) / self.mu.len() as f64
    }
}

pub fn to_bandit(eta: &[f64]) -> BanditView {
    BanditView {
        mu: eta.iter().map(|e| 2.0 * e - 1.0).collect(),
        eta_sum: eta.iter().sum(),
    }
}

/// `sum_i w_i h_i` for a 0/1 labeling `h`.
pub fn set_sum(labels: &[bool], w: &[f64]) -> f64 {
    labels
        .iter()
        .zip(w)
        .filter(|(h, _)| **h)
        .map(|(_, v)| *v)
        .sum()
}
