//! Example pools and label models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, check_len, AcedError, Result};

/// A pool of `n` examples with stable ids and an optional row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    ids: Vec<String>,
    dim: usize,
    features: Option<Vec<f64>>,
}

impl Pool {
    /// A pool without features; ids are `0..n`.
    pub fn featureless(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(AcedError::InvalidArgument("pool must be non-empty".into()));
        }
        Ok(Self {
            ids: (0..n).map(|i| i.to_string()).collect(),
            dim: 0,
            features: None,
        })
    }

    /// A pool without features under the given ids.
    pub fn with_ids(ids: Vec<String>) -> Result<Self> {
        if ids.is_empty() {
            return Err(AcedError::InvalidArgument("pool must be non-empty".into()));
        }
        Ok(Self {
            ids,
            dim: 0,
            features: None,
        })
    }

    /// A pool with one feature row per id.
    pub fn with_features(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        if ids.is_empty() {
            return Err(AcedError::InvalidArgument("pool must be non-empty".into()));
        }
        check_len(ids.len(), rows.len())?;
        let dim = rows[0].len();
        let mut features = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            check_len(dim, row.len())?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(AcedError::InvalidArgument("non-finite feature".into()));
            }
            features.extend_from_slice(row);
        }
        Ok(Self {
            ids,
            dim,
            features: Some(features),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn has_features(&self) -> bool {
        self.features.is_some()
    }

    /// Feature dimension (0 when the pool has no features).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.features
            .as_ref()
            .map(|f| &f[i * self.dim..(i + 1) * self.dim])
    }

    /// Restricts the pool to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(AcedError::InvalidArgument("pool must be non-empty".into()));
        }
        for &i in indices {
            check_index(i, self.len())?;
        }
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        let features = self.features.as_ref().map(|f| {
            indices
                .iter()
                .flat_map(|&i| f[i * self.dim..(i + 1) * self.dim].iter().copied())
                .collect()
        });
        Ok(Self {
            ids,
            dim: self.dim,
            features,
        })
    }
}

/// Anything that can answer label queries for pool indices.
pub trait LabelSource {
    fn len(&self) -> usize;
    fn query(&mut self, index: usize) -> Result<bool>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Whether repeated queries of one index return the same label.
    fn is_persistent(&self) -> bool {
        false
    }
}

/// Bernoulli label model with optional persistent noise.
#[derive(Debug, Clone)]
pub struct LabelModel {
    eta: Vec<f64>,
    persistent: bool,
    seed: u64,
    rng: ChaCha8Rng,
    cache: Vec<Option<bool>>,
}

impl LabelModel {
    pub fn new(eta: Vec<f64>, persistent: bool, seed: u64) -> Result<Self> {
        if eta.is_empty() {
            return Err(AcedError::InvalidArgument("label model must be non-empty".into()));
        }
        if let Some(bad) = eta.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(AcedError::InvalidArgument(format!(
                "label mean {bad} outside [0, 1]"
            )));
        }
        let n = eta.len();
        let mut model = Self {
            eta,
            persistent,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cache: vec![None; n],
        };
        // Persistent labels are fixed up front so they do not depend on query order.
        if persistent {
            model.cache = (0..n).map(|i| Some(model.draw(i))).collect();
        }
        Ok(model)
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn persistent(&self) -> bool {
        self.persistent
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The same model with a fresh RNG and empty cache.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self::new(self.eta.clone(), self.persistent, seed).expect("validated on construction")
    }

    fn draw(&mut self, i: usize) -> bool {
        let e = self.eta[i];
        if e >= 1.0 {
            true
        } else if e <= 0.0 {
            false
        } else {
            self.rng.random::<f64>() < e
        }
    }
}

impl LabelSource for LabelModel {
    fn len(&self) -> usize {
        self.eta.len()
    }

    fn is_persistent(&self) -> bool {
        self.persistent
    }

    fn query(&mut self, index: usize) -> Result<bool> {
        check_index(index, self.eta.len())?;
        if !self.persistent {
            return Ok(self.draw(index));
        }
        Ok(self.cache[index].expect("persistent labels are drawn on construction"))
    }
}

/// Expected pool error of a labeling under label means `eta`.
pub fn pool_error(labels: &[bool], eta: &[f64]) -> Result<f64> {
    check_len(eta.len(), labels.len())?;
    let total: f64 = labels
        .iter()
        .zip(eta)
        .map(|(&h, &e)| if h { 1.0 - e } else { e })
        .sum();
    Ok(total / eta.len() as f64)
}
