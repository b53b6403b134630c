//! Active classification algorithms and baselines.

mod baselines;
mod fixed_budget;
mod fixed_confidence;
mod waterfilled;

pub use baselines::{
    baseline_iwal, baseline_passive, baseline_uniform_disagreement, iwal_probability, IwalParams, IwalVariant,
    PassiveParams, UniformDisagreementParams,
};
pub use fixed_budget::{
    aced_fixed_budget, aced_fixed_budget_efficient, psi_design_objective, EfficientParams,
    FixedBudgetParams,
};
pub use fixed_confidence::{aced_fixed_confidence, FixedConfidenceParams};
pub use waterfilled::{aced_waterfilled, WaterfilledParams};

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::class::{Hypothesis, HypothesisClass, LinearHypothesis};
use crate::design::{Design, SolverReport};
use crate::error::{AcedError, Result};
use crate::estimators::{EtaEstimate, Query};
use crate::oracles::{erm, weighted_max, WeightedSample};
use crate::pool::LabelSource;

/// Summary of one round of an adaptive algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Distribution the round's queries were drawn from.
    pub sampling: Vec<f64>,
    /// Solved design, when sampling used a different distribution.
    pub target: Option<Vec<f64>>,
    pub objective: f64,
    pub certificate: f64,
    pub converged: bool,
    pub queries: usize,
    /// Surviving hypotheses after the round, for elimination algorithms.
    pub survivors: Option<usize>,
    /// Indices of the surviving hypotheses.
    pub active: Option<Vec<usize>>,
    pub anchor: Option<usize>,
}

/// The recommended hypothesis after a given number of label queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub queries: usize,
    pub index: Option<usize>,
    pub linear: Option<LinearHypothesis>,
    #[serde(skip)]
    pub labels: Vec<bool>,
}

impl Checkpoint {
    fn new(queries: usize, h: &Hypothesis) -> Self {
        Self {
            queries,
            index: h.index,
            linear: h.linear.clone(),
            labels: h.labels.clone(),
        }
    }
}

/// Complete trace of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
    pub queries: Vec<Query>,
    pub rounds: Vec<RoundRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub returned: Option<usize>,
    pub returned_linear: Option<LinearHypothesis>,
    #[serde(skip)]
    pub returned_labels: Vec<bool>,
    /// Conditions such as round caps or sampling fallbacks.
    pub flags: Vec<String>,
}

impl RunRecord {
    fn new(algorithm: &str, seed: u64, params: &[(&str, f64)]) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            seed,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            queries: Vec::new(),
            rounds: Vec::new(),
            checkpoints: Vec::new(),
            returned: None,
            returned_linear: None,
            returned_labels: Vec::new(),
            flags: Vec::new(),
        }
    }

    /// Number of distinct pool indices queried.
    pub fn unique_queries(&self) -> usize {
        let mut seen: Vec<usize> = self.queries.iter().map(|q| q.index).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    fn flag(&mut self, what: &str) {
        if !self.flags.iter().any(|f| f == what) {
            self.flags.push(what.to_string());
        }
    }

    fn checkpoint(&mut self, queries: usize, h: &Hypothesis) {
        if self.checkpoints.last().is_none_or(|c| c.queries < queries) {
            self.checkpoints.push(Checkpoint::new(queries, h));
        } else if let Some(last) = self.checkpoints.last_mut() {
            *last = Checkpoint::new(queries, h);
        }
    }

    fn finish(&mut self, h: Hypothesis) {
        self.returned = h.index;
        self.returned_linear = h.linear.clone();
        self.returned_labels = h.labels;
    }
}

fn round_record(round: usize, sampling: &Design, report: &SolverReport, queries: usize) -> RoundRecord {
    RoundRecord {
        round,
        sampling: sampling.as_slice().to_vec(),
        target: None,
        objective: report.value,
        certificate: report.certificate,
        converged: report.converged,
        queries,
        survivors: None,
        active: None,
        anchor: None,
    }
}

/// Draws `count` i.i.d. indices from `design`, queries each, and appends to `log`.
fn query_iid(
    design: &Design,
    count: usize,
    round: usize,
    labels: &mut dyn LabelSource,
    rng: &mut impl Rng,
    log: &mut Vec<Query>,
) -> Result<()> {
    let dist = WeightedIndex::new(design.as_slice()).map_err(|e| AcedError::InvalidDesign(e.to_string()))?;
    for _ in 0..count {
        let index = dist.sample(rng);
        let label = labels.query(index)?;
        log.push(Query {
            round,
            index,
            prob: design.as_slice()[index],
            label,
        });
    }
    Ok(())
}

/// Minimizer of the plug-in error under `est`; ties go to the lowest index.
fn plug_in_best(class: &HypothesisClass, est: &EtaEstimate) -> Result<Hypothesis> {
    let w: Vec<f64> = est.cost().iter().map(|c| -c).collect();
    Ok(weighted_max(class, &w)?.0)
}

/// Unweighted ERM on every observed label.
fn erm_observed(class: &HypothesisClass, log: &[Query]) -> Result<Hypothesis> {
    let samples: Vec<WeightedSample> = log
        .iter()
        .map(|q| WeightedSample::new(q.index, q.label, 1.0))
        .collect();
    erm(class, &samples)
}

fn check_labels(class: &HypothesisClass, labels: &dyn LabelSource) -> Result<()> {
    if class.n() != labels.len() {
        return Err(AcedError::LengthMismatch {
            expected: class.n(),
            got: labels.len(),
        });
    }
    Ok(())
}

/// `floor(log2(1/eps))` rounds; at least one.
fn budget_rounds(epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(AcedError::InvalidArgument("epsilon must lie in (0, 1)".into()));
    }
    Ok(((1.0 / epsilon).log2().floor() as usize).max(1))
}
