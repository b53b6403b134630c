use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{budget_rounds, check_labels, plug_in_best, query_iid, round_record, RunRecord};
use crate::class::{Hypothesis, HypothesisClass};
use crate::design::{smd_solve, Design, DesignObjective, GaussianObjective, PieceObjective, SolverConfig};
use crate::error::{AcedError, Result};
use crate::estimators::{chaining_estimate, ips_estimate, naive_estimate, EstimatorKind, EtaEstimate, Query};
use crate::oracles::constrained_weighted_max;
use crate::pool::LabelSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedBudgetParams {
    pub budget: usize,
    pub epsilon: f64,
    pub estimator: EstimatorKind,
    /// Confidence of the chaining estimator.
    pub delta: f64,
    /// Oracle calls per line search for oracle-backed classes.
    pub n_max: usize,
    pub solver: SolverConfig,
}

impl Default for FixedBudgetParams {
    fn default() -> Self {
        Self {
            budget: 100,
            epsilon: 0.1,
            estimator: EstimatorKind::Naive,
            delta: 0.1,
            n_max: 20,
            solver: SolverConfig {
                rel_tol: 0.2,
                max_iter: 300,
                max_batch: 1 << 12,
                ..SolverConfig::default()
            },
        }
    }
}

fn check_budget(budget: usize, rounds: usize) -> Result<()> {
    if budget < rounds {
        return Err(AcedError::Precondition(format!(
            "budget {budget} is below the {rounds} rounds"
        )));
    }
    Ok(())
}

fn per_round(budget: usize, epsilon: f64) -> usize {
    (budget as f64 / (1.0 / epsilon).log2()).floor() as usize
}

/// Rounds of design, i.i.d. sampling and re-estimation at halving accuracy scales.
///
/// The naive estimator pools every label seen so far; the importance-weighted and
/// chaining estimators use the current round only, since they depend on its design.
pub fn aced_fixed_budget(
    class: &HypothesisClass,
    labels: &mut dyn LabelSource,
    params: &FixedBudgetParams,
    seed: u64,
) -> Result<RunRecord> {
    check_labels(class, labels)?;
    let rounds = budget_rounds(params.epsilon)?;
    check_budget(params.budget, rounds)?;
    let n = class.n();
    let per = per_round(params.budget, params.epsilon);
    let mut record = RunRecord::new(
        "aced_fixed_budget",
        seed,
        &[
            ("budget", params.budget as f64),
            ("epsilon", params.epsilon),
            ("per_round", per as f64),
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = EtaEstimate::constant(params.estimator, n, 0.0);
    for k in 1..=rounds {
        let anchor = plug_in_best(class, &est)?;
        let scale = 0.5f64.powi(k as i32 - 1);
        let obj = GaussianObjective::fixed_budget(class, &anchor, &est.cost(), scale, params.n_max)?;
        let report = smd_solve(&DesignObjective::Gaussian(obj), &params.solver, seed.wrapping_add(k as u64))?;
        let mut log: Vec<Query> = Vec::with_capacity(per);
        query_iid(&report.lambda, per, k, labels, &mut rng, &mut log)?;
        record.queries.extend_from_slice(&log);
        est = match params.estimator {
            EstimatorKind::Naive => naive_estimate(n, &record.queries)?,
            EstimatorKind::Ips => ips_estimate(n, &log, 0.0)?,
            EstimatorKind::RidgeIps => {
                return Err(AcedError::Unsupported("ridge IPS is a pairwise estimator".into()))
            }
            EstimatorKind::Chaining => {
                let c = class.require_explicit()?;
                let group: Vec<&[bool]> = c.rows().iter().map(Vec::as_slice).collect();
                let e = chaining_estimate(&group, &log, report.lambda.as_slice(), params.delta)?;
                if e.feasible == Some(false) {
                    record.flag("chaining_infeasible");
                }
                e
            }
        };
        let mut rr = round_record(k, &report.lambda, &report, per);
        rr.anchor = anchor.index;
        record.rounds.push(rr);
        let current = plug_in_best(class, &est)?;
        record.checkpoint(record.queries.len(), &current);
    }
    let out = plug_in_best(class, &est)?;
    record.finish(out);
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficientParams {
    pub budget: usize,
    pub epsilon: f64,
    pub n_max: usize,
    pub solver: SolverConfig,
}

impl Default for EfficientParams {
    fn default() -> Self {
        let base = FixedBudgetParams::default();
        Self {
            budget: base.budget,
            epsilon: base.epsilon,
            n_max: base.n_max,
            solver: base.solver,
        }
    }
}

/// Importance-sampling design: per coordinate, the inverse of the smallest denominator
/// `scale + gap(h)` over hypotheses that disagree with the anchor there.
pub fn psi_design_objective(
    class: &HypothesisClass,
    anchor: &Hypothesis,
    cost: &[f64],
    scale: f64,
) -> Result<PieceObjective> {
    let n = class.n();
    let nf = n as f64;
    let w: Vec<f64> = cost.iter().map(|c| -c / nf).collect();
    let anchor_value: f64 = anchor
        .labels
        .iter()
        .zip(&w)
        .filter(|(h, _)| **h)
        .map(|(_, v)| v)
        .sum();
    let mut pieces = Vec::new();
    for i in 0..n {
        let Some((_, value)) = constrained_weighted_max(class, &w, i, !anchor.labels[i])? else {
            continue;
        };
        let den = scale + (anchor_value - value);
        if !(den > 0.0) {
            return Err(AcedError::DegenerateObjective(format!(
                "coordinate {i} has denominator {den}"
            )));
        }
        pieces.push(vec![(i, 1.0 / (nf * den))]);
    }
    PieceObjective::new(n, pieces)
}

/// Fixed-budget rounds that sample from the average of the width design and the
/// importance-sampling design, and estimate with plain inverse propensity weights.
pub fn aced_fixed_budget_efficient(
    class: &HypothesisClass,
    labels: &mut dyn LabelSource,
    params: &EfficientParams,
    seed: u64,
) -> Result<RunRecord> {
    check_labels(class, labels)?;
    let rounds = budget_rounds(params.epsilon)?;
    check_budget(params.budget, rounds)?;
    let n = class.n();
    let per = per_round(params.budget, params.epsilon);
    let mut record = RunRecord::new(
        "aced_fixed_budget_efficient",
        seed,
        &[
            ("budget", params.budget as f64),
            ("epsilon", params.epsilon),
            ("per_round", per as f64),
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Bandit means start at zero, so every coordinate costs nothing.
    let mut est = EtaEstimate::constant(EstimatorKind::Ips, n, 0.5);
    for k in 1..=rounds {
        let cost: Vec<f64> = est.mu.iter().map(|m| -m).collect();
        let anchor = best_for_cost(class, &cost)?;
        let scale = 0.5f64.powi(k as i32 - 1);
        let width = GaussianObjective::fixed_budget(class, &anchor, &cost, scale, params.n_max)?;
        let first = smd_solve(&DesignObjective::Gaussian(width), &params.solver, seed.wrapping_add(k as u64))?;
        let psi = psi_design_objective(class, &anchor, &cost, scale)?;
        let second = smd_solve(&DesignObjective::Pieces(psi), &params.solver, 0)?;
        let lambda = Design::mix(&first.lambda, &second.lambda)?;
        let mut log: Vec<Query> = Vec::with_capacity(per);
        query_iid(&lambda, per, k, labels, &mut rng, &mut log)?;
        record.queries.extend_from_slice(&log);
        est = ips_estimate(n, &log, 0.0)?;
        let mut rr = round_record(k, &lambda, &first, per);
        rr.anchor = anchor.index;
        record.rounds.push(rr);
        let cost: Vec<f64> = est.mu.iter().map(|m| -m).collect();
        record.checkpoint(record.queries.len(), &best_for_cost(class, &cost)?);
    }
    let cost: Vec<f64> = est.mu.iter().map(|m| -m).collect();
    record.finish(best_for_cost(class, &cost)?);
    Ok(record)
}

/// Hypothesis of largest bandit value, i.e. smallest `sum_i cost_i h_i`.
fn best_for_cost(class: &HypothesisClass, cost: &[f64]) -> Result<Hypothesis> {
    let w: Vec<f64> = cost.iter().map(|c| -c).collect();
    Ok(crate::oracles::weighted_max(class, &w)?.0)
}
