use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_labels, query_iid, round_record, RunRecord};
use crate::class::HypothesisClass;
use crate::design::{smd_solve, DesignObjective, GaussianObjective, SolverConfig};
use crate::error::{AcedError, Result};
use crate::estimators::{chaining_estimate, err_from_estimate, Query};
use crate::pool::LabelSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedConfidenceParams {
    pub delta: f64,
    /// Multiplier on the per-round sample size.
    pub c_budget: f64,
    pub max_rounds: usize,
    /// Upper limit on the queries of a single round.
    pub max_round_queries: usize,
    pub solver: SolverConfig,
}

impl Default for FixedConfidenceParams {
    fn default() -> Self {
        Self {
            delta: 0.1,
            c_budget: 1.0,
            max_rounds: 40,
            max_round_queries: 10_000_000,
            solver: SolverConfig {
                rel_tol: 0.2,
                max_iter: 300,
                max_batch: 1 << 12,
                ..SolverConfig::default()
            },
        }
    }
}

/// Elimination on plug-in errors with per-round designs, sample sizes from the design
/// value, and the chaining estimator over the surviving hypotheses.
pub fn aced_fixed_confidence(
    class: &HypothesisClass,
    labels: &mut dyn LabelSource,
    params: &FixedConfidenceParams,
    seed: u64,
) -> Result<RunRecord> {
    check_labels(class, labels)?;
    let c = class.require_explicit()?;
    if !(params.delta > 0.0 && params.delta < 1.0) {
        return Err(AcedError::InvalidArgument("delta must lie in (0, 1)".into()));
    }
    if !(params.c_budget > 0.0) {
        return Err(AcedError::InvalidArgument("c_budget must be positive".into()));
    }
    let mut record = RunRecord::new(
        "aced_fixed_confidence",
        seed,
        &[("delta", params.delta), ("c_budget", params.c_budget)],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut active: Vec<usize> = (0..c.len()).collect();
    let mut best = 0usize;
    let mut k = 1;
    while active.len() > 1 {
        if k > params.max_rounds {
            record.flag("round_cap");
            break;
        }
        let delta_k = params.delta / (2.0 * (k * k) as f64);
        let obj = GaussianObjective::fixed_confidence(c, &active, 2.0 * (1.0 / delta_k).ln())?;
        let report = smd_solve(&DesignObjective::Gaussian(obj), &params.solver, seed.wrapping_add(k as u64))?;
        let tau = report.value.max(0.0);
        let wanted = (params.c_budget * tau * 4f64.powi(k as i32 + 1)).ceil();
        let count = if wanted > params.max_round_queries as f64 {
            record.flag("query_cap");
            params.max_round_queries
        } else {
            (wanted as usize).max(1)
        };
        let mut log: Vec<Query> = Vec::with_capacity(count);
        query_iid(&report.lambda, count, k, labels, &mut rng, &mut log)?;
        let group: Vec<&[bool]> = active.iter().map(|&h| c.row(h)).collect();
        let est = chaining_estimate(&group, &log, report.lambda.as_slice(), delta_k)?;
        if est.feasible == Some(false) {
            record.flag("chaining_infeasible");
        }
        let errs: Vec<f64> = group.iter().map(|row| err_from_estimate(row, &est)).collect();
        let (arg, low) = errs
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (x, &e)| if e < acc.1 { (x, e) } else { acc });
        best = active[arg];
        let margin = 0.5f64.powi(k as i32 + 1);
        let survivors: Vec<usize> = active
            .iter()
            .zip(&errs)
            .filter(|(_, &e)| e - low < margin)
            .map(|(&h, _)| h)
            .collect();
        // The empirical minimizer always survives, so the set is never empty.
        active = if survivors.is_empty() { vec![best] } else { survivors };
        let mut rr = round_record(k, &report.lambda, &report, count);
        rr.survivors = Some(active.len());
        rr.active = Some(active.clone());
        record.rounds.push(rr);
        record.queries.extend(log);
        let h = c.hypothesis(if active.len() == 1 { active[0] } else { best });
        record.checkpoint(record.queries.len(), &h);
        k += 1;
    }
    let out = if active.len() == 1 { active[0] } else { best };
    record.finish(c.hypothesis(out));
    Ok(record)
}
