use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{budget_rounds, check_labels, plug_in_best, RoundRecord, RunRecord};
use crate::class::HypothesisClass;
use crate::design::{sample_unique, smd_solve, waterfill, Design, DesignObjective, GaussianObjective, SolverConfig};
use crate::error::{AcedError, Result};
use crate::estimators::{naive_estimate, EstimatorKind, EtaEstimate, Query};
use crate::pool::LabelSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterfilledParams {
    /// Maximum number of distinct labels.
    pub budget: usize,
    pub epsilon: f64,
    /// Fresh labels per round; `None` uses `min(250, n / 4)`.
    pub batch: Option<usize>,
    pub n_max: usize,
    pub solver: SolverConfig,
}

impl Default for WaterfilledParams {
    fn default() -> Self {
        Self {
            budget: 1000,
            epsilon: 0.01,
            batch: None,
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

pub const DEFAULT_BATCH: usize = 250;

/// Fixed-budget rounds with label reuse: each round samples fresh indices from the
/// waterfilled distribution so that all labels so far follow the latest design.
pub fn aced_waterfilled(
    class: &HypothesisClass,
    labels: &mut dyn LabelSource,
    params: &WaterfilledParams,
    seed: u64,
) -> Result<RunRecord> {
    check_labels(class, labels)?;
    if !labels.is_persistent() {
        return Err(AcedError::Precondition("label reuse needs persistent labels".into()));
    }
    let rounds = budget_rounds(params.epsilon)?;
    let n = class.n();
    let batch = params.batch.unwrap_or(DEFAULT_BATCH.min(n / 4)).max(1);
    let mut record = RunRecord::new(
        "aced_waterfilled",
        seed,
        &[
            ("budget", params.budget as f64),
            ("epsilon", params.epsilon),
            ("batch", batch as f64),
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = EtaEstimate::constant(EstimatorKind::Naive, n, 0.0);
    let mut queried = vec![false; n];
    let mut marginals: Vec<Design> = Vec::new();
    for k in 1..=rounds {
        let remaining = params.budget.saturating_sub(record.queries.len());
        if remaining == 0 {
            break;
        }
        let want = batch.min(remaining);
        let anchor = plug_in_best(class, &est)?;
        let scale = 0.5f64.powi(k as i32 - 1);
        let obj = GaussianObjective::fixed_budget(class, &anchor, &est.cost(), scale, params.n_max)?;
        let report = smd_solve(&DesignObjective::Gaussian(obj), &params.solver, seed.wrapping_add(k as u64))?;
        let p = waterfill(&report.lambda, &marginals, k)?;
        let (picked, fallback) = sample_unique(&p, want, &queried, &mut rng)?;
        if fallback {
            record.flag("sampling_fallback");
        }
        for &i in &picked {
            queried[i] = true;
            let label = labels.query(i)?;
            record.queries.push(Query {
                round: k,
                index: i,
                prob: p.as_slice()[i],
                label,
            });
        }
        record.rounds.push(RoundRecord {
            round: k,
            sampling: p.as_slice().to_vec(),
            target: Some(report.lambda.as_slice().to_vec()),
            objective: report.value,
            certificate: report.certificate,
            converged: report.converged,
            queries: picked.len(),
            survivors: None,
            active: None,
            anchor: anchor.index,
        });
        marginals.push(p);
        est = naive_estimate(n, &record.queries)?;
        record.checkpoint(record.queries.len(), &plug_in_best(class, &est)?);
        if picked.len() < want {
            record.flag("pool_exhausted");
            break;
        }
    }
    record.finish(plug_in_best(class, &est)?);
    Ok(record)
}
