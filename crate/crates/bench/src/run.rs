//! Executes an experiment: every (algorithm, seed) pair, evaluated at each checkpoint.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use aced::algorithms::{
    aced_fixed_budget, aced_fixed_budget_efficient, aced_fixed_confidence, aced_waterfilled,
    baseline_iwal, baseline_passive, baseline_uniform_disagreement, EfficientParams,
    FixedBudgetParams, FixedConfidenceParams, IwalParams, IwalVariant, PassiveParams, RunRecord,
    UniformDisagreementParams, WaterfilledParams,
};
use aced::class::{ExplicitClass, HypothesisClass, LinearClass};
use aced::design::SolverConfig;
use aced::instances::{make_prop3_instance, make_thresholds, make_tsybakov, Instance};
use aced::pool::{pool_error, LabelModel, LabelSource, Pool};
use aced::EstimatorKind;
use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AlgorithmSpec, ExperimentConfig, InstanceSpec};
use crate::ingest::ingest_csv;
use crate::plotdata::{curves, write_curves};

pub fn build_instance(spec: &InstanceSpec) -> Result<Instance> {
    Ok(match spec {
        InstanceSpec::Thresholds {
            n,
            k_star,
            eps,
            persistent,
            linear,
        } => {
            let mut inst = make_thresholds(*n, *k_star, *eps)?;
            inst.labels = LabelModel::new(inst.eta().to_vec(), *persistent, 0)?;
            if *linear {
                let rows: Vec<Vec<f64>> = (0..*n).map(|i| vec![i as f64 / *n as f64]).collect();
                inst.pool = Pool::with_features(inst.pool.ids().to_vec(), &rows)?;
                inst.class = HypothesisClass::Linear(LinearClass::new(inst.pool.clone(), Default::default())?);
            }
            inst
        }
        InstanceSpec::Prop3 { m } => make_prop3_instance(*m)?,
        InstanceSpec::Tsybakov { n, a, alpha, seed } => make_tsybakov(*n, *a, *alpha, *seed)?.0,
        InstanceSpec::Csv {
            pool,
            labels,
            hypotheses,
            persistent,
        } => ingest_csv(pool, labels, hypotheses.as_deref(), *persistent)?,
    })
}

/// The instance seen by the algorithms: the pool minus the holdout points.
pub struct TrainView {
    pub class: HypothesisClass,
    pub eta: Vec<f64>,
    pub persistent: bool,
    pub ids: Vec<String>,
    /// Original pool index of each training point.
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
    full: HypothesisClass,
    full_pool: Pool,
    full_eta: Vec<f64>,
    /// Source hypothesis of each row of a restricted explicit class.
    origin: Vec<usize>,
}

impl TrainView {
    pub fn new(inst: &Instance, fraction: f64, seed: u64) -> Result<Self> {
        let n = inst.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let held = (fraction * n as f64).floor() as usize;
        let mut holdout = order[..held].to_vec();
        let mut train = order[held..].to_vec();
        holdout.sort_unstable();
        train.sort_unstable();
        let eta: Vec<f64> = train.iter().map(|&i| inst.eta()[i]).collect();
        let (class, origin) = match &inst.class {
            HypothesisClass::Explicit(c) if held == 0 => (inst.class.clone(), (0..c.len()).collect()),
            HypothesisClass::Explicit(c) => {
                let (r, origin) = c.restrict(&train)?;
                (HypothesisClass::Explicit(r), origin)
            }
            HypothesisClass::Linear(l) => (
                HypothesisClass::Linear(LinearClass::new(l.pool.subset(&train)?, l.fit)?),
                Vec::new(),
            ),
        };
        Ok(Self {
            class,
            eta,
            persistent: inst.labels.persistent(),
            ids: train.iter().map(|&i| inst.pool.ids()[i].clone()).collect(),
            train,
            holdout,
            full: inst.class.clone(),
            full_pool: inst.pool.clone(),
            full_eta: inst.eta().to_vec(),
            origin,
        })
    }

    /// Accuracy on the holdout points of the hypothesis recorded at a checkpoint.
    fn holdout_accuracy(&self, index: Option<usize>, linear: Option<&aced::class::LinearHypothesis>) -> Option<f64> {
        if self.holdout.is_empty() {
            return None;
        }
        let labels: Vec<bool> = match (&self.full, index, linear) {
            (HypothesisClass::Explicit(c), Some(h), _) => {
                let row = c.row(*self.origin.get(h)?);
                self.holdout.iter().map(|&i| row[i]).collect()
            }
            (HypothesisClass::Linear(_), _, Some(lin)) => self
                .holdout
                .iter()
                .map(|&i| lin.predict(self.full_pool.row(i).unwrap_or(&[])))
                .collect(),
            _ => return None,
        };
        let eta: Vec<f64> = self.holdout.iter().map(|&i| self.full_eta[i]).collect();
        pool_error(&labels, &eta).ok().map(|e| 1.0 - e)
    }

    /// Panics if any query touched a held-out point.
    pub fn assert_no_leak(&self, record: &RunRecord) {
        let held: HashSet<usize> = self.holdout.iter().copied().collect();
        for q in &record.queries {
            let original = self.train[q.index];
            assert!(!held.contains(&original), "query of held-out point {original}");
        }
    }
}

fn solver(base: SolverConfig, spec: &AlgorithmSpec) -> SolverConfig {
    SolverConfig {
        tol: spec.tol.unwrap_or(base.tol),
        rel_tol: spec.rel_tol.unwrap_or(base.rel_tol),
        b0: spec.b0.unwrap_or(base.b0),
        max_batch: spec.max_batch.unwrap_or(base.max_batch),
        max_iter: spec.max_iter.unwrap_or(base.max_iter),
        ..base
    }
}

fn estimator(spec: &AlgorithmSpec) -> Result<EstimatorKind> {
    Ok(match spec.estimator.as_deref().unwrap_or("naive") {
        "naive" => EstimatorKind::Naive,
        "ips" => EstimatorKind::Ips,
        "chaining" => EstimatorKind::Chaining,
        other => bail!("unknown estimator {other:?}"),
    })
}

fn variant(spec: &AlgorithmSpec) -> Result<IwalVariant> {
    Ok(match spec.variant.as_deref().unwrap_or("iwal0") {
        "iwal0" => IwalVariant::Iwal0,
        "iwal1" => IwalVariant::Iwal1,
        "oracular0" => IwalVariant::Oracular0,
        "oracular1" => IwalVariant::Oracular1,
        other => bail!("unknown IWAL variant {other:?}"),
    })
}

fn budget(spec: &AlgorithmSpec, n: usize) -> usize {
    spec.budget.unwrap_or(n)
}

/// Runs one configured algorithm.
pub fn run_algorithm(
    spec: &AlgorithmSpec,
    class: &HypothesisClass,
    labels: &mut dyn LabelSource,
    seed: u64,
) -> Result<RunRecord> {
    let n = class.n();
    let record = match spec.name.as_str() {
        "passive" => baseline_passive(
            class,
            labels,
            &PassiveParams {
                budget: budget(spec, n),
                checkpoint_every: spec.checkpoint_every,
            },
            seed,
        )?,
        "uniform_disagreement" => baseline_uniform_disagreement(
            class,
            labels,
            &UniformDisagreementParams {
                budget: budget(spec, n),
                delta: spec.delta.unwrap_or(0.1),
                checkpoint_every: spec.checkpoint_every,
            },
            seed,
        )?,
        "iwal" => baseline_iwal(
            class,
            labels,
            &IwalParams {
                c0: spec.c0.unwrap_or(1e-3),
                variant: variant(spec)?,
                budget: budget(spec, n),
                checkpoint_every: spec.checkpoint_every,
            },
            seed,
        )?,
        "aced_fixed_confidence" => {
            let d = FixedConfidenceParams::default();
            let p = FixedConfidenceParams {
                delta: spec.delta.unwrap_or(d.delta),
                c_budget: spec.c_budget.unwrap_or(d.c_budget),
                max_rounds: spec.max_rounds.unwrap_or(d.max_rounds),
                solver: solver(d.solver, spec),
                ..d
            };
            aced_fixed_confidence(class, labels, &p, seed)?
        }
        "aced_fixed_budget" => {
            let d = FixedBudgetParams::default();
            let p = FixedBudgetParams {
                budget: budget(spec, n),
                epsilon: spec.epsilon.unwrap_or(d.epsilon),
                estimator: estimator(spec)?,
                delta: spec.delta.unwrap_or(d.delta),
                n_max: spec.n_max.unwrap_or(d.n_max),
                solver: solver(d.solver, spec),
            };
            aced_fixed_budget(class, labels, &p, seed)?
        }
        "aced_fixed_budget_efficient" => {
            let d = EfficientParams::default();
            let p = EfficientParams {
                budget: budget(spec, n),
                epsilon: spec.epsilon.unwrap_or(d.epsilon),
                n_max: spec.n_max.unwrap_or(d.n_max),
                solver: solver(d.solver, spec),
            };
            aced_fixed_budget_efficient(class, labels, &p, seed)?
        }
        "aced_waterfilled" => {
            let d = WaterfilledParams::default();
            let p = WaterfilledParams {
                budget: budget(spec, n),
                epsilon: spec.epsilon.unwrap_or(d.epsilon),
                batch: spec.batch.or(d.batch),
                n_max: spec.n_max.unwrap_or(d.n_max),
                solver: solver(d.solver, spec),
            };
            aced_waterfilled(class, labels, &p, seed)?
        }
        other => bail!("unknown algorithm {other:?}"),
    };
    Ok(record)
}

/// One evaluation point of one run; failed runs leave the numbers empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub algorithm: String,
    pub seed: u64,
    pub queries: Option<usize>,
    pub pool_accuracy: Option<f64>,
    pub holdout_accuracy: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub algorithm: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<RunRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_ms: f64,
    #[serde(skip)]
    pub rows: Vec<ResultRow>,
}

fn evaluate(view: &TrainView, label: &str, seed: u64, record: &RunRecord) -> Result<Vec<ResultRow>> {
    let mut points: Vec<(usize, Option<usize>, Option<&aced::class::LinearHypothesis>, &[bool])> = record
        .checkpoints
        .iter()
        .map(|c| (c.queries, c.index, c.linear.as_ref(), c.labels.as_slice()))
        .collect();
    let total = record.queries.len();
    if points.last().is_none_or(|p| p.0 < total) {
        points.push((total, record.returned, record.returned_linear.as_ref(), &record.returned_labels));
    }
    points
        .into_iter()
        .map(|(queries, index, linear, labels)| {
            let err = pool_error(labels, &view.eta).context("checkpoint labels do not cover the pool")?;
            Ok(ResultRow {
                algorithm: label.to_string(),
                seed,
                queries: Some(queries),
                pool_accuracy: Some(1.0 - err),
                holdout_accuracy: view.holdout_accuracy(index, linear),
                status: "ok".into(),
            })
        })
        .collect()
}

/// Where labels come from during a run.
pub enum Labels<'a> {
    /// The instance's label model, reseeded per run.
    Model,
    /// A caller-supplied source shared by all runs, which then execute one at a time.
    External(&'a mut dyn LabelSource),
}

fn execute(view: &TrainView, spec: &AlgorithmSpec, seed: u64, source: Option<&mut dyn LabelSource>) -> RunOutcome {
    let start = Instant::now();
    let result = match source {
        Some(s) => run_algorithm(spec, &view.class, s, seed),
        None => LabelModel::new(view.eta.clone(), view.persistent, seed)
            .map_err(anyhow::Error::from)
            .and_then(|mut m| run_algorithm(spec, &view.class, &mut m, seed)),
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let label = spec.label().to_string();
    let evaluated = result.and_then(|r| {
        view.assert_no_leak(&r);
        evaluate(view, &label, seed, &r).map(|rows| (r, rows))
    });
    match evaluated {
        Ok((record, rows)) => RunOutcome {
            algorithm: label,
            seed,
            record: Some(record),
            error: None,
            wall_ms,
            rows,
        },
        Err(e) => {
            let msg = format!("{e:#}");
            RunOutcome {
                rows: vec![ResultRow {
                    algorithm: label.clone(),
                    seed,
                    queries: None,
                    pool_accuracy: None,
                    holdout_accuracy: None,
                    status: format!("error: {msg}"),
                }],
                algorithm: label,
                seed,
                record: None,
                error: Some(msg),
                wall_ms,
            }
        }
    }
}

/// Runs every (algorithm, seed) pair, ordered by config position and then seed.
pub fn run_experiment(cfg: &ExperimentConfig, labels: Labels) -> Result<Vec<RunOutcome>> {
    let inst = build_instance(&cfg.instance)?;
    let view = TrainView::new(&inst, cfg.holdout, cfg.holdout_seed)?;
    let mut seeds = cfg.seed_list();
    seeds.sort_unstable();
    seeds.dedup();
    let jobs: Vec<(&AlgorithmSpec, u64)> = cfg
        .algorithms
        .iter()
        .flat_map(|a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    Ok(match labels {
        Labels::Model => jobs
            .par_iter()
            .map(|&(spec, seed)| execute(&view, spec, seed, None))
            .collect(),
        Labels::External(source) => {
            let mut out = Vec::with_capacity(jobs.len());
            for &(spec, seed) in &jobs {
                out.push(execute(&view, spec, seed, Some(&mut *source)));
            }
            out
        }
    })
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_results(path: &Path, outcomes: &[RunOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["algorithm", "seed", "queries", "pool_accuracy", "holdout_accuracy", "status"])?;
    for row in outcomes.iter().flat_map(|o| &o.rows) {
        w.write_record([
            row.algorithm.clone(),
            row.seed.to_string(),
            fmt_opt(row.queries),
            fmt_opt(row.pool_accuracy),
            fmt_opt(row.holdout_accuracy),
            row.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings(path: &Path, outcomes: &[RunOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["algorithm", "seed", "wall_ms"])?;
    for o in outcomes {
        w.write_record([o.algorithm.clone(), o.seed.to_string(), format!("{:.3}", o.wall_ms)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_runs(path: &Path, outcomes: &[RunOutcome]) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    for o in outcomes {
        serde_json::to_writer(&mut w, o)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv`, `curves.csv`, `timings.csv` and `runs.jsonl` under `dir`.
pub fn write_outputs(dir: &Path, outcomes: &[RunOutcome]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_results(&dir.join("results.csv"), outcomes)?;
    let rows: Vec<ResultRow> = outcomes.iter().flat_map(|o| o.rows.iter().cloned()).collect();
    write_curves(&dir.join("curves.csv"), &curves(&rows))?;
    write_timings(&dir.join("timings.csv"), outcomes)?;
    write_runs(&dir.join("runs.jsonl"), outcomes)?;
    Ok(())
}

/// Explicit class of an instance, for the complexity measures.
pub fn explicit_class(inst: &Instance) -> Result<&ExplicitClass> {
    inst.class
        .explicit()
        .context("complexity measures need an explicit hypothesis class")
}
