//! Synthetic problem instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::class::{gap_table, ExplicitClass, HypothesisClass};
use crate::complexity::TsybakovSpec;
use crate::error::{AcedError, Result};
use crate::pool::{LabelModel, Pool};

/// A pool with its hypothesis class and label model.
#[derive(Debug, Clone)]
pub struct Instance {
    pub pool: Pool,
    pub class: HypothesisClass,
    pub labels: LabelModel,
}

impl Instance {
    pub fn explicit(rows: Vec<Vec<bool>>, eta: Vec<f64>, persistent: bool, seed: u64) -> Result<Self> {
        let class = ExplicitClass::new(rows, true)?;
        let pool = Pool::featureless(class.n())?;
        Ok(Self {
            pool,
            class: HypothesisClass::Explicit(class),
            labels: LabelModel::new(eta, persistent, seed)?,
        })
    }

    pub fn n(&self) -> usize {
        self.pool.len()
    }

    pub fn eta(&self) -> &[f64] {
        self.labels.eta()
    }
}

/// Gap instance on `n = m + m^2` points: the empty labeling and `[m] ∪ {m + i}` for
/// every tail point, all labels 0 with persistent noise.
pub fn make_prop3_instance(m: usize) -> Result<Instance> {
    if m == 0 {
        return Err(AcedError::InvalidArgument("m must be positive".into()));
    }
    let n = m + m * m;
    let mut rows = vec![vec![false; n]];
    for i in 0..m * m {
        let mut row = vec![false; n];
        row[..m].iter_mut().for_each(|x| *x = true);
        row[m + i] = true;
        rows.push(row);
    }
    Instance::explicit(rows, vec![0.0; n], true, 0)
}

/// Thresholds `1{i <= k}` for `k = 1..n` with bandit means `eps` on the first
/// `k_star` points and `-eps` after.
pub fn make_thresholds(n: usize, k_star: usize, eps: f64) -> Result<Instance> {
    if n == 0 || k_star == 0 || k_star > n {
        return Err(AcedError::InvalidArgument("need 1 <= k_star <= n".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(AcedError::InvalidArgument("eps must lie in (0, 1]".into()));
    }
    let rows = (1..=n).map(|k| (0..n).map(|i| i < k).collect()).collect();
    let eta = (0..n)
        .map(|i| if i < k_star { (1.0 + eps) / 2.0 } else { (1.0 - eps) / 2.0 })
        .collect();
    Instance::explicit(rows, eta, false, 0)
}

const TSYBAKOV_ATTEMPTS: usize = 200;
const TSYBAKOV_CLASS: usize = 8;

/// Random labels and class satisfying the noise condition `spec`. Label noise shrinks
/// across attempts; gives up after a bounded number of attempts.
pub fn make_tsybakov(n: usize, a: f64, alpha: f64, seed: u64) -> Result<(Instance, TsybakovSpec)> {
    let spec = TsybakovSpec::new(a, alpha)?;
    if n < 2 {
        return Err(AcedError::InvalidArgument("need at least two points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..TSYBAKOV_ATTEMPTS {
        let noise = 0.3 * (1.0 - attempt as f64 / (TSYBAKOV_ATTEMPTS - 1) as f64);
        let star: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let eta: Vec<f64> = star
            .iter()
            .map(|&y| {
                let q = rng.random_range(0.0..=noise);
                if y { 1.0 - q } else { q }
            })
            .collect();
        let mut rows = vec![star.clone()];
        while rows.len() < TSYBAKOV_CLASS {
            let flips = rng.random_range(1..=(n / 4).max(1));
            let mut row = star.clone();
            for _ in 0..flips {
                let i = rng.random_range(0..n);
                row[i] = !row[i];
            }
            if !rows.contains(&row) {
                rows.push(row);
            }
            if rows.len() as f64 >= 2f64.powi(n.min(30) as i32) {
                break;
            }
        }
        let inst = Instance::explicit(rows, eta, false, seed)?;
        if spec.check(&inst.class, inst.eta())? {
            return Ok((inst, spec));
        }
    }
    Err(AcedError::Precondition(format!(
        "no instance satisfying a = {a}, alpha = {alpha} after {TSYBAKOV_ATTEMPTS} attempts"
    )))
}

/// True when `eta` is exactly 0/1.
pub fn is_noiseless(eta: &[f64]) -> bool {
    eta.iter().all(|&e| e == 0.0 || e == 1.0)
}

/// Sanity summary used by generators and tests: index of the best hypothesis.
pub fn best_hypothesis(inst: &Instance) -> Result<usize> {
    Ok(gap_table(&inst.class, inst.eta())?.h_star)
}
