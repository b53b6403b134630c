//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use aced::design::SolverConfig;
use serde::{Deserialize, Serialize};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "ACED_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "one")]
    pub replicates: usize,
    /// Explicit seed list; when absent, seeds are `seed .. seed + replicates`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of the pool held out from every run for evaluation.
    #[serde(default)]
    pub holdout: f64,
    #[serde(default)]
    pub holdout_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub instance: InstanceSpec,
    #[serde(default, rename = "algorithm")]
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub complexity: ComplexitySpec,
}

fn default_name() -> String {
    "experiment".into()
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    Thresholds {
        n: usize,
        k_star: usize,
        #[serde(default = "unit")]
        eps: f64,
        #[serde(default)]
        persistent: bool,
        /// Replace the explicit class by a linear class over the feature `i / n`.
        #[serde(default)]
        linear: bool,
    },
    Prop3 {
        m: usize,
    },
    Tsybakov {
        n: usize,
        a: f64,
        alpha: f64,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        pool: PathBuf,
        labels: PathBuf,
        /// Optional explicit class; without it the class is linear over the features.
        #[serde(default)]
        hypotheses: Option<PathBuf>,
        #[serde(default = "yes")]
        persistent: bool,
    },
}

fn unit() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// One algorithm entry. Unset fields fall back to the algorithm's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: String,
    /// Column label in the outputs; defaults to `name`.
    #[serde(default)]
    pub label: Option<String>,
    pub budget: Option<usize>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub c0: Option<f64>,
    pub c_budget: Option<f64>,
    pub estimator: Option<String>,
    pub variant: Option<String>,
    pub batch: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub max_rounds: Option<usize>,
    pub n_max: Option<usize>,
    pub tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub b0: Option<usize>,
    pub max_batch: Option<usize>,
    pub max_iter: Option<usize>,
}

impl AlgorithmSpec {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexitySpec {
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    #[serde(default = "default_xis")]
    pub xis: Vec<f64>,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Relative duality gap at which the design solver stops.
    #[serde(default = "default_complexity_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_complexity_iter")]
    pub max_iter: usize,
}

impl ComplexitySpec {
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            rel_tol: self.rel_tol,
            max_iter: self.max_iter,
            ..SolverConfig::default()
        }
    }
}

fn default_complexity_rel_tol() -> f64 {
    0.05
}

fn default_complexity_iter() -> usize {
    1000
}

fn default_eps() -> f64 {
    0.1
}

fn default_xis() -> Vec<f64> {
    vec![0.01, 0.1]
}

fn default_mc() -> usize {
    4000
}

impl Default for ComplexitySpec {
    fn default() -> Self {
        Self {
            epsilon: default_eps(),
            xis: default_xis(),
            mc_samples: default_mc(),
            seed: 0,
            rel_tol: default_complexity_rel_tol(),
            max_iter: default_complexity_iter(),
        }
    }
}

pub const ALGORITHMS: &[&str] = &[
    "passive",
    "uniform_disagreement",
    "iwal",
    "aced_fixed_confidence",
    "aced_fixed_budget",
    "aced_fixed_budget_efficient",
    "aced_waterfilled",
];

impl ExperimentConfig {
    /// Parses and validates a config; CSV paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).context("malformed config")?;
        if let InstanceSpec::Csv {
            pool,
            labels,
            hypotheses,
            ..
        } = &mut cfg.instance
        {
            for p in [Some(pool), Some(labels), hypotheses.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.replicates >= 1, "replicates must be at least 1");
        if let Some(seeds) = &self.seeds {
            ensure!(
                seeds.len() == self.replicates || self.replicates == 1,
                "seed list has {} entries but replicates = {}",
                seeds.len(),
                self.replicates
            );
            ensure!(!seeds.is_empty(), "seed list is empty");
        }
        ensure!(
            (0.0..=0.5).contains(&self.holdout),
            "holdout fraction {} outside [0, 0.5]",
            self.holdout
        );
        if let InstanceSpec::Csv {
            pool,
            labels,
            hypotheses,
            ..
        } = &self.instance
        {
            for p in [Some(pool), Some(labels), hypotheses.as_ref()].into_iter().flatten() {
                ensure!(p.is_file(), "referenced file {} does not exist", p.display());
            }
        }
        for a in &self.algorithms {
            if !ALGORITHMS.contains(&a.name.as_str()) {
                bail!("unknown algorithm {:?}; expected one of {:?}", a.name, ALGORITHMS);
            }
        }
        let mut labels: Vec<&str> = self.algorithms.iter().map(AlgorithmSpec::label).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            bail!("duplicate algorithm label {:?}; set `label` to tell entries apart", w[0]);
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.replicates as u64).map(|r| self.seed + r).collect(),
        }
    }

    /// Output directory after the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}
