//! Agnostic pool-based active classification by adaptive experimental design.
//!
//! The crate covers the pool and label model, finite and oracle-backed hypothesis
//! classes, label-mean estimators, the design objectives with their stochastic
//! mirror-descent solver, instance complexity measures, and the active learning
//! algorithms together with disagreement-based baselines.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod class;
pub mod complexity;
pub mod design;
pub mod error;
pub mod estimators;
pub mod instances;
pub mod oracles;
pub mod pool;

pub use class::{gap_table, to_bandit, BanditView, ExplicitClass, GapTable, Hypothesis, HypothesisClass, LinearClass, LinearHypothesis};
pub use design::{Design, SolverConfig, SolverReport};
pub use error::{AcedError, Result};
pub use estimators::{EstimatorKind, EtaEstimate, Query};
pub use instances::Instance;
pub use pool::{LabelModel, LabelSource, Pool};
