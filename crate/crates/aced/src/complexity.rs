//! Instance complexity measures and their known bounds.

use serde::{Deserialize, Serialize};

use crate::class::{gap_table, HypothesisClass};
use crate::design::{
    smd_solve, DesignObjective, GaussianObjective, PieceObjective, SolverConfig, SolverReport,
};
use crate::error::{check_len, AcedError, Result};
use crate::instances::is_noiseless;
pub use crate::instances::{make_prop3_instance, make_thresholds, make_tsybakov};

fn disagreement(a: &[bool], b: &[bool]) -> Vec<usize> {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect()
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(AcedError::InvalidArgument("epsilon must be finite and non-negative".into()))
    }
}

fn gap_floor(gap: f64, epsilon: f64, h: usize) -> Result<f64> {
    let d = gap.max(epsilon);
    if d > 0.0 {
        Ok(d)
    } else {
        Err(AcedError::DegenerateObjective(format!(
            "hypothesis {h} ties the optimum and epsilon is 0"
        )))
    }
}

/// `max_{h != h*} sum_{i: h_i != h*_i} 1 / (n^2 lambda_i max(gap_h, eps)^2)` as a piece objective.
pub fn rho_objective(class: &HypothesisClass, eta: &[f64], epsilon: f64) -> Result<PieceObjective> {
    check_epsilon(epsilon)?;
    let table = gap_table(class, eta)?;
    let c = class.require_explicit()?;
    let n = c.n();
    let n2 = (n * n) as f64;
    let star = c.row(table.h_star);
    let mut pieces = Vec::new();
    for (h, row) in c.rows().iter().enumerate() {
        if h == table.h_star {
            continue;
        }
        let d = gap_floor(table.gaps[h], epsilon, h)?;
        let a = 1.0 / (n2 * d * d);
        pieces.push(disagreement(star, row).into_iter().map(|i| (i, a)).collect());
    }
    PieceObjective::new(n, pieces)
}

/// `rho*(eps)` with its minimizing design. A single-hypothesis class has value 0.
pub fn rho_star(class: &HypothesisClass, eta: &[f64], epsilon: f64, cfg: &SolverConfig) -> Result<SolverReport> {
    let obj = rho_objective(class, eta, epsilon)?;
    smd_solve(&DesignObjective::Pieces(obj), cfg, 0)
}

/// Per-coordinate weights of the importance-sampling complexity:
/// `w_i = max over h with h_i != h*_i of 1 / max(eps, gap_h)`.
pub fn psi_weights(class: &HypothesisClass, eta: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    let table = gap_table(class, eta)?;
    let c = class.require_explicit()?;
    let star = c.row(table.h_star);
    let mut w = vec![0.0_f64; c.n()];
    for (h, row) in c.rows().iter().enumerate() {
        if h == table.h_star {
            continue;
        }
        let inv = 1.0 / gap_floor(table.gaps[h], epsilon, h)?;
        for i in disagreement(star, row) {
            w[i] = w[i].max(inv);
        }
    }
    Ok(w)
}

/// `max_i w_i / (n lambda_i)` as a piece objective.
pub fn psi_objective(class: &HypothesisClass, eta: &[f64], epsilon: f64) -> Result<PieceObjective> {
    let w = psi_weights(class, eta, epsilon)?;
    let n = w.len() as f64;
    let pieces = w
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| vec![(i, v / n)])
        .collect();
    PieceObjective::new(w.len(), pieces)
}

/// `psi*(eps)` with its minimizing design.
pub fn psi_star(class: &HypothesisClass, eta: &[f64], epsilon: f64, cfg: &SolverConfig) -> Result<SolverReport> {
    let obj = psi_objective(class, eta, epsilon)?;
    smd_solve(&DesignObjective::Pieces(obj), cfg, 0)
}

/// Monte Carlo estimate of `gamma*(eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub value: f64,
    pub se: f64,
    /// Standard error above 20% of the value.
    pub low_precision: bool,
    pub solver: SolverReport,
}

/// `gamma*(eps)`: solves the true-gap width objective, then re-estimates the squared
/// expected maximum at the solution with `mc_samples` fresh draws.
pub fn gamma_star(
    class: &HypothesisClass,
    eta: &[f64],
    epsilon: f64,
    mc_samples: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<GammaReport> {
    check_epsilon(epsilon)?;
    let table = gap_table(class, eta)?;
    let c = class.require_explicit()?;
    let obj = GaussianObjective::true_gap(c, table.h_star, &table.gaps, epsilon)?;
    let solver = smd_solve(&DesignObjective::Gaussian(obj.clone()), cfg, seed)?;
    let (mean, se_mean) = obj.width(&solver.lambda, mc_samples.max(2), seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let value = mean * mean;
    let se = 2.0 * mean.abs() * se_mean;
    Ok(GammaReport {
        value,
        se,
        low_precision: se > 0.2 * value,
        solver,
    })
}

/// `theta(xi) = sup_{r >= xi} |DIS(B(h*, r))| / (n r)`, exact over the realized radii.
pub fn disagreement_coefficient(class: &HypothesisClass, eta: &[f64], xi: f64) -> Result<f64> {
    let table = gap_table(class, eta)?;
    let c = class.require_explicit()?;
    let n = c.n();
    let nf = n as f64;
    let star = c.row(table.h_star);
    let mut by_radius: Vec<(usize, Vec<usize>)> = c
        .rows()
        .iter()
        .map(|row| {
            let d = disagreement(star, row);
            (d.len(), d)
        })
        .filter(|(k, _)| *k > 0)
        .collect();
    by_radius.sort_by_key(|(k, _)| *k);
    let mut covered = vec![false; n];
    let mut count = 0usize;
    let mut best = 0.0_f64;
    let mut x = 0;
    while x < by_radius.len() {
        let k = by_radius[x].0;
        while x < by_radius.len() && by_radius[x].0 == k {
            for &i in &by_radius[x].1 {
                if !covered[i] {
                    covered[i] = true;
                    count += 1;
                }
            }
            x += 1;
        }
        let r = k as f64 / nf;
        // The ball is constant on [r, next radius), so the ratio peaks at max(r, xi).
        let next = by_radius.get(x).map_or(f64::INFINITY, |(k2, _)| *k2 as f64 / nf);
        if next <= xi {
            continue;
        }
        let radius = r.max(xi);
        if radius > 0.0 {
            best = best.max(count as f64 / nf / radius);
        }
    }
    Ok(best)
}

/// Noise condition `|h Δ h*| / n <= a gap_h^alpha` for every hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsybakovSpec {
    pub a: f64,
    pub alpha: f64,
}

impl TsybakovSpec {
    pub fn new(a: f64, alpha: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(AcedError::InvalidArgument("a must be positive".into()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(AcedError::InvalidArgument("alpha must lie in (0, 1]".into()));
        }
        Ok(Self { a, alpha })
    }

    pub fn check(&self, class: &HypothesisClass, eta: &[f64]) -> Result<bool> {
        let table = gap_table(class, eta)?;
        let c = class.require_explicit()?;
        let star = c.row(table.h_star);
        let n = c.n() as f64;
        Ok(c.rows().iter().zip(&table.gaps).all(|(row, &gap)| {
            let mass = disagreement(star, row).len() as f64 / n;
            mass <= self.a * gap.powf(self.alpha) * (1.0 + 1e-12) + 1e-15
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Prop2Mode {
    Noiseless,
    Tsybakov(TsybakovSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop2Report {
    pub rho_star: f64,
    pub bound: f64,
    pub ratio: f64,
    pub holds: bool,
}

/// Compares `rho*(eps)` with the disagreement-coefficient bound (unit constant) and
/// reports whether the ratio stays below `c`.
pub fn verify_prop2(
    class: &HypothesisClass,
    eta: &[f64],
    epsilon: f64,
    mode: Prop2Mode,
    c: f64,
    cfg: &SolverConfig,
) -> Result<Prop2Report> {
    check_len(class.n(), eta.len())?;
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(AcedError::InvalidArgument("epsilon must lie in (0, 1]".into()));
    }
    let table = gap_table(class, eta)?;
    let inv = table.delta_min.map_or(1.0 / epsilon, |d| (1.0 / d).max(1.0 / epsilon));
    let log_term = inv.log2().ceil().max(1.0);
    let bound = match mode {
        Prop2Mode::Noiseless => {
            if !is_noiseless(eta) {
                return Err(AcedError::Precondition("labels are not noiseless".into()));
            }
            let nu = table.nu;
            log_term * disagreement_coefficient(class, eta, epsilon)? * (1.0 + nu * nu / (epsilon * epsilon))
        }
        Prop2Mode::Tsybakov(spec) => {
            if !spec.check(class, eta)? {
                return Err(AcedError::Precondition("noise condition does not hold".into()));
            }
            let theta = disagreement_coefficient(class, eta, spec.a * epsilon.powf(spec.alpha))?;
            spec.a * spec.a * epsilon.powf(-(2.0 - 2.0 * spec.alpha)) * theta * log_term
        }
    };
    let rho = rho_star(class, eta, epsilon, cfg)?.value;
    let ratio = if bound > 0.0 {
        rho / bound
    } else if rho == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(Prop2Report {
        rho_star: rho,
        bound,
        ratio,
        holds: ratio <= c,
    })
}

/// All measures of one instance at one accuracy level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub epsilon: f64,
    pub rho_star: f64,
    pub rho_certificate: f64,
    pub gamma_star: f64,
    pub gamma_se: f64,
    pub psi_star: f64,
    pub psi_certificate: f64,
    /// `(xi, theta(xi))` pairs.
    pub theta: Vec<(f64, f64)>,
}

pub fn complexity_report(
    class: &HypothesisClass,
    eta: &[f64],
    epsilon: f64,
    xis: &[f64],
    mc_samples: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<ComplexityReport> {
    let rho = rho_star(class, eta, epsilon, cfg)?;
    let gamma = gamma_star(class, eta, epsilon, mc_samples, cfg, seed)?;
    let psi = psi_star(class, eta, epsilon, cfg)?;
    let theta = xis
        .iter()
        .map(|&xi| disagreement_coefficient(class, eta, xi).map(|t| (xi, t)))
        .collect::<Result<_>>()?;
    Ok(ComplexityReport {
        epsilon,
        rho_star: rho.value,
        rho_certificate: rho.certificate,
        gamma_star: gamma.value,
        gamma_se: gamma.se,
        psi_star: psi.value,
        psi_certificate: psi.certificate,
        theta,
    })
}
