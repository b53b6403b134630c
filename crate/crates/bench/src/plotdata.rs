//! Learning curves: running-maximum accuracy against label count, averaged over seeds.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

use crate::run::ResultRow;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub algorithm: String,
    pub queries: usize,
    pub mean_acc: f64,
    /// Population standard deviation across seeds.
    pub std_acc: f64,
}

/// Each seed's accuracy is replaced by its running maximum. At every label count seen
/// for an algorithm, a seed contributes its value at its last checkpoint at or below
/// that count; seeds with no such checkpoint are left out.
pub fn curves(rows: &[ResultRow]) -> Vec<CurvePoint> {
    let mut order: Vec<&str> = Vec::new();
    let mut runs: BTreeMap<(&str, u64), Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        let (Some(q), Some(acc)) = (r.queries, r.pool_accuracy) else {
            continue;
        };
        if !order.contains(&r.algorithm.as_str()) {
            order.push(&r.algorithm);
        }
        runs.entry((&r.algorithm, r.seed)).or_default().push((q, acc));
    }
    let mut out = Vec::new();
    for alg in order {
        let seeds: Vec<Vec<(usize, f64)>> = runs
            .iter()
            .filter(|((a, _), _)| *a == alg)
            .map(|(_, pts)| {
                let mut pts = pts.clone();
                pts.sort_by_key(|p| p.0);
                let mut best = f64::NEG_INFINITY;
                pts.into_iter()
                    .map(|(q, a)| {
                        best = best.max(a);
                        (q, best)
                    })
                    .collect()
            })
            .collect();
        let mut grid: Vec<usize> = seeds.iter().flatten().map(|p| p.0).collect();
        grid.sort_unstable();
        grid.dedup();
        for q in grid {
            let vals: Vec<f64> = seeds
                .iter()
                .filter_map(|pts| pts.iter().take_while(|p| p.0 <= q).last().map(|p| p.1))
                .collect();
            let k = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / k;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
            out.push(CurvePoint {
                algorithm: alg.to_string(),
                queries: q,
                mean_acc: mean,
                std_acc: var.sqrt(),
            });
        }
    }
    out
}

pub fn write_curves(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["algorithm", "queries", "mean_acc", "std_acc"])?;
    for p in points {
        w.write_record([
            p.algorithm.clone(),
            p.queries.to_string(),
            p.mean_acc.to_string(),
            p.std_acc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn optional<T: std::str::FromStr>(v: &str, line: u64, what: &str) -> Result<Option<T>> {
    if v.is_empty() {
        return Ok(None);
    }
    v.parse()
        .map(Some)
        .map_err(|_| anyhow!("line {line}: bad {what} {v:?}"))
}

/// Reads a `results.csv` written by [`crate::run::write_results`].
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("{}: malformed row", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 6 {
            return Err(anyhow!("{}:{line}: expected 6 columns", path.display()));
        }
        rows.push(ResultRow {
            algorithm: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| anyhow!("{}:{line}: bad seed", path.display()))?,
            queries: optional(&rec[2], line, "query count")?,
            pool_accuracy: optional(&rec[3], line, "accuracy")?,
            holdout_accuracy: optional(&rec[4], line, "accuracy")?,
            status: rec[5].to_string(),
        });
    }
    Ok(rows)
}
