//! CSV import and export of pools, labels and explicit classes.
//!
//! Pool files have an `id` column followed by feature columns. Label files have
//! `id,y` with `y` in {0, 1}, or `id,eta` with `eta` in [0, 1]. Hypothesis files have a
//! `hypothesis` column followed by one 0/1 column per pool id.

use std::path::Path;

use aced::class::{ExplicitClass, HypothesisClass, LinearClass};
use aced::instances::Instance;
use aced::oracles::LogisticConfig;
use aced::pool::{LabelModel, Pool};
use anyhow::{anyhow, bail, ensure, Context, Result};

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn records(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut rdr = reader(path)?;
    let header = rdr
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .clone();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.with_context(|| format!("{}: malformed row", path.display()))?);
    }
    ensure!(!rows.is_empty(), "{}: no data rows", path.display());
    Ok((header, rows))
}

pub fn read_pool(path: &Path) -> Result<Pool> {
    let (header, rows) = records(path)?;
    ensure!(
        header.get(0) == Some("id"),
        "{}: first column must be `id`",
        path.display()
    );
    let ids: Vec<String> = rows.iter().map(|r| r[0].to_string()).collect();
    if header.len() == 1 {
        return Ok(Pool::with_ids(ids)?);
    }
    let mut features = Vec::with_capacity(rows.len());
    for rec in &rows {
        let line = line_of(rec);
        let row = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| anyhow!("{}:{line}: bad feature value {v:?}", path.display()))
            })
            .collect::<Result<Vec<f64>>>()?;
        features.push(row);
    }
    Ok(Pool::with_features(ids, &features)?)
}

/// Label means in pool order. Ids must match the pool row by row.
pub fn read_labels(path: &Path, pool: &Pool) -> Result<Vec<f64>> {
    let (header, rows) = records(path)?;
    let kind = match (header.get(0), header.get(1), header.len()) {
        (Some("id"), Some(k @ ("y" | "eta")), 2) => k.to_string(),
        _ => bail!("{}: header must be `id,y` or `id,eta`", path.display()),
    };
    ensure!(
        rows.len() == pool.len(),
        "{}: {} label rows for a pool of {}",
        path.display(),
        rows.len(),
        pool.len()
    );
    let mut eta = Vec::with_capacity(rows.len());
    for (rec, id) in rows.iter().zip(pool.ids()) {
        let line = line_of(rec);
        ensure!(
            &rec[0] == id,
            "{}:{line}: id {:?} does not match pool id {id:?}",
            path.display(),
            &rec[0]
        );
        let v = &rec[1];
        let value = if kind == "y" {
            match v {
                "0" => 0.0,
                "1" => 1.0,
                _ => bail!("{}:{line}: label {v:?} is not 0 or 1", path.display()),
            }
        } else {
            match v.parse::<f64>() {
                Ok(x) if (0.0..=1.0).contains(&x) => x,
                _ => bail!("{}:{line}: eta {v:?} is not in [0, 1]", path.display()),
            }
        };
        eta.push(value);
    }
    Ok(eta)
}

pub fn read_hypotheses(path: &Path, pool: &Pool) -> Result<ExplicitClass> {
    let (header, rows) = records(path)?;
    let ids: Vec<&str> = header.iter().skip(1).collect();
    ensure!(
        header.get(0) == Some("hypothesis") && ids == pool.ids().iter().map(String::as_str).collect::<Vec<_>>(),
        "{}: header must be `hypothesis` followed by the pool ids",
        path.display()
    );
    let mut out = Vec::with_capacity(rows.len());
    for rec in &rows {
        let line = line_of(rec);
        let row = rec
            .iter()
            .skip(1)
            .map(|v| match v {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(anyhow!("{}:{line}: entry {v:?} is not 0 or 1", path.display())),
            })
            .collect::<Result<Vec<bool>>>()?;
        out.push(row);
    }
    Ok(ExplicitClass::new(out, true)?)
}

/// Builds an instance from CSV files. Without a hypothesis file the class is the
/// oracle-backed linear class over the pool features.
pub fn ingest_csv(pool: &Path, labels: &Path, hypotheses: Option<&Path>, persistent: bool) -> Result<Instance> {
    let pool = read_pool(pool)?;
    let eta = read_labels(labels, &pool)?;
    let class = match hypotheses {
        Some(h) => HypothesisClass::Explicit(read_hypotheses(h, &pool)?),
        None => HypothesisClass::Linear(
            LinearClass::new(pool.clone(), LogisticConfig::default())
                .context("a CSV pool without a hypothesis file needs feature columns")?,
        ),
    };
    Ok(Instance {
        labels: LabelModel::new(eta, persistent, 0)?,
        pool,
        class,
    })
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

pub fn write_pool(path: &Path, pool: &Pool) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["id".to_string()];
    header.extend((0..pool.dim()).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for (i, id) in pool.ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        if let Some(row) = pool.row(i) {
            rec.extend(row.iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `id,y` when every mean is 0 or 1, else `id,eta`.
pub fn write_labels(path: &Path, pool: &Pool, eta: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    let hard = eta.iter().all(|&e| e == 0.0 || e == 1.0);
    w.write_record(["id", if hard { "y" } else { "eta" }])?;
    for (id, e) in pool.ids().iter().zip(eta) {
        let v = if hard { format!("{}", *e as u8) } else { e.to_string() };
        w.write_record([id.as_str(), v.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_hypotheses(path: &Path, pool: &Pool, class: &ExplicitClass) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["hypothesis".to_string()];
    header.extend(pool.ids().iter().cloned());
    w.write_record(&header)?;
    for (h, row) in class.rows().iter().enumerate() {
        let mut rec = vec![format!("h{h}")];
        rec.extend(row.iter().map(|&b| if b { "1" } else { "0" }.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `pool.csv`, `labels.csv` and, for explicit classes, `hypotheses.csv`.
pub fn export_instance(dir: &Path, inst: &Instance) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_pool(&dir.join("pool.csv"), &inst.pool)?;
    write_labels(&dir.join("labels.csv"), &inst.pool, inst.eta())?;
    if let Some(c) = inst.class.explicit() {
        write_hypotheses(&dir.join("hypotheses.csv"), &inst.pool, c)?;
    }
    Ok(())
}
