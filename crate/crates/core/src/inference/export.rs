//! CSV export and import of draws and summaries.
//!
//! Draws are written long: `chain,iteration,parameter,value` with 1-based
//! chain ids and absolute (post-adaptation) iteration numbers. Summaries are
//! `parameter,mean,sd,q2.5,q97.5,rhat`; an R-hat that cannot be formed is
//! written as `indeterminate`. Floats use the shortest representation that
//! round-trips.

use std::collections::HashMap;
use std::path::Path;

use crate::design::io::{create, csv_error, csv_reader, open, parse_error, Header};
use crate::error::{Error, Result};

use super::{PosteriorDraws, PosteriorSummary, Rhat, SummaryRow};

pub fn write_draws_csv(draws: &PosteriorDraws, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["chain", "iteration", "parameter", "value"])
        .map_err(|e| csv_error(path, e))?;
    for c in 0..draws.chains {
        for t in 0..draws.draws_per_chain {
            let it = draws.iterations[t].to_string();
            let chain = (c + 1).to_string();
            for (p, name) in draws.names.iter().enumerate() {
                w.write_record([
                    chain.as_str(),
                    it.as_str(),
                    name,
                    &draws.value(c, t, p).to_string(),
                ])
                .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a long draws file. Parameters keep the order of first appearance;
/// every chain must hold the same iterations of every parameter.
pub fn read_draws_csv(path: &Path) -> Result<PosteriorDraws> {
    let mut r = csv_reader(open(path)?);
    let header = Header::new(r.headers().map_err(|e| csv_error(path, e))?);
    let cc = header.require("chain", path)?;
    let ic = header.require("iteration", path)?;
    let pc = header.require("parameter", path)?;
    let vc = header.require("value", path)?;
    let mut names: Vec<String> = Vec::new();
    let mut name_pos: HashMap<String, usize> = HashMap::new();
    let mut chains: Vec<u64> = Vec::new();
    let mut iterations: Vec<u64> = Vec::new();
    let mut cells: HashMap<(u64, u64, usize), f64> = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let num = |col: usize, what: &str| -> Result<u64> {
            rec[col]
                .parse()
                .map_err(|_| parse_error(path, &rec, format!("{what} '{}' is not an integer", &rec[col])))
        };
        let chain = num(cc, "chain")?;
        let it = num(ic, "iteration")?;
        let value: f64 = rec[vc]
            .parse()
            .map_err(|_| parse_error(path, &rec, format!("value '{}' is not a number", &rec[vc])))?;
        let name = rec[pc].to_string();
        let p = *name_pos.entry(name.clone()).or_insert_with(|| {
            names.push(name);
            names.len() - 1
        });
        if !chains.contains(&chain) {
            chains.push(chain);
        }
        if !iterations.contains(&it) {
            iterations.push(it);
        }
        if cells.insert((chain, it, p), value).is_some() {
            return Err(parse_error(path, &rec, "duplicate (chain, iteration, parameter)"));
        }
    }
    chains.sort_unstable();
    iterations.sort_unstable();
    if names.is_empty() {
        return Err(Error::invalid(format!("{}: no draws", path.display())));
    }
    let mut values = Vec::with_capacity(chains.len() * iterations.len() * names.len());
    for c in &chains {
        for it in &iterations {
            for p in 0..names.len() {
                let v = cells.get(&(*c, *it, p)).ok_or_else(|| {
                    Error::invalid(format!(
                        "{}: chain {c} lacks iteration {it} of {}",
                        path.display(),
                        names[p]
                    ))
                })?;
                values.push(*v);
            }
        }
    }
    PosteriorDraws::from_values(names, chains.len(), iterations, values)
}

fn rhat_text(r: Rhat) -> String {
    match r {
        Rhat::Value(v) => v.to_string(),
        Rhat::Indeterminate => "indeterminate".into(),
    }
}

pub fn write_summary_csv(summary: &PosteriorSummary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["parameter", "mean", "sd", "q2.5", "q97.5", "rhat"])
        .map_err(|e| csv_error(path, e))?;
    for r in &summary.rows {
        w.write_record([
            r.parameter.clone(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.q025.to_string(),
            r.q975.to_string(),
            rhat_text(r.rhat),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<PosteriorSummary> {
    let mut r = csv_reader(open(path)?);
    let header = Header::new(r.headers().map_err(|e| csv_error(path, e))?);
    let cols: Vec<usize> = ["parameter", "mean", "sd", "q2.5", "q97.5", "rhat"]
        .iter()
        .map(|n| header.require(n, path))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let num = |k: usize| -> Result<f64> {
            rec[cols[k]]
                .parse()
                .map_err(|_| parse_error(path, &rec, format!("'{}' is not a number", &rec[cols[k]])))
        };
        let rhat = match &rec[cols[5]] {
            "indeterminate" => Rhat::Indeterminate,
            _ => Rhat::Value(num(5)?),
        };
        rows.push(SummaryRow {
            parameter: rec[cols[0]].to_string(),
            mean: num(1)?,
            sd: num(2)?,
            q025: num(3)?,
            q975: num(4)?,
            rhat,
        });
    }
    Ok(PosteriorSummary { rows })
}
