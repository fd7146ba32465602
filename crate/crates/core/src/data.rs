//! Observed data in long format and its CSV ingestion.
//!
//! Files (all with a header row):
//!
//! * responses: `actor_id, partner_id, item_id, response`
//! * distal outcomes: `actor_id, partner_id, outcome` with outcome 0 or 1
//! * individuals: `id`, optional `gender` (m/f), optional `cluster`, then any
//!   number of numeric covariate columns
//! * dyad covariates: `actor_id, partner_id`, then numeric covariate columns
//! * items: `item_id, categories`
//! * category map: `from, to`; when given, every raw response must be listed
//!
//! A missing response is simply an absent row. Invalid rows (unparseable or
//! out-of-range responses) are an error unless `drop_invalid` is set; with
//! `drop_counterpart` the rating of the same item in the opposite direction is
//! dropped as well.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::io::{create, csv_error, csv_reader, open, parse_error, Header};
use crate::design::{read_design_csv, write_design_csv, DyadDesign, Gender, Individual};
use crate::error::{Error, Result};
use crate::model::{CovariateSpec, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub dyad: usize,
    pub item: usize,
    pub value: u8,
}

/// Item responses indexed against a design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub item_ids: Vec<String>,
    /// Number of response categories per item.
    pub categories: Vec<usize>,
    pub records: Vec<Response>,
}

impl ResponseSet {
    pub fn new(item_ids: Vec<String>, categories: Vec<usize>, records: Vec<Response>) -> Result<Self> {
        let set = ResponseSet {
            item_ids,
            categories,
            records,
        };
        set.validate(None)?;
        Ok(set)
    }

    pub fn empty(item_ids: Vec<String>, categories: Vec<usize>) -> Self {
        ResponseSet {
            item_ids,
            categories,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    /// Checks item indices, categories and, when a design is given, dyad
    /// indices.
    pub fn validate(&self, design: Option<&DyadDesign>) -> Result<()> {
        if self.item_ids.len() != self.categories.len() {
            return Err(Error::invalid("item ids and category counts differ in length"));
        }
        if let Some(&m) = self.categories.iter().find(|&&m| m < 2) {
            return Err(Error::invalid(format!("items need at least 2 categories, got {m}")));
        }
        for (k, r) in self.records.iter().enumerate() {
            if r.item >= self.item_ids.len() {
                return Err(Error::invalid(format!("response {k} refers to unknown item {}", r.item)));
            }
            if usize::from(r.value) >= self.categories[r.item] {
                return Err(Error::invalid(format!(
                    "response {k}: category {} outside 0..{} of item {}",
                    r.value,
                    self.categories[r.item] - 1,
                    self.item_ids[r.item]
                )));
            }
            if let Some(d) = design {
                if r.dyad >= d.num_dyads() {
                    return Err(Error::invalid(format!(
                        "response {k} refers to unknown dyad {}",
                        r.dyad
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistalRecord {
    pub dyad: usize,
    pub outcome: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DistalSet {
    pub records: Vec<DistalRecord>,
}

impl DistalSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn base_rate(&self) -> f64 {
        let ones = self.records.iter().filter(|r| r.outcome).count();
        ones as f64 / self.records.len() as f64
    }
}

/// Named numeric columns with one row per individual or per directed dyad.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl CovariateTable {
    pub fn empty(rows: usize) -> Self {
        CovariateTable {
            names: Vec::new(),
            values: DMatrix::zeros(rows, 0),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn select(&self, names: &[String], what: &str) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.values.nrows(), names.len());
        for (j, name) in names.iter().enumerate() {
            let c = self.column(name).ok_or_else(|| {
                Error::Specification(format!("unknown {what} covariate column '{name}'"))
            })?;
            out.set_column(j, &self.values.column(c));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub design: DyadDesign,
    pub responses: ResponseSet,
    pub distal: Option<DistalSet>,
    pub individual_covariates: CovariateTable,
    pub dyad_covariates: CovariateTable,
}

impl Dataset {
    pub fn new(design: DyadDesign, responses: ResponseSet, distal: Option<DistalSet>) -> Result<Self> {
        responses.validate(Some(&design))?;
        if let Some(d) = &distal {
            if let Some(r) = d.records.iter().find(|r| r.dyad >= design.num_dyads()) {
                return Err(Error::invalid(format!("distal record for unknown dyad {}", r.dyad)));
            }
        }
        let n = design.num_individuals();
        let dyads = design.num_dyads();
        Ok(Dataset {
            design,
            responses,
            distal,
            individual_covariates: CovariateTable::empty(n),
            dyad_covariates: CovariateTable::empty(dyads),
        })
    }

    /// Covariate matrices named by the specification, with zero coefficients.
    pub fn covariate_spec(&self, spec: &ModelSpec) -> Result<CovariateSpec> {
        let x_alpha = self.individual_covariates.select(&spec.alpha_covariates, "alpha")?;
        let x_beta = self.individual_covariates.select(&spec.beta_covariates, "beta")?;
        let x_gamma = self.dyad_covariates.select(&spec.gamma_covariates, "gamma")?;
        let cs = CovariateSpec {
            c_alpha: DVector::zeros(x_alpha.ncols()),
            c_beta: DVector::zeros(x_beta.ncols()),
            c_gamma: DVector::zeros(x_gamma.ncols()),
            x_alpha,
            x_beta,
            x_gamma,
            names_alpha: spec.alpha_covariates.clone(),
            names_beta: spec.beta_covariates.clone(),
            names_gamma: spec.gamma_covariates.clone(),
        };
        cs.validate(self.design.num_individuals(), self.design.num_dyads())?;
        Ok(cs)
    }
}

/// Where to find the input files, plus the invalid-row policy.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSources {
    pub responses: PathBuf,
    pub distal: Option<PathBuf>,
    pub design: Option<PathBuf>,
    pub individuals: Option<PathBuf>,
    pub dyad_covariates: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub category_map: Option<PathBuf>,
    pub drop_invalid: bool,
    pub drop_counterpart: bool,
}

impl DataSources {
    pub fn paths(&self) -> Vec<&Path> {
        let mut out = vec![self.responses.as_path()];
        for p in [
            &self.distal,
            &self.design,
            &self.individuals,
            &self.dyad_covariates,
            &self.items,
            &self.category_map,
        ]
        .into_iter()
        .flatten()
        {
            out.push(p.as_path());
        }
        out
    }
}

/// What ingestion changed on the way in.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestLog {
    pub rows_read: usize,
    pub invalid_dropped: usize,
    pub counterparts_dropped: usize,
    pub remapped: usize,
    pub category_map: Vec<(i64, i64)>,
}

struct RawResponse {
    actor: String,
    partner: String,
    item: String,
    value: Option<u8>,
    line: u64,
    problem: Option<String>,
}

fn read_category_map(path: &Path) -> Result<Vec<(i64, i64)>> {
    let mut rdr = csv_reader(open(path)?);
    let header = Header::new(rdr.headers().map_err(|e| csv_error(path, e))?);
    let cf = header.require("from", path)?;
    let ct = header.require("to", path)?;
    let mut out: Vec<(i64, i64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let parse = |c: usize| -> Result<i64> {
            let s = rec.get(c).unwrap_or("");
            s.parse().map_err(|_| parse_error(path, &rec, format!("'{s}' is not an integer")))
        };
        let (from, to) = (parse(cf)?, parse(ct)?);
        if out.iter().any(|(f, _)| *f == from) {
            return Err(parse_error(path, &rec, format!("category {from} mapped twice")));
        }
        out.push((from, to));
    }
    Ok(out)
}

fn read_items(path: &Path) -> Result<Vec<(String, usize)>> {
    let mut rdr = csv_reader(open(path)?);
    let header = Header::new(rdr.headers().map_err(|e| csv_error(path, e))?);
    let ci = header.require("item_id", path)?;
    let cc = header.require("categories", path)?;
    let mut out: Vec<(String, usize)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let id = rec.get(ci).unwrap_or("").to_string();
        let s = rec.get(cc).unwrap_or("");
        let m: usize = s
            .parse()
            .map_err(|_| parse_error(path, &rec, format!("categories '{s}' is not an integer")))?;
        if !(2..=256).contains(&m) {
            return Err(parse_error(path, &rec, format!("item {id} needs 2..256 categories, got {m}")));
        }
        if out.iter().any(|(i, _)| *i == id) {
            return Err(parse_error(path, &rec, format!("duplicate item {id}")));
        }
        out.push((id, m));
    }
    Ok(out)
}

fn read_raw_responses(path: &Path, map: &[(i64, i64)], log: &mut IngestLog) -> Result<Vec<RawResponse>> {
    let mut rdr = csv_reader(open(path)?);
    let header = Header::new(rdr.headers().map_err(|e| csv_error(path, e))?);
    let cols = [
        header.require("actor_id", path)?,
        header.require("partner_id", path)?,
        header.require("item_id", path)?,
        header.require("response", path)?,
    ];
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = |c: usize| rec.get(cols[c]).unwrap_or("").to_string();
        let (actor, partner, item, raw) = (field(0), field(1), field(2), field(3));
        if actor.is_empty() || partner.is_empty() || item.is_empty() {
            return Err(parse_error(path, &rec, "empty actor_id, partner_id or item_id"));
        }
        let line = rec.position().map_or(0, |p| p.line());
        let mut problem = None;
        let mut value = None;
        match raw.parse::<i64>() {
            Err(_) => problem = Some(format!("response '{raw}' is not an integer")),
            Ok(v) => {
                let v = if map.is_empty() {
                    Some(v)
                } else {
                    let mapped = map.iter().find(|(f, _)| *f == v).map(|(_, t)| *t);
                    if mapped.is_some_and(|t| t != v) {
                        log.remapped += 1;
                    }
                    mapped
                };
                match v {
                    None => problem = Some(format!("response {raw} is not in the category map")),
                    Some(v) if !(0..=255).contains(&v) => {
                        problem = Some(format!("response {v} is not a category code in 0..255"))
                    }
                    Some(v) => value = Some(v as u8),
                }
            }
        }
        out.push(RawResponse {
            actor,
            partner,
            item,
            value,
            line,
            problem,
        });
    }
    log.rows_read = out.len();
    Ok(out)
}

fn row_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct IndividualsFile {
    ids: Vec<String>,
    gender: Vec<Option<Gender>>,
    cluster: Vec<Option<u32>>,
    table: CovariateTable,
}

fn read_individuals(path: &Path) -> Result<IndividualsFile> {
    let mut rdr = csv_reader(open(path)?);
    let header = Header::new(rdr.headers().map_err(|e| csv_error(path, e))?);
    let cid = header.require("id", path)?;
    let cg = header.get("gender");
    let cc = header.get("cluster");
    let cov_cols: Vec<usize> = (0..header.names().len())
        .filter(|c| Some(*c) != cg && Some(*c) != cc && *c != cid)
        .collect();
    let names: Vec<String> = cov_cols.iter().map(|&c| header.names()[c].clone()).collect();
    let mut ids = Vec::new();
    let mut gender = Vec::new();
    let mut cluster = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let id = rec.get(cid).unwrap_or("").to_string();
        if id.is_empty() || !seen.insert(id.clone()) {
            return Err(parse_error(path, &rec, format!("empty or duplicate id '{id}'")));
        }
        let g = match cg.and_then(|c| rec.get(c)) {
            None | Some("") => None,
            Some(s) => Some(
                Gender::parse(s)
                    .ok_or_else(|| parse_error(path, &rec, format!("gender '{s}' is not m/f")))?,
            ),
        };
        let cl = match cc.and_then(|c| rec.get(c)) {
            None | Some("") => None,
            Some(s) => Some(s.parse().map_err(|_| {
                parse_error(path, &rec, format!("cluster '{s}' is not a non-negative integer"))
            })?),
        };
        for &c in &cov_cols {
            let s = rec.get(c).unwrap_or("");
            let v: f64 = s.parse().map_err(|_| {
                parse_error(path, &rec, format!("covariate {} = '{s}' is not a number", header.names()[c]))
            })?;
            if !v.is_finite() {
                return Err(parse_error(path, &rec, format!("non-finite covariate {}", header.names()[c])));
            }
            values.push(v);
        }
        ids.push(id);
        gender.push(g);
        cluster.push(cl);
    }
    let table = CovariateTable {
        values: DMatrix::from_row_slice(ids.len(), names.len(), &values),
        names,
    };
    Ok(IndividualsFile {
        ids,
        gender,
        cluster,
        table,
    })
}

fn read_dyad_covariates(path: &Path, design: &DyadDesign) -> Result<CovariateTable> {
    let mut rdr = csv_reader(open(path)?);
    let header = Header::new(rdr.headers().map_err(|e| csv_error(path, e))?);
    let ca = header.require("actor_id", path)?;
    let cp = header.require("partner_id", path)?;
    let cov_cols: Vec<usize> = (0..header.names().len()).filter(|c| *c != ca && *c != cp).collect();
    let names: Vec<String> = cov_cols.iter().map(|&c| header.names()[c].clone()).collect();
    let mut values = DMatrix::zeros(design.num_dyads(), names.len());
    let mut filled = vec![false; design.num_dyads()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let d = lookup_dyad(design, rec.get(ca).unwrap_or(""), rec.get(cp).unwrap_or(""))
            .ok_or_else(|| parse_error(path, &rec, "dyad is not part of the design"))?;
        if std::mem::replace(&mut filled[d], true) {
            return Err(parse_error(path, &rec, "duplicate dyad row"));
        }
        for (j, &c) in cov_cols.iter().enumerate() {
            let s = rec.get(c).unwrap_or("");
            let v: f64 = s
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_error(path, &rec, format!("covariate {} = '{s}' is not a finite number", names[j])))?;
            values[(d, j)] = v;
        }
    }
    if let Some(d) = filled.iter().position(|f| !f) {
        let dy = design.dyads()[d];
        let ind = design.individuals();
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!(
                "no covariate row for dyad ({}, {})",
                ind[dy.actor].id, ind[dy.partner].id
            ),
        });
    }
    Ok(CovariateTable { names, values })
}

fn lookup_dyad(design: &DyadDesign, actor: &str, partner: &str) -> Option<usize> {
    let a = design.individual_index(actor)?;
    let p = design.individual_index(partner)?;
    design.dyad_index(a, p)
}

fn read_distal(path: &Path, design: &DyadDesign) -> Result<DistalSet> {
    let mut rdr = csv_reader(open(path)?);
    let header = Header::new(rdr.headers().map_err(|e| csv_error(path, e))?);
    let ca = header.require("actor_id", path)?;
    let cp = header.require("partner_id", path)?;
    let co = header.require("outcome", path)?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let dyad = lookup_dyad(design, rec.get(ca).unwrap_or(""), rec.get(cp).unwrap_or(""))
            .ok_or_else(|| parse_error(path, &rec, "dyad is not part of the design"))?;
        let outcome = match rec.get(co).unwrap_or("") {
            "0" => false,
            "1" => true,
            s => return Err(parse_error(path, &rec, format!("outcome '{s}' is not 0 or 1"))),
        };
        if !seen.insert(dyad) {
            return Err(parse_error(path, &rec, "duplicate distal outcome for dyad"));
        }
        records.push(DistalRecord { dyad, outcome });
    }
    Ok(DistalSet { records })
}

/// Reads every file named in `sources` into a validated dataset.
pub fn ingest(sources: &DataSources) -> Result<(Dataset, IngestLog)> {
    let mut log = IngestLog::default();
    let map = match &sources.category_map {
        Some(p) => read_category_map(p)?,
        None => Vec::new(),
    };
    log.category_map = map.clone();
    let rpath = sources.responses.as_path();
    let mut raw = read_raw_responses(rpath, &map, &mut log)?;

    let fixed_items = match &sources.items {
        Some(p) => Some(read_items(p)?),
        None => None,
    };
    if let Some(items) = &fixed_items {
        for r in &mut raw {
            match items.iter().find(|(id, _)| *id == r.item) {
                None => return Err(row_error(rpath, r.line, format!("unknown item {}", r.item))),
                Some((_, m)) => {
                    if r.problem.is_none() && usize::from(r.value.unwrap()) >= *m {
                        r.problem = Some(format!(
                            "response {} outside 0..{} of item {}",
                            r.value.unwrap(),
                            m - 1,
                            r.item
                        ));
                        r.value = None;
                    }
                }
            }
        }
    }

    // invalid rows
    let drop = sources.drop_invalid || sources.drop_counterpart;
    let mut invalid: HashSet<(String, String, String)> = HashSet::new();
    for r in &raw {
        if let Some(problem) = &r.problem {
            if !drop {
                return Err(row_error(rpath, r.line, problem.clone()));
            }
            log::warn!("{}:{}: dropped: {problem}", rpath.display(), r.line);
            invalid.insert((r.actor.clone(), r.partner.clone(), r.item.clone()));
        }
    }
    log.invalid_dropped = invalid.len();
    let before = raw.len();
    raw.retain(|r| r.problem.is_none());
    if sources.drop_counterpart {
        raw.retain(|r| !invalid.contains(&(r.partner.clone(), r.actor.clone(), r.item.clone())));
        log.counterparts_dropped = before - invalid.len() - raw.len();
    }

    let individuals_file = match &sources.individuals {
        Some(p) => Some(read_individuals(p)?),
        None => None,
    };

    let mut design = match &sources.design {
        Some(p) => read_design_csv(p)?,
        None => {
            let mut individuals = Vec::new();
            let mut index: HashMap<String, usize> = HashMap::new();
            let mut add = |id: &str, individuals: &mut Vec<Individual>| {
                *index.entry(id.to_string()).or_insert_with(|| {
                    individuals.push(Individual::new(id));
                    individuals.len() - 1
                })
            };
            if let Some(f) = &individuals_file {
                for id in &f.ids {
                    add(id, &mut individuals);
                }
            }
            let mut edges = Vec::new();
            let mut seen = HashSet::new();
            for r in &raw {
                let a = add(&r.actor, &mut individuals);
                let p = add(&r.partner, &mut individuals);
                if a == p {
                    return Err(row_error(rpath, r.line, format!("self-rating by {}", r.actor)));
                }
                if seen.insert((a, p)) {
                    edges.push((a, p));
                }
            }
            DyadDesign::new(individuals, &edges)?
        }
    };

    let ind_table = match (&individuals_file, &sources.individuals) {
        (Some(f), Some(path)) => {
            let n = design.num_individuals();
            let mut values = DMatrix::zeros(n, f.table.names.len());
            let mut filled = vec![false; n];
            for (row, id) in f.ids.iter().enumerate() {
                let i = design.individual_index(id).ok_or_else(|| Error::Parse {
                    path: path.clone(),
                    line: row as u64 + 2,
                    message: format!("individual {id} is not part of the design"),
                })?;
                filled[i] = true;
                values.set_row(i, &f.table.values.row(row));
                let ind = &mut design.individuals_mut()[i];
                ind.gender = f.gender[row];
                if f.cluster[row].is_some() {
                    ind.cluster = f.cluster[row];
                }
            }
            if !f.table.names.is_empty() {
                if let Some(i) = filled.iter().position(|x| !x) {
                    return Err(Error::Parse {
                        path: path.clone(),
                        line: 0,
                        message: format!("no row for individual {}", design.individuals()[i].id),
                    });
                }
            }
            CovariateTable {
                names: f.table.names.clone(),
                values,
            }
        }
        _ => CovariateTable::empty(design.num_individuals()),
    };

    // items and records
    let mut item_ids: Vec<String> = Vec::new();
    let mut categories: Vec<usize> = Vec::new();
    if let Some(items) = &fixed_items {
        for (id, m) in items {
            item_ids.push(id.clone());
            categories.push(*m);
        }
    }
    let mut item_index: HashMap<String, usize> =
        item_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    let mut records = Vec::with_capacity(raw.len());
    let mut seen = HashSet::new();
    for r in &raw {
        let dyad = lookup_dyad(&design, &r.actor, &r.partner).ok_or_else(|| {
            row_error(rpath, r.line, format!("dyad ({}, {}) is not part of the design", r.actor, r.partner))
        })?;
        let item = *item_index.entry(r.item.clone()).or_insert_with(|| {
            item_ids.push(r.item.clone());
            categories.push(2);
            item_ids.len() - 1
        });
        if !seen.insert((dyad, item)) {
            return Err(row_error(rpath, r.line, "duplicate response for dyad and item"));
        }
        let value = r.value.unwrap();
        if fixed_items.is_none() {
            categories[item] = categories[item].max(usize::from(value) + 1);
        }
        records.push(Response { dyad, item, value });
    }
    let responses = ResponseSet::new(item_ids, categories, records)?;

    let dyad_covariates = match &sources.dyad_covariates {
        Some(p) => read_dyad_covariates(p, &design)?,
        None => CovariateTable::empty(design.num_dyads()),
    };
    let distal = match &sources.distal {
        Some(p) => Some(read_distal(p, &design)?),
        None => None,
    };
    let mut data = Dataset::new(design, responses, distal)?;
    data.individual_covariates = ind_table;
    data.dyad_covariates = dyad_covariates;
    Ok((data, log))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_responses(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["actor_id", "partner_id", "item_id", "response"])?;
    let ind = data.design.individuals();
    for r in &data.responses.records {
        let d = data.design.dyads()[r.dyad];
        w.write_record([
            ind[d.actor].id.as_str(),
            ind[d.partner].id.as_str(),
            data.responses.item_ids[r.item].as_str(),
            &r.value.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_distal(data: &Dataset, path: &Path) -> Result<()> {
    let distal = data
        .distal
        .as_ref()
        .ok_or_else(|| Error::InvalidState("dataset has no distal outcomes".into()))?;
    let mut w = writer(path)?;
    w.write_record(["actor_id", "partner_id", "outcome"])?;
    let ind = data.design.individuals();
    for r in &distal.records {
        let d = data.design.dyads()[r.dyad];
        w.write_record([
            ind[d.actor].id.as_str(),
            ind[d.partner].id.as_str(),
            if r.outcome { "1" } else { "0" },
        ])?;
    }
    finish(w, path)
}

pub fn write_items(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["item_id", "categories"])?;
    for (id, m) in data.responses.item_ids.iter().zip(&data.responses.categories) {
        w.write_record([id.as_str(), &m.to_string()])?;
    }
    finish(w, path)
}

/// Whether the individuals file carries any information.
fn has_individual_info(data: &Dataset) -> bool {
    let ind = data.design.individuals();
    !data.individual_covariates.names.is_empty()
        || ind.iter().any(|i| i.gender.is_some() || i.cluster.is_some())
}

pub fn write_individuals(data: &Dataset, path: &Path) -> Result<()> {
    let ind = data.design.individuals();
    let genders = ind.iter().any(|i| i.gender.is_some());
    let clusters = ind.iter().any(|i| i.cluster.is_some());
    let mut w = writer(path)?;
    let mut head = vec!["id".to_string()];
    if genders {
        head.push("gender".into());
    }
    if clusters {
        head.push("cluster".into());
    }
    head.extend(data.individual_covariates.names.iter().cloned());
    w.write_record(&head)?;
    for (i, x) in ind.iter().enumerate() {
        let mut row = vec![x.id.clone()];
        if genders {
            row.push(match x.gender {
                Some(Gender::Male) => "m".into(),
                Some(Gender::Female) => "f".into(),
                None => String::new(),
            });
        }
        if clusters {
            row.push(x.cluster.map(|c| c.to_string()).unwrap_or_default());
        }
        row.extend(data.individual_covariates.values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn write_dyad_covariates(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let mut head = vec!["actor_id".to_string(), "partner_id".to_string()];
    head.extend(data.dyad_covariates.names.iter().cloned());
    w.write_record(&head)?;
    let ind = data.design.individuals();
    for (k, d) in data.design.dyads().iter().enumerate() {
        let mut row = vec![ind[d.actor].id.clone(), ind[d.partner].id.clone()];
        row.extend(data.dyad_covariates.values.row(k).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// Writes the dataset in canonical form into `dir` and returns the sources
/// that read it back.
///
/// Canonical column orders are those listed in the module documentation;
/// the individuals file puts `gender` and `cluster` before covariates.
pub fn export_dataset(data: &Dataset, dir: &Path) -> Result<DataSources> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut src = DataSources {
        responses: dir.join("responses.csv"),
        design: Some(dir.join("design.csv")),
        items: Some(dir.join("items.csv")),
        ..DataSources::default()
    };
    write_responses(data, &src.responses)?;
    write_design_csv(&data.design, dir.join("design.csv"))?;
    write_items(data, &dir.join("items.csv"))?;
    if data.distal.is_some() {
        let p = dir.join("distal.csv");
        write_distal(data, &p)?;
        src.distal = Some(p);
    }
    if has_individual_info(data) {
        let p = dir.join("individuals.csv");
        write_individuals(data, &p)?;
        src.individuals = Some(p);
    }
    if !data.dyad_covariates.names.is_empty() {
        let p = dir.join("dyad_covariates.csv");
        write_dyad_covariates(data, &p)?;
        src.dyad_covariates = Some(p);
    }
    Ok(src)
}
