use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{DyadDesign, Individual};

/// Column position lookup for a CSV header; names are matched exactly after
/// trimming.
pub(crate) struct Header {
    columns: HashMap<String, usize>,
    names: Vec<String>,
}

impl Header {
    pub(crate) fn new(record: &csv::StringRecord) -> Self {
        let names: Vec<String> = record.iter().map(|s| s.trim().to_string()).collect();
        let columns = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Header { columns, names }
    }

    pub(crate) fn get(&self, name: &str) -> Option<usize> {
        self.columns.get(name).copied()
    }

    pub(crate) fn require(&self, name: &str, path: &Path) -> Result<usize> {
        self.get(name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing column '{name}'"),
        })
    }

    pub(crate) fn names(&self) -> &[String] {
        &self.names
    }
}

pub(crate) fn parse_error(path: &Path, record: &csv::StringRecord, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: record.position().map_or(0, |p| p.line()),
        message: message.into(),
    }
}

pub(crate) fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader)
}

pub(crate) fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

fn optional_label(
    path: &Path,
    record: &csv::StringRecord,
    column: Option<usize>,
    name: &str,
) -> Result<Option<u32>> {
    match column.and_then(|c| record.get(c)) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| parse_error(path, record, format!("{name} '{s}' is not a non-negative integer"))),
    }
}

fn merge_label(
    path: &Path,
    record: &csv::StringRecord,
    slot: &mut Option<u32>,
    value: Option<u32>,
    what: &str,
    id: &str,
) -> Result<()> {
    match (*slot, value) {
        (Some(old), Some(new)) if old != new => Err(parse_error(
            path,
            record,
            format!("individual {id} has conflicting {what} labels {old} and {new}"),
        )),
        (None, Some(new)) => {
            *slot = Some(new);
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Reads an edge list with columns `actor_id, partner_id` and optional
/// `group_id`, `cluster_id`. Group and cluster labels apply to both members
/// of the dyad.
pub fn read_design_csv(path: impl AsRef<Path>) -> Result<DyadDesign> {
    let path = path.as_ref();
    read_design(open(path)?, path)
}

pub(crate) fn read_design<R: Read>(reader: R, path: &Path) -> Result<DyadDesign> {
    let mut rdr = csv_reader(reader);
    let header = Header::new(rdr.headers().map_err(|e| csv_error(path, e))?);
    let ca = header.require("actor_id", path)?;
    let cp = header.require("partner_id", path)?;
    let cg = header.get("group_id");
    let cc = header.get("cluster_id");

    let mut individuals: Vec<Individual> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut seen = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let actor = record.get(ca).unwrap_or("");
        let partner = record.get(cp).unwrap_or("");
        if actor.is_empty() || partner.is_empty() {
            return Err(parse_error(path, &record, "empty actor_id or partner_id"));
        }
        if actor == partner {
            return Err(parse_error(path, &record, format!("self-pairing of {actor}")));
        }
        let group = optional_label(path, &record, cg, "group_id")?;
        let cluster = optional_label(path, &record, cc, "cluster_id")?;
        let mut ids = [0usize; 2];
        for (k, id) in [actor, partner].into_iter().enumerate() {
            let i = *index.entry(id.to_string()).or_insert_with(|| {
                individuals.push(Individual::new(id));
                individuals.len() - 1
            });
            merge_label(path, &record, &mut individuals[i].group, group, "group", id)?;
            merge_label(path, &record, &mut individuals[i].cluster, cluster, "cluster", id)?;
            ids[k] = i;
        }
        if seen.insert((ids[0], ids[1]), ()).is_some() {
            return Err(parse_error(
                path,
                &record,
                format!("duplicate directed dyad ({actor}, {partner})"),
            ));
        }
        edges.push((ids[0], ids[1]));
    }
    DyadDesign::new(individuals, &edges)
}

/// Writes the design as an edge list in dyad order. `group_id` and
/// `cluster_id` columns are included when any individual carries them.
pub fn write_design_csv(design: &DyadDesign, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_design(design, create(path)?)
}

pub(crate) fn write_design<W: Write>(design: &DyadDesign, writer: W) -> Result<()> {
    let ind = design.individuals();
    let groups = ind.iter().any(|i| i.group.is_some());
    let clusters = ind.iter().any(|i| i.cluster.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut head = vec!["actor_id", "partner_id"];
    if groups {
        head.push("group_id");
    }
    if clusters {
        head.push("cluster_id");
    }
    w.write_record(&head)?;
    let label = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
    for d in design.dyads() {
        let a = &ind[d.actor];
        let mut row = vec![a.id.clone(), ind[d.partner].id.clone()];
        if groups {
            row.push(label(a.group));
        }
        if clusters {
            row.push(label(a.cluster));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<design>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{make_k_group, DesignKind, GroupSize};

    fn parse(text: &str) -> Result<DyadDesign> {
        read_design(text.as_bytes(), Path::new("design.csv"))
    }

    #[test]
    fn round_trip() {
        let d = make_k_group(DesignKind::Block, &[GroupSize::Block(2, 3); 2])
            .unwrap()
            .with_group_clusters();
        let mut buf = Vec::new();
        write_design(&d, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.num_dyads(), d.num_dyads());
        let mut again = Vec::new();
        write_design(&back, &mut again).unwrap();
        assert_eq!(buf, again);
        assert_eq!(back.individuals()[0].cluster, Some(1));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("actor_id,partner_id\na,b\nb,b\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let err = parse("actor_id,partner_id,group_id\na,b,1\nb,c,x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(matches!(parse("actor,partner\na,b\n"), Err(Error::Parse { line: 1, .. })));
        let err = parse("actor_id,partner_id\na,b\nc,d\na,b\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
    }
}
