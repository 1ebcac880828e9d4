//! Counts, label, value and edge-list file formats.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use spatmix::{AdjacencyGraph, CountMatrix};

use crate::error::{CliError, CliResult};

/// A counts table: region ids, category names and the count matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub regions: Vec<String>,
    pub categories: Vec<String>,
    pub counts: CountMatrix,
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| CliError::parse(path, e))
}

fn check_unique(path: &Path, regions: &[String]) -> CliResult<()> {
    let mut seen = HashMap::new();
    for (row, r) in regions.iter().enumerate() {
        if let Some(prev) = seen.insert(r.as_str(), row) {
            return Err(CliError::parse(path, format!("region {r:?} appears in rows {} and {}", prev + 1, row + 1)));
        }
    }
    Ok(())
}

fn parse_count(path: &Path, field: &str, row: usize) -> CliResult<u64> {
    field.parse::<u64>().map_err(|_| CliError::parse(path, format!("row {row}: {field:?} is not a non-negative integer")))
}

fn build(path: &Path, regions: Vec<String>, categories: Vec<String>, rows: Vec<Vec<u64>>) -> CliResult<Dataset> {
    if regions.is_empty() {
        return Err(CliError::parse(path, "no data rows"));
    }
    check_unique(path, &regions)?;
    let counts = CountMatrix::new(rows).map_err(|e| CliError::parse(path, e))?;
    Ok(Dataset { regions, categories, counts })
}

/// Wide form: `region,<category>,...`, one row per region.
pub fn read_counts_wide(path: &Path) -> CliResult<Dataset> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::parse(path, e))?.clone();
    if header.get(0) != Some("region") {
        return Err(CliError::parse(path, "first column must be named `region`"));
    }
    let categories: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if categories.len() < 2 {
        return Err(CliError::parse(path, "at least two category columns are required"));
    }
    let mut regions = Vec::new();
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::parse(path, e))?;
        let line = idx + 2;
        regions.push(rec[0].to_string());
        rows.push(rec.iter().skip(1).map(|f| parse_count(path, f, line)).collect::<CliResult<Vec<_>>>()?);
    }
    build(path, regions, categories, rows)
}

/// Long form: `region,group,count`. Regions and groups keep their order of
/// first appearance; absent pairs count as zero.
pub fn read_counts_long(path: &Path) -> CliResult<Dataset> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::parse(path, e))?.clone();
    if header.len() != 3 || header.get(0) != Some("region") {
        return Err(CliError::parse(path, "long form expects the columns region,group,count"));
    }
    let mut regions: Vec<String> = Vec::new();
    let mut groups: Vec<String> = Vec::new();
    let mut region_idx = HashMap::new();
    let mut group_idx = HashMap::new();
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::parse(path, e))?;
        let line = idx + 2;
        let r = *region_idx.entry(rec[0].to_string()).or_insert_with(|| {
            regions.push(rec[0].to_string());
            regions.len() - 1
        });
        let g = *group_idx.entry(rec[1].to_string()).or_insert_with(|| {
            groups.push(rec[1].to_string());
            groups.len() - 1
        });
        let c = parse_count(path, &rec[2], line)?;
        if cells.insert((r, g), c).is_some() {
            return Err(CliError::parse(path, format!("row {line}: duplicate entry for ({}, {})", &rec[0], &rec[1])));
        }
    }
    if groups.len() < 2 {
        return Err(CliError::parse(path, "at least two groups are required"));
    }
    let rows = (0..regions.len())
        .map(|r| (0..groups.len()).map(|g| cells.get(&(r, g)).copied().unwrap_or(0)).collect())
        .collect();
    build(path, regions, groups, rows)
}

pub fn read_counts(path: &Path, long: bool) -> CliResult<Dataset> {
    if long {
        read_counts_long(path)
    } else {
        read_counts_wide(path)
    }
}

pub fn counts_to_csv(regions: &[String], categories: &[String], counts: &CountMatrix) -> String {
    let mut out = String::from("region");
    for c in categories {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (r, row) in regions.iter().zip(counts.rows()) {
        out.push_str(r);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Reads an edge list over `n` nodes. A `# <n> nodes` header, when present,
/// must agree with `n`.
pub fn read_graph(path: &Path, n: usize) -> CliResult<AdjacencyGraph> {
    let text = read_text(path)?;
    if let Some(first) = text.lines().next() {
        let declared = first
            .strip_prefix('#')
            .and_then(|rest| rest.trim().strip_suffix("nodes"))
            .and_then(|num| num.trim().parse::<usize>().ok());
        if let Some(d) = declared {
            if d != n {
                return Err(CliError::Dimension(format!(
                    "{}: graph declares {d} nodes but the data has {n} regions",
                    path.display()
                )));
            }
        }
    }
    AdjacencyGraph::parse_edge_list(n, &text).map_err(|e| match e {
        spatmix::Error::NodeOutOfRange { .. } => CliError::Dimension(format!("{}: {e}", path.display())),
        other => CliError::parse(path, other),
    })
}

/// Reads a two-column `region,<name>` file. Returns region ids and the raw
/// second-column strings.
pub fn read_column(path: &Path, column: Option<&str>) -> CliResult<(Vec<String>, Vec<String>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::parse(path, e))?.clone();
    if header.get(0) != Some("region") {
        return Err(CliError::parse(path, "first column must be named `region`"));
    }
    let col = match column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::parse(path, format!("no column named {name:?}")))?,
        None if header.len() == 2 => 1,
        None => return Err(CliError::Usage(format!("{}: several columns; pick one with --column", path.display()))),
    };
    let mut regions = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::parse(path, e))?;
        regions.push(rec[0].to_string());
        values.push(rec.get(col).unwrap_or_default().to_string());
    }
    check_unique(path, &regions)?;
    Ok((regions, values))
}

pub fn labels_to_csv(regions: &[String], labels: &[usize]) -> String {
    let mut out = String::from("region,label\n");
    for (r, l) in regions.iter().zip(labels) {
        out.push_str(&format!("{r},{l}\n"));
    }
    out
}
