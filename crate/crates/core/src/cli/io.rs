//! Columnar text input and CSV/JSON output with embedded metadata.
//!
//! Input is comma-separated with a header row; lines starting with `#` are
//! ignored. Output tables carry a metadata object: CSV files start with a
//! `# meta: {json}` line, JSON files are `{"meta": {...}, "rows": [...]}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::estimators::MultiSample;
use crate::kernel::SampleSet;

const META_PREFIX: &str = "# meta: ";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

// =============================================================================
// Input
// =============================================================================

/// A parsed input table: header names and numeric rows with their line
/// numbers.
struct Table {
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path, min_columns: usize) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.len() < min_columns {
        return Err(Error::Parse {
            line: 1,
            message: format!("header needs at least {min_columns} columns"),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    if rows.is_empty() {
        return Err(Error::Input("input has no data rows".into()));
    }
    Ok(Table { header, rows })
}

fn parse_label(field: &str, line: u64) -> Result<i64> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("'{field}' is not an integer label"),
    })
}

fn parse_features(fields: &[String], line: u64) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| match f.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Parse {
                line,
                message: format!("'{f}' is not a finite number"),
            }),
        })
        .collect()
}

/// Reads `group_id, x_1, ..., x_d` rows into one sample set per group, in
/// ascending group-id order.
pub fn read_groups(path: &Path) -> Result<(Vec<i64>, MultiSample)> {
    let table = read_table(path, 2)?;
    let mut groups: BTreeMap<i64, Vec<Vec<f64>>> = BTreeMap::new();
    for (line, fields) in &table.rows {
        let id = parse_label(&fields[0], *line)?;
        groups
            .entry(id)
            .or_default()
            .push(parse_features(&fields[1..], *line)?);
    }
    let ids: Vec<i64> = groups.keys().copied().collect();
    let sets = groups
        .into_values()
        .map(|rows| SampleSet::from_rows(&rows))
        .collect::<Result<Vec<_>>>()?;
    Ok((ids, MultiSample::new(sets)?))
}

/// Reads points for clustering. A first column named `label` or `group_id`
/// holds true labels; otherwise every column is a feature.
pub fn read_points(path: &Path) -> Result<(SampleSet, Option<Vec<i64>>)> {
    let table = read_table(path, 1)?;
    let first = table.header[0].to_ascii_lowercase();
    let labelled = (first == "label" || first == "group_id") && table.header.len() > 1;
    let mut labels = Vec::new();
    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        if labelled {
            labels.push(parse_label(&fields[0], *line)?);
            rows.push(parse_features(&fields[1..], *line)?);
        } else {
            rows.push(parse_features(fields, *line)?);
        }
    }
    Ok((SampleSet::from_rows(&rows)?, labelled.then_some(labels)))
}

// =============================================================================
// Output
// =============================================================================

/// Column names and rows of JSON scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl OutputTable {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.as_ref().to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Values of one column.
    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let idx = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[idx]).collect())
    }
}

/// A JSON number, or `null` for non-finite and absent values.
pub fn num(x: impl Into<Option<f64>>) -> Value {
    x.into().map_or(Value::Null, Value::from)
}

fn csv_field(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn render(meta: &Value, table: &OutputTable, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut out = format!("{META_PREFIX}{}\n", serde_json::to_string(meta)?).into_bytes();
            {
                let mut w = csv::Writer::from_writer(&mut out);
                w.write_record(&table.columns)?;
                for row in &table.rows {
                    w.write_record(row.iter().map(csv_field))?;
                }
                w.flush()?;
            }
            Ok(out)
        }
        Format::Json => {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = table
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.clone(), v.clone()))
                        .collect();
                    Value::Object(obj)
                })
                .collect();
            let mut doc = Map::new();
            doc.insert("meta".into(), meta.clone());
            doc.insert("rows".into(), Value::Array(rows));
            let mut out = serde_json::to_vec_pretty(&Value::Object(doc))?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

/// Writes a table to `path`, or to stdout when `path` is `None`.
pub fn write_table(
    path: Option<&Path>,
    format: Format,
    meta: &Value,
    table: &OutputTable,
) -> Result<()> {
    let bytes = render(meta, table, format)?;
    match path {
        Some(p) => File::create(p)?.write_all(&bytes)?,
        None => io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

/// The metadata object embedded in an output file.
pub fn read_meta(path: &Path) -> Result<Value> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if let Some(json) = first.strip_prefix(META_PREFIX) {
        return Ok(serde_json::from_str(json.trim_end())?);
    }
    let text = std::fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text)?;
    doc.get("meta")
        .cloned()
        .ok_or_else(|| Error::Input(format!("{} carries no metadata", path.display())))
}

/// Reads a table written by [`write_table`] back into columns and rows.
pub fn read_output(path: &Path) -> Result<(Value, OutputTable)> {
    let meta = read_meta(path)?;
    let text = std::fs::read_to_string(path)?;
    if text.starts_with(META_PREFIX) {
        let body = text.split_once('\n').map_or("", |(_, rest)| rest);
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(body.as_bytes());
        let columns: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let mut table = OutputTable::new(&columns);
        for record in reader.records() {
            table.push(
                record?
                    .iter()
                    .map(|f| Value::String(f.to_owned()))
                    .collect(),
            );
        }
        return Ok((meta, table));
    }
    let doc: Value = serde_json::from_str(&text)?;
    let rows = doc
        .get("rows")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    let columns: Vec<String> = rows
        .first()
        .and_then(Value::as_object)
        .map(|o| o.keys().cloned().collect())
        .unwrap_or_default();
    let mut table = OutputTable::new(&columns);
    for row in rows {
        table.push(
            columns
                .iter()
                .map(|c| row.get(c).cloned().unwrap_or(Value::Null))
                .collect(),
        );
    }
    Ok((meta, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn groups_are_read_in_id_order() {
        let f = file_with("group_id,x,y\n2,1.0,2.0\n1,0.0,0.5\n2,3.0,4.0\n");
        let (ids, ms) = read_groups(f.path()).unwrap();
        assert_eq!(ids, vec![1, 2]);
        assert_eq!(ms.sizes(), vec![1, 2]);
        assert_eq!(ms.groups()[1].row(1), &[3.0, 4.0]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let f = file_with("group_id,x\n1,0.5\n1,abc\n");
        match read_groups(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let f = file_with("group_id,x\n1,0.5\n2,0.5,9\n");
        assert!(matches!(
            read_groups(f.path()),
            Err(Error::Parse { line: 3, .. })
        ));
        let f = file_with("group_id,x\n1.5,0.5\n");
        assert!(matches!(
            read_groups(f.path()),
            Err(Error::Parse { line: 2, .. })
        ));
        let f = file_with("group_id,x\n1,0.5\n1,0.7\n");
        assert!(read_groups(f.path()).is_err());
    }

    #[test]
    fn points_detect_label_column() {
        let f = file_with("label,a,b\n0,1,2\n1,3,4\n");
        let (x, labels) = read_points(f.path()).unwrap();
        assert_eq!((x.len(), x.dim()), (2, 2));
        assert_eq!(labels, Some(vec![0, 1]));
        let f = file_with("a,b\n1,2\n3,4\n");
        let (x, labels) = read_points(f.path()).unwrap();
        assert_eq!(x.dim(), 2);
        assert_eq!(labels, None);
    }

    #[test]
    fn tables_round_trip_in_both_formats() {
        let meta = serde_json::json!({"tool": "gcsd", "seed": 4});
        let mut t = OutputTable::new(&["metric", "value"]);
        t.push(vec![Value::from("gcsd"), num(0.1 + 0.2)]);
        t.push(vec![Value::from("pkld"), num(None)]);
        for format in [Format::Csv, Format::Json] {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("out");
            write_table(Some(&p), format, &meta, &t).unwrap();
            let (m, back) = read_output(&p).unwrap();
            assert_eq!(m, meta);
            let vals = back.column("value").unwrap();
            let first = match vals[0] {
                Value::String(s) => s.parse::<f64>().unwrap(),
                v => v.as_f64().unwrap(),
            };
            assert_eq!(first.to_bits(), (0.1f64 + 0.2).to_bits());
        }
    }
}
