//! Row-oriented readers for the CSV and JSON-lines input schemas.
//!
//! Both formats expose the same `Row` view: named fields, empty string or
//! missing key meaning "absent", and the 1-based source line for error
//! messages. Lines starting with `#` are comments in either format.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    JsonLines,
}

impl Format {
    /// `.jsonl` / `.ndjson` / `.json` are JSON-lines; everything else is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") | Some("json") => Format::JsonLines,
            _ => Format::Csv,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json-lines" | "jsonl" => Ok(Format::JsonLines),
            other => Err(Error::Invalid(format!("unknown format `{other}`"))),
        }
    }
}

/// One input record, addressed by column name.
pub struct Row<'a> {
    pub line: u64,
    path: &'a Path,
    columns: &'a [&'a str],
    values: &'a [Option<String>],
}

impl<'a> Row<'a> {
    /// Field value, `None` when empty or missing.
    pub fn get(&self, field: &str) -> Option<&str> {
        let idx = self.columns.iter().position(|c| *c == field)?;
        self.values[idx].as_deref().filter(|v| !v.is_empty())
    }

    pub fn require(&self, field: &str) -> Result<&str> {
        self.get(field)
            .ok_or_else(|| self.error(field, "required value is missing"))
    }

    pub fn parse_i64(&self, field: &str) -> Result<Option<i64>> {
        match self.get(field) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse::<i64>()
                .map(Some)
                .map_err(|_| self.error(field, format!("`{v}` is not an integer"))),
        }
    }

    pub fn parse_f64(&self, field: &str) -> Result<Option<f64>> {
        match self.get(field) {
            None => Ok(None),
            Some(v) => v
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| self.error(field, format!("`{v}` is not a number"))),
        }
    }

    pub fn error(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            path: self.path.to_path_buf(),
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Stream every row of `path` through `visit`.
pub fn read_rows<F>(path: &Path, format: Format, columns: &[&str], visit: F) -> Result<()>
where
    F: FnMut(&Row<'_>) -> Result<()>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows_from(file, path, format, columns, visit)
}

/// Like [`read_rows`] over any reader; `path` is only used in messages.
pub fn read_rows_from<R, F>(
    reader: R,
    path: &Path,
    format: Format,
    columns: &[&str],
    visit: F,
) -> Result<()>
where
    R: Read,
    F: FnMut(&Row<'_>) -> Result<()>,
{
    match format {
        Format::Csv => read_csv(reader, path, columns, visit),
        Format::JsonLines => read_json_lines(reader, path, columns, visit),
    }
}

fn read_csv<R, F>(reader: R, path: &Path, columns: &[&str], mut visit: F) -> Result<()>
where
    R: Read,
    F: FnMut(&Row<'_>) -> Result<()>,
{
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(BufReader::with_capacity(1 << 20, reader));
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Schema {
            path: path.to_path_buf(),
            line,
            field: String::new(),
            message: e.to_string(),
        }
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut index = Vec::with_capacity(columns.len());
    for col in columns {
        match headers.iter().position(|h| h.trim() == *col) {
            Some(i) => index.push(i),
            None => {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    line: 1,
                    field: col.to_string(),
                    message: "column missing from header".into(),
                })
            }
        }
    }
    let mut record = csv::StringRecord::new();
    let mut values: Vec<Option<String>> = vec![None; columns.len()];
    while rdr.read_record(&mut record).map_err(csv_err)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for (slot, &i) in values.iter_mut().zip(&index) {
            match slot {
                Some(s) => {
                    s.clear();
                    s.push_str(record.get(i).unwrap_or(""));
                }
                None => *slot = Some(record.get(i).unwrap_or("").to_string()),
            }
        }
        visit(&Row {
            line,
            path,
            columns,
            values: &values,
        })?;
    }
    Ok(())
}

fn read_json_lines<R, F>(reader: R, path: &Path, columns: &[&str], mut visit: F) -> Result<()>
where
    R: Read,
    F: FnMut(&Row<'_>) -> Result<()>,
{
    let reader = BufReader::with_capacity(1 << 20, reader);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let schema_err = |message: String| Error::Schema {
            path: path.to_path_buf(),
            line: line_no,
            field: String::new(),
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| schema_err(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| schema_err("line is not a JSON object".into()))?;
        let mut values = Vec::with_capacity(columns.len());
        for col in columns {
            let v = match obj.get(*col) {
                None | Some(serde_json::Value::Null) => None,
                Some(serde_json::Value::String(s)) => Some(s.clone()),
                Some(serde_json::Value::Number(n)) => Some(n.to_string()),
                Some(serde_json::Value::Bool(b)) => Some(b.to_string()),
                Some(_) => {
                    return Err(Error::Schema {
                        path: path.to_path_buf(),
                        line: line_no,
                        field: col.to_string(),
                        message: "expected a scalar value".into(),
                    })
                }
            };
            values.push(v);
        }
        visit(&Row {
            line: line_no,
            path,
            columns,
            values: &values,
        })?;
    }
    Ok(())
}

/// Convenience for tests and in-memory callers.
pub fn memory_path(name: &str) -> PathBuf {
    PathBuf::from(format!("<{name}>"))
}
