//! Design matrices from tabular data and R-style formulas.
//!
//! Supported: `y ~ a + b + a:b`, `a*b` (expands to `a + b + a:b`),
//! `C(col)` treatment-coded factors (first level in sorted order is the
//! reference), and `- 1` / `+ 0` to drop the intercept.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major dense design.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub n_rows: usize,
    pub data: Vec<f64>,
}

impl Design {
    pub fn new(names: Vec<String>, n_rows: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != names.len() * n_rows {
            return Err(Error::Invalid(format!(
                "design has {} values, expected {} rows x {} columns",
                data.len(),
                n_rows,
                names.len()
            )));
        }
        Ok(Design { names, n_rows, data })
    }

    /// Build from rows, naming columns `x0, x1, ...` unless names are given.
    pub fn from_rows(rows: &[Vec<f64>], names: Option<Vec<String>>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Invalid("ragged design rows".into()));
        }
        let names = names.unwrap_or_else(|| (0..p).map(|j| format!("x{j}")).collect());
        Design::new(names, rows.len(), rows.concat())
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.data[i * self.n_cols() + j]).collect()
    }

    /// Keep only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Design> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::Invalid(format!("no design column `{n}`")))
            })
            .collect::<Result<_>>()?;
        let mut data = Vec::with_capacity(self.n_rows * idx.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Design::new(names.to_vec(), self.n_rows, data)
    }

    pub fn has_intercept(&self) -> bool {
        self.names.iter().any(|n| n == INTERCEPT)
    }
}

pub const INTERCEPT: &str = "(Intercept)";

/// String-valued columns read from a CSV file.
#[derive(Debug, Clone, Default)]
pub struct Frame {
    pub columns: Vec<String>,
    pub values: Vec<Vec<String>>,
}

impl Frame {
    pub fn read_csv(path: &Path) -> Result<Frame> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Frame::read_csv_from(file, path)
    }

    pub fn read_csv_from<R: std::io::Read>(reader: R, path: &Path) -> Result<Frame> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let schema = |line: u64, message: String| Error::Schema {
            path: path.to_path_buf(),
            line,
            field: String::new(),
            message,
        };
        let columns: Vec<String> = rdr
            .headers()
            .map_err(|e| schema(1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut values = vec![Vec::new(); columns.len()];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| schema(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            for (j, v) in rec.iter().enumerate().take(columns.len()) {
                values[j].push(v.to_string());
            }
        }
        Ok(Frame { columns, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    fn column(&self, name: &str) -> Result<&[String]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|j| self.values[j].as_slice())
            .ok_or_else(|| Error::Invalid(format!("formula refers to unknown column `{name}`")))
    }

    fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Schema {
                    path: "<frame>".into(),
                    line: i as u64 + 2,
                    field: name.to_string(),
                    message: format!("`{v}` is not a finite number"),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Factor {
    Numeric(String),
    Categorical(String),
}

/// Parsed `response ~ terms`.
#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    pub response: String,
    terms: Vec<Vec<Factor>>,
    pub intercept: bool,
}

fn parse_factor(s: &str) -> Result<Factor> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix("C(").and_then(|r| r.strip_suffix(')')) {
        return Ok(Factor::Categorical(inner.trim().to_string()));
    }
    if s.is_empty() || s.contains(['(', ')', ' ']) {
        return Err(Error::Invalid(format!("cannot parse formula factor `{s}`")));
    }
    Ok(Factor::Numeric(s.to_string()))
}

impl Formula {
    pub fn parse(text: &str) -> Result<Formula> {
        let (lhs, rhs) = text
            .split_once('~')
            .ok_or_else(|| Error::Invalid(format!("formula `{text}` has no `~`")))?;
        let response = lhs.trim().to_string();
        if response.is_empty() {
            return Err(Error::Invalid("formula has no response".into()));
        }
        let mut intercept = true;
        let mut terms: Vec<Vec<Factor>> = Vec::new();
        let push = |t: Vec<Factor>, terms: &mut Vec<Vec<Factor>>| {
            if !terms.contains(&t) {
                terms.push(t);
            }
        };
        let rhs = rhs.replace("- 1", "-1").replace("-1", "+-1");
        for raw in rhs.split('+').map(str::trim) {
            match raw {
                "" => continue,
                "1" => intercept = true,
                "0" | "-1" => intercept = false,
                _ if raw.contains('*') => {
                    let parts: Vec<Factor> = raw.split('*').map(parse_factor).collect::<Result<_>>()?;
                    // all non-empty subsets, lower orders first
                    let k = parts.len();
                    let mut subsets: Vec<Vec<Factor>> = (1u32..(1 << k))
                        .map(|mask| (0..k).filter(|b| mask & (1 << b) != 0).map(|b| parts[b].clone()).collect())
                        .collect();
                    subsets.sort_by_key(Vec::len);
                    for s in subsets {
                        push(s, &mut terms);
                    }
                }
                _ => {
                    let t = raw.split(':').map(parse_factor).collect::<Result<_>>()?;
                    push(t, &mut terms);
                }
            }
        }
        Ok(Formula { response, terms, intercept })
    }

    /// Design matrix and response vector.
    pub fn build(&self, frame: &Frame) -> Result<(Design, Vec<f64>)> {
        let n = frame.n_rows();
        let y = frame.numeric(&self.response)?;
        let mut names = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        if self.intercept {
            names.push(INTERCEPT.to_string());
            cols.push(vec![1.0; n]);
        }
        for term in &self.terms {
            let mut acc: Vec<(String, Vec<f64>)> = vec![(String::new(), vec![1.0; n])];
            for factor in term {
                let expanded = expand_factor(factor, frame)?;
                acc = acc
                    .iter()
                    .flat_map(|(an, av)| {
                        expanded.iter().map(move |(bn, bv)| {
                            let name = if an.is_empty() { bn.clone() } else { format!("{an}:{bn}") };
                            (name, av.iter().zip(bv).map(|(a, b)| a * b).collect())
                        })
                    })
                    .collect();
            }
            for (name, v) in acc {
                names.push(name);
                cols.push(v);
            }
        }
        let p = cols.len();
        let mut data = vec![0.0; n * p];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[i * p + j] = *v;
            }
        }
        Ok((Design::new(names, n, data)?, y))
    }
}

fn expand_factor(factor: &Factor, frame: &Frame) -> Result<Vec<(String, Vec<f64>)>> {
    match factor {
        Factor::Numeric(name) => Ok(vec![(name.clone(), frame.numeric(name)?)]),
        Factor::Categorical(name) => {
            let col = frame.column(name)?;
            let levels: BTreeSet<&str> = col.iter().map(String::as_str).collect();
            Ok(levels
                .into_iter()
                .skip(1)
                .map(|lvl| {
                    (
                        format!("C({name}){lvl}"),
                        col.iter().map(|v| if v == lvl { 1.0 } else { 0.0 }).collect(),
                    )
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> Frame {
        let text = "y,a,b,g\n1,2,3,x\n2,0,1,y\n3,1,1,z\n4,5,2,x\n";
        Frame::read_csv_from(text.as_bytes(), Path::new("t.csv")).unwrap()
    }

    #[test]
    fn interaction_and_star() {
        let (d, y) = Formula::parse("y ~ a*b").unwrap().build(&frame()).unwrap();
        assert_eq!(d.names, vec!["(Intercept)", "a", "b", "a:b"]);
        assert_eq!(d.row(0), &[1.0, 2.0, 3.0, 6.0]);
        assert_eq!(y, vec![1.0, 2.0, 3.0, 4.0]);
        let (d2, _) = Formula::parse("y ~ a + b + a:b").unwrap().build(&frame()).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn categorical_treatment_coding() {
        let (d, _) = Formula::parse("y ~ C(g) + a:C(g) - 1").unwrap().build(&frame()).unwrap();
        assert_eq!(d.names, vec!["C(g)y", "C(g)z", "a:C(g)y", "a:C(g)z"]);
        assert!(!d.has_intercept());
        assert_eq!(d.row(1), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.row(2), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn errors() {
        assert!(Formula::parse("a + b").is_err());
        assert!(Formula::parse("y ~ nope").unwrap().build(&frame()).is_err());
        let bad = Frame::read_csv_from("y,a\n1,x\n".as_bytes(), Path::new("t.csv")).unwrap();
        assert!(Formula::parse("y ~ a").unwrap().build(&bad).is_err());
    }

    #[test]
    fn select_columns() {
        let d = Design::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]], None).unwrap();
        let s = d.select(&["x2".to_string(), "x0".to_string()]).unwrap();
        assert_eq!(s.data, vec![3.0, 1.0, 6.0, 4.0]);
        assert!(d.select(&["zz".to_string()]).is_err());
    }
}
