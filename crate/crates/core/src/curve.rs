//! Sampled curves with metadata, emitted and read back as CSV.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Rows of `(abscissa, values...)` under named columns. The abscissa is
/// strictly increasing. Metadata is written as `# key: value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGrid {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: Vec<(String, String)>,
}

impl CurveGrid {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Result<Self> {
        let columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        if columns.is_empty() {
            return Err(Error::Curve("at least one column is required".into()));
        }
        if let Some(bad) = columns.iter().find(|c| c.contains(',') || c.contains('\n')) {
            return Err(Error::Curve(format!("column name {bad:?} contains a separator")));
        }
        Ok(Self {
            columns,
            rows: Vec::new(),
            metadata: Vec::new(),
        })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.push((key.into(), value.into()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Curve(format!(
                "row has {} values for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        if let Some(last) = self.rows.last() {
            if !(row[0] > last[0]) {
                return Err(Error::Curve(format!(
                    "abscissa {} does not increase past {}",
                    row[0], last[0]
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of one column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let v = v.replace('\n', " ");
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut metadata = Vec::new();
        let mut grid: Option<CurveGrid> = None;
        for (n, line) in text.lines().enumerate() {
            if let Some(meta) = line.strip_prefix('#') {
                let meta = meta.trim_start();
                let (k, v) = meta
                    .split_once(": ")
                    .or_else(|| meta.split_once(':'))
                    .unwrap_or((meta, ""));
                metadata.push((k.to_string(), v.to_string()));
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            match grid.as_mut() {
                None => grid = Some(CurveGrid::new(line.split(','))?),
                Some(g) => {
                    let row = line
                        .split(',')
                        .map(|c| {
                            c.trim().parse::<f64>().map_err(|_| {
                                Error::Curve(format!("line {}: bad number {c:?}", n + 1))
                            })
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    g.push(row)?;
                }
            }
        }
        let mut grid = grid.ok_or_else(|| Error::Curve("missing header row".into()))?;
        grid.metadata = metadata;
        Ok(grid)
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
