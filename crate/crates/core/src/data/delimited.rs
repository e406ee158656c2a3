//! Delimited text datasets.
//!
//! Grammar (with the default `,` delimiter):
//!
//! ```text
//! file   := header NEWLINE (row NEWLINE)*
//! header := "f0" "," "f1" "," ... "f{d-1}" "," "labels"
//! row    := float "," ... float "," labels
//! labels := int (";" int)*
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a saved dataset
//! reloads bit-for-bit. Line numbers in errors count the header as line 1.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::TargetLabels;
use crate::matrix::Matrix;

use super::{Dataset, DatasetMeta, Split};

#[derive(Debug, Clone, PartialEq)]
pub struct DelimitedSchema {
    pub delimiter: u8,
    pub label_column: String,
    pub label_separator: char,
    /// Feature columns by header name; `None` means every other column.
    pub feature_columns: Option<Vec<String>>,
    /// Declared class count; inferred as `max label + 1` when `None`.
    pub classes: Option<usize>,
}

impl Default for DelimitedSchema {
    fn default() -> Self {
        Self {
            delimiter: b',',
            label_column: "labels".into(),
            label_separator: ';',
            feature_columns: None,
            classes: None,
        }
    }
}

impl DelimitedSchema {
    pub fn with_classes(mut self, classes: usize) -> Self {
        self.classes = Some(classes);
        self
    }
}

pub fn save_delimited(data: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..data.dim())
        .map(|j| format!("f{j}"))
        .chain(std::iter::once("labels".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (row, y) in data.features().iter_rows().zip(data.labels()) {
        let mut line = String::new();
        for v in row {
            line.push_str(&format!("{v:?},"));
        }
        let labels: Vec<String> = y.positives().iter().map(usize::to_string).collect();
        line.push_str(&labels.join(";"));
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_delimited(path: &Path, schema: &DelimitedSchema) -> Result<Dataset> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == schema.label_column)
        .ok_or_else(|| {
            Error::Schema(format!(
                "{}: no `{}` column in header",
                path.display(),
                schema.label_column
            ))
        })?;
    let feature_idx: Vec<usize> = match &schema.feature_columns {
        Some(names) => names
            .iter()
            .map(|n| {
                headers.iter().position(|h| h.trim() == n).ok_or_else(|| {
                    Error::Schema(format!("{}: no `{n}` column in header", path.display()))
                })
            })
            .collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&i| i != label_idx).collect(),
    };

    let mut features = Vec::new();
    let mut label_sets: Vec<(u64, Vec<usize>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for &i in &feature_idx {
            let cell = record[i].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column {i}: `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {i}: non-finite value")));
            }
            features.push(v);
        }
        let cell = record[label_idx].trim();
        let labels: Vec<usize> = cell
            .split(schema.label_separator)
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(line, format!("label `{s}` is not a class index")))
            })
            .collect::<Result<_>>()?;
        label_sets.push((line, labels));
    }
    if label_sets.is_empty() {
        return Err(Error::EmptyDataset(path.to_path_buf()));
    }

    let max_label = label_sets
        .iter()
        .flat_map(|(_, l)| l.iter().copied())
        .max()
        .unwrap_or(0);
    let classes = match schema.classes {
        Some(k) => {
            if let Some((line, l)) = label_sets.iter().find(|(_, l)| l.iter().any(|&v| v >= k)) {
                return Err(Error::Schema(format!(
                    "{}: line {line}: label set {l:?} exceeds declared {k} classes",
                    path.display()
                )));
            }
            k
        }
        None => (max_label + 1).max(2),
    };
    let mut labels = Vec::with_capacity(label_sets.len());
    for (line, l) in label_sets {
        labels.push(TargetLabels::new(l, classes).map_err(|e| parse_err(line, e.to_string()))?);
    }
    let rows = labels.len();
    Dataset::new(
        Matrix::from_vec(rows, feature_idx.len(), features)?,
        labels,
        classes,
        Split::Test,
        DatasetMeta {
            generator: "file".into(),
            params: serde_json::json!({ "path": path.display().to_string() }),
            seed: None,
        },
    )
}
