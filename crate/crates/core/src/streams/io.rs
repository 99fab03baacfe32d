//! Text ingestion and export.
//!
//! Sparse input: one sample per line, `label idx:val idx:val ...` with
//! 1-based indices. Dense input: header-less comma-separated values, last
//! column an integer label. Raw labels of either format are re-densified to
//! `[0, C)` in order of their sorted distinct values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Dataset, StreamError};
use crate::types::{ClassLabel, LabeledSample, Sample};

/// Active coordinates of one sample: sorted `(0-based index, value)` pairs.
pub type SparseRow = Vec<(u32, f64)>;

/// A sparse dataset as ingested; densify via [`SparseDataset::to_dense`] or
/// reduce via [`super::reduce_dataset`].
#[derive(Debug, Clone)]
pub struct SparseDataset {
    pub rows: Vec<SparseRow>,
    pub labels: Vec<ClassLabel>,
    /// Declared dimensionality: the largest 1-based index seen.
    pub dim: usize,
    pub n_classes: u32,
    pub name: String,
}

impl SparseDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Materializes dense feature vectors; only sensible for small `dim`.
    pub fn to_dense(&self) -> Dataset {
        let samples = self
            .rows
            .iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(t, (row, label))| {
                let mut features = vec![0.0; self.dim];
                for (i, v) in row {
                    features[*i as usize] = *v;
                }
                LabeledSample {
                    sample: Sample::new(features, t as u64).expect("loader rejected non-finite"),
                    label: *label,
                }
            })
            .collect();
        Dataset {
            samples,
            n_classes: self.n_classes,
            dim: self.dim,
            name: self.name.clone(),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, StreamError> {
    fs::read_to_string(path).map_err(|source| StreamError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> StreamError {
    StreamError::MalformedLine {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Re-densifies raw integer labels to `[0, C)` by sorted order of the
/// distinct values; errors when fewer than two classes occur.
fn densify_labels(raw: &[i64], name: &str) -> Result<(Vec<ClassLabel>, u32), StreamError> {
    let distinct: std::collections::BTreeSet<i64> = raw.iter().copied().collect();
    let mapping: BTreeMap<i64, u32> = distinct
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i as u32))
        .collect();
    if mapping.len() < 2 {
        return Err(StreamError::TooFewClasses {
            name: name.to_string(),
            classes: mapping.len(),
        });
    }
    let labels = raw.iter().map(|v| ClassLabel(mapping[v])).collect();
    Ok((labels, mapping.len() as u32))
}

/// Loads the sparse `label idx:val ...` format (1-based indices, UTF-8, LF).
pub fn load_sparse(path: &Path) -> Result<SparseDataset, StreamError> {
    let content = read_to_string(path)?;
    let name = dataset_name(path);
    let mut rows: Vec<SparseRow> = Vec::new();
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut dim = 0usize;
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_token = tokens.next().expect("non-empty line has a first token");
        let label: i64 = label_token
            .parse()
            .map_err(|_| malformed(path, lineno, format!("bad label token '{label_token}'")))?;
        let mut row: SparseRow = Vec::new();
        for token in tokens {
            let (idx_str, val_str) = token
                .split_once(':')
                .ok_or_else(|| malformed(path, lineno, format!("expected idx:val, got '{token}'")))?;
            let idx: u64 = idx_str
                .parse()
                .map_err(|_| malformed(path, lineno, format!("bad index '{idx_str}'")))?;
            if idx == 0 {
                return Err(malformed(path, lineno, "indices are 1-based; got 0"));
            }
            if idx > u32::MAX as u64 {
                return Err(malformed(path, lineno, format!("index {idx} overflows")));
            }
            let value: f64 = val_str
                .parse()
                .map_err(|_| malformed(path, lineno, format!("bad value '{val_str}'")))?;
            if !value.is_finite() {
                return Err(malformed(path, lineno, format!("non-finite value '{val_str}'")));
            }
            row.push(((idx - 1) as u32, value));
        }
        row.sort_unstable_by_key(|(i, _)| *i);
        if row.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(malformed(path, lineno, "duplicate feature index"));
        }
        if let Some((max_idx, _)) = row.last() {
            dim = dim.max(*max_idx as usize + 1);
        }
        rows.push(row);
        raw_labels.push(label);
    }
    if rows.is_empty() {
        return Err(StreamError::EmptyDataset(name));
    }
    let (labels, n_classes) = densify_labels(&raw_labels, &name)?;
    Ok(SparseDataset {
        rows,
        labels,
        dim,
        n_classes,
        name,
    })
}

/// Loads header-less comma-separated rows whose last column is the label.
pub fn load_dense(path: &Path) -> Result<Dataset, StreamError> {
    let content = read_to_string(path)?;
    let name = dataset_name(path);
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in content.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(malformed(path, lineno, "need at least one feature and a label"));
        }
        let (label_field, feature_fields) = fields.split_last().expect("len >= 2");
        let label: i64 = label_field
            .trim()
            .parse()
            .map_err(|_| malformed(path, lineno, format!("bad label '{label_field}'")))?;
        let row: Vec<f64> = feature_fields
            .iter()
            .map(|f| {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| malformed(path, lineno, format!("bad feature '{f}'")))?;
                if !v.is_finite() {
                    return Err(malformed(path, lineno, format!("non-finite feature '{f}'")));
                }
                Ok(v)
            })
            .collect::<Result<_, _>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(malformed(
                    path,
                    lineno,
                    format!("expected {d} features, got {}", row.len()),
                ));
            }
            _ => {}
        }
        features.push(row);
        raw_labels.push(label);
    }
    if features.is_empty() {
        return Err(StreamError::EmptyDataset(name));
    }
    let (labels, n_classes) = densify_labels(&raw_labels, &name)?;
    let dim = dim.expect("non-empty dataset has a dimension");
    let samples = features
        .into_iter()
        .zip(&labels)
        .enumerate()
        .map(|(t, (row, label))| LabeledSample {
            sample: Sample::new(row, t as u64).expect("parser rejected non-finite"),
            label: *label,
        })
        .collect();
    Ok(Dataset {
        samples,
        n_classes,
        dim,
        name,
    })
}

/// Writes the dense format (shortest round-trip float formatting).
pub fn write_dense(dataset: &Dataset, path: &Path) -> Result<(), StreamError> {
    let mut out = String::new();
    for ls in &dataset.samples {
        let mut first = true;
        for v in ls.sample.features() {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push(',');
        out.push_str(&format!("{}", ls.label.0));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| StreamError::Io {
        path: path.display().to_string(),
        source,
    })
}
