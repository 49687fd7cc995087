//! Sparse dataset ingestion: svmlight-style text files.
//!
//! Line format: `label idx:val idx:val ...` with 1-based on-disk indices.
//! `#` starts a comment, blank lines are skipped, and a `#dim N` header
//! pragma pins the dimensionality (otherwise the maximum index decides it).

use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::SparseVector;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<SparseVector>,
    pub labels: Vec<i32>,
    pub dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<i32> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

pub fn parse_svmlight(text: &str) -> Result<Dataset> {
    let mut rows: Vec<(i32, Vec<u32>, Vec<f64>)> = Vec::new();
    let mut pragma_dim: Option<usize> = None;
    let mut max_index: u32 = 0;

    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let trimmed = raw.trim_start();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some(dim_text) = rest.trim().strip_prefix("dim") {
                let dim: usize = dim_text.trim().parse().map_err(|_| {
                    parse_err(line_no, 1, format!("bad #dim pragma {:?}", raw.trim()))
                })?;
                pragma_dim = Some(dim);
            }
            continue;
        }
        let data = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };

        let mut tokens = token_spans(data);
        let (label_start, label) = tokens
            .next()
            .ok_or_else(|| parse_err(line_no, 1, "missing label"))?;
        let label: i32 = label
            .parse()
            .map_err(|_| parse_err(line_no, label_start + 1, format!("bad label {label:?}")))?;

        let mut indices: Vec<u32> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (start, token) in tokens {
            let column = start + 1;
            let (idx_text, val_text) = token.split_once(':').ok_or_else(|| {
                parse_err(line_no, column, format!("expected idx:val, got {token:?}"))
            })?;
            let idx: u32 = idx_text.parse().map_err(|_| {
                parse_err(line_no, column, format!("bad feature index {idx_text:?}"))
            })?;
            if idx == 0 {
                return Err(parse_err(line_no, column, "feature indices are 1-based; index 0 is invalid"));
            }
            let value: f64 = val_text.parse().map_err(|_| {
                parse_err(line_no, column, format!("bad feature value {val_text:?}"))
            })?;
            if !value.is_finite() {
                return Err(parse_err(line_no, column, format!("non-finite value {value}")));
            }
            if let Some(&prev) = indices.last() {
                if idx - 1 <= prev {
                    return Err(parse_err(line_no, column, "indices not ascending"));
                }
            }
            indices.push(idx - 1);
            values.push(value);
            max_index = max_index.max(idx - 1);
        }
        rows.push((label, indices, values));
    }

    let dim = match pragma_dim {
        Some(d) => d,
        None => {
            if rows.iter().all(|(_, idx, _)| idx.is_empty()) {
                0
            } else {
                max_index as usize + 1
            }
        }
    };

    let mut instances = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (label, indices, values) in rows {
        instances.push(SparseVector::new(dim, indices, values)?);
        labels.push(label);
    }
    Ok(Dataset {
        instances,
        labels,
        dim,
    })
}

fn token_spans(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_whitespace().map(move |tok| {
        let start = tok.as_ptr() as usize - line.as_ptr() as usize;
        (start, tok)
    })
}

pub fn load_svmlight(path: &Path) -> Result<Dataset> {
    parse_svmlight(&std::fs::read_to_string(path)?)
}

/// Writes the dataset with a `#dim` pragma; `parse_svmlight` on the output
/// reproduces the dataset exactly, and writing again is byte-identical.
pub fn format_svmlight(dataset: &Dataset) -> String {
    let mut out = String::new();
    out.push_str(&format!("#dim {}\n", dataset.dim));
    for (sv, label) in dataset.instances.iter().zip(&dataset.labels) {
        out.push_str(&label.to_string());
        for (idx, value) in sv.iter() {
            out.push_str(&format!(" {}:{}", idx + 1, value));
        }
        out.push('\n');
    }
    out
}

pub fn save_svmlight(dataset: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, format_svmlight(dataset))?;
    Ok(())
}
