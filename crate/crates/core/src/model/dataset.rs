//! Observations and their CSV form.
//!
//! CSV layout: a header row `x0,...,x{D-1}` optionally followed by `label`,
//! then one observation per row. Comma separated, `.` decimal point, UTF-8.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Label value reserved for observations whose true class is unknown.
pub const UNKNOWN_LABEL: i64 = -1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    values: Vec<f64>,
    labels: Option<Vec<i64>>,
}

impl Dataset {
    /// `values` holds `n x dim` observations in row-major order.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        values: Vec<f64>,
        labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidData("dimension must be at least 1".into()));
        }
        if values.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if values.len() % dim != 0 {
            return Err(Error::InvalidData(format!(
                "{} values do not form rows of length {dim}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value in row {}",
                pos / dim
            )));
        }
        let n = values.len() / dim;
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::InvalidData(format!(
                    "{} labels for {n} observations",
                    l.len()
                )));
            }
            if l.iter().any(|&v| v < UNKNOWN_LABEL) {
                return Err(Error::InvalidData("labels must be >= -1".into()));
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            values,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        let n = self.len();
        if labels.len() != n {
            return Err(Error::InvalidData(format!(
                "{} labels for {n} observations",
                labels.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::Chunks<'_, f64> {
        self.values.chunks(self.dim)
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.rows().map(|r| r[d]).collect()
    }

    /// Row-major values of the selected rows.
    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        out
    }

    /// Number of distinct non-negative labels (`max + 1`).
    pub fn label_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().filter(|&&v| v >= 0).max().map_or(0, |&m| m as usize + 1))
    }

    /// Hex SHA-256 over dimension, values and labels.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for v in &self.values {
            h.update(v.to_bits().to_le_bytes());
        }
        if let Some(l) = &self.labels {
            h.update(b"labels");
            for v in l {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|d| format!("x{d}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.dim + 1);
        for (i, row) in self.rows().enumerate() {
            record.clear();
            // `{}` prints the shortest representation that parses back exactly.
            record.extend(row.iter().map(|v| format!("{v}")));
            if let Some(l) = &self.labels {
                record.push(l[i].to_string());
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(name: impl Into<String>, reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = r.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let has_label = cols.last() == Some(&"label");
        let dim = cols.len() - usize::from(has_label);
        for (d, c) in cols[..dim].iter().enumerate() {
            if *c != format!("x{d}") {
                return Err(Error::InvalidData(format!(
                    "expected column x{d}, found `{c}`"
                )));
            }
        }
        let mut values = Vec::new();
        let mut labels = has_label.then(Vec::new);
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != cols.len() {
                return Err(Error::InvalidData(format!(
                    "row {} has {} fields, expected {}",
                    line + 1,
                    rec.len(),
                    cols.len()
                )));
            }
            for field in rec.iter().take(dim) {
                values.push(field.parse::<f64>().map_err(|e| {
                    Error::InvalidData(format!("row {}: `{field}`: {e}", line + 1))
                })?);
            }
            if let Some(l) = labels.as_mut() {
                let field = &rec[dim];
                l.push(field.parse::<i64>().map_err(|e| {
                    Error::InvalidData(format!("row {} label `{field}`: {e}", line + 1))
                })?);
            }
        }
        Dataset::new(name, dim.max(1), values, labels)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::read_csv(name, std::fs::File::open(path)?)
    }
}

/// Per-observation component indices.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Assignments(pub Vec<usize>);

impl Assignments {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Observation indices per component.
    pub fn groups(&self, k: usize) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); k];
        for (i, &z) in self.0.iter().enumerate() {
            g[z].push(i);
        }
        g
    }

    pub fn counts(&self, k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &z in &self.0 {
            c[z] += 1;
        }
        c
    }

    pub fn to_labels(&self) -> Vec<i64> {
        self.0.iter().map(|&z| z as i64).collect()
    }
}
