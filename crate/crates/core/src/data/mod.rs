//! Time-ordered tabular data: loading, cleaning, statistics and synthesis.

mod clean;
pub(crate) mod describe;
mod synth;

pub use clean::{clean, CleaningRules, RemovalReport};
pub use describe::{describe, ColumnStats, Description};
pub use synth::{synth_regimes, RegimeSpec, SynthSpec};

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

/// Samples in time order: a feature vector and a real target per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    target_name: String,
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
    labels: Option<Vec<u32>>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        features: Vec<Vec<f64>>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::input(format!("{} feature rows but {} targets", features.len(), targets.len())));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(Error::input(format!(
                    "row {i} has {} features, expected {}",
                    row.len(),
                    feature_names.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) || !targets[i].is_finite() {
                return Err(Error::input(format!("row {i} contains a non-finite value")));
            }
        }
        Ok(Dataset { feature_names, target_name: target_name.into(), features, targets, labels: None })
    }

    /// Attaches auxiliary per-row labels (never used as model inputs).
    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.targets.len() {
            return Err(Error::input("label count does not match row count"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Column-major copy of the features.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_features()).map(|f| self.features.iter().map(|row| row[f]).collect()).collect()
    }

    /// Values of a named feature or the target.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if name == self.target_name {
            return Some(self.targets.clone());
        }
        let f = self.feature_names.iter().position(|n| n == name)?;
        Some(self.features.iter().map(|row| row[f]).collect())
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn slice(&self, range: Range<usize>) -> Dataset {
        let indices: Vec<usize> = range.collect();
        self.subset(&indices)
    }

    /// Keeps rows where `keep` is true.
    pub fn filter(&self, keep: &[bool]) -> Dataset {
        let indices: Vec<usize> = keep.iter().enumerate().filter(|(_, k)| **k).map(|(i, _)| i).collect();
        self.subset(&indices)
    }

    /// Restricts and reorders the feature columns.
    pub fn select_features(&self, names: &[String]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::input(format!("unknown feature column `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            feature_names: names.to_vec(),
            target_name: self.target_name.clone(),
            features: self.features.iter().map(|row| idx.iter().map(|&i| row[i]).collect()).collect(),
            targets: self.targets.clone(),
            labels: self.labels.clone(),
        })
    }
}

/// A numeric CSV table; rows with empty or non-numeric cells are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub dropped_rows: usize,
}

impl Table {
    pub fn read<R: Read>(reader: R) -> Result<Table> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut dropped_rows = 0;
        for record in rdr.records() {
            let record = record?;
            if record.len() != headers.len() {
                dropped_rows += 1;
                continue;
            }
            let parsed: Option<Vec<f64>> =
                record.iter().map(|cell| cell.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
            match parsed {
                Some(row) => rows.push(row),
                None => dropped_rows += 1,
            }
        }
        if dropped_rows > 0 {
            log::warn!("dropped {dropped_rows} row(s) with empty or non-numeric cells");
        }
        Ok(Table { headers, rows, dropped_rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Table> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Table::read(std::io::BufReader::new(file))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Splits the table into a dataset. `features = None` takes every
    /// non-target column in file order.
    pub fn into_dataset(self, target_name: &str, features: Option<&[String]>) -> Result<Dataset> {
        let target = self
            .column_index(target_name)
            .ok_or_else(|| Error::input(format!("target column `{target_name}` not found")))?;
        let feature_names: Vec<String> = match features {
            Some(names) => names.to_vec(),
            None => self.headers.iter().filter(|h| *h != target_name).cloned().collect(),
        };
        let idx = feature_names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::input(format!("feature column `{n}` not found"))))
            .collect::<Result<Vec<_>>>()?;
        let features = self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect();
        let targets = self.rows.iter().map(|r| r[target]).collect();
        Dataset::new(feature_names, target_name, features, targets)
    }
}

/// Reads a CSV with a header row; every non-target column becomes a feature.
pub fn load_csv(path: impl AsRef<Path>, target_name: &str) -> Result<Dataset> {
    Table::load(path)?.into_dataset(target_name, None)
}

/// Like [`load_csv`] with an explicit feature subset.
pub fn load_csv_with_features(path: impl AsRef<Path>, target_name: &str, features: &[String]) -> Result<Dataset> {
    Table::load(path)?.into_dataset(target_name, Some(features))
}

/// Writes features then target, using round-trip decimal formatting.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.push(&data.target_name);
    wtr.write_record(&header)?;
    for (row, y) in data.features.iter().zip(&data.targets) {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        cells.push(y.to_string());
        wtr.write_record(&cells)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(data, std::io::BufWriter::new(file))
}
