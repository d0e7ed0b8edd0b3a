//! Tabular data with explicit missing markers, CSV ingestion, and the
//! seeded train/validation split.

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

/// Column-named numeric table; `None` cells are missing.
#[derive(Debug, Clone)]
pub struct TabularDataset {
    columns: Vec<String>,
    cells: Vec<Option<f64>>, // row-major
    n_rows: usize,
}

impl TabularDataset {
    pub fn new(columns: Vec<String>, cells: Vec<Option<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("dataset needs at least one column".into()));
        }
        if cells.len() % columns.len() != 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("cell count divisible by {}", columns.len()),
                got: format!("{}", cells.len()),
            });
        }
        let n_rows = cells.len() / columns.len();
        Ok(Self {
            columns,
            cells,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("unknown column '{name}'")))
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.columns.len() + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        self.cells[row * self.columns.len() + col] = value;
    }

    pub fn n_missing(&self, col: usize) -> usize {
        (0..self.n_rows).filter(|&r| self.get(r, col).is_none()).count()
    }

    pub fn n_missing_total(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Rows where every listed column is present.
    pub fn complete_rows(&self, cols: &[usize]) -> Vec<usize> {
        (0..self.n_rows)
            .filter(|&r| cols.iter().all(|&c| self.get(r, c).is_some()))
            .collect()
    }

    /// Keep only the given rows (in the given order).
    pub fn subset_rows(&self, rows: &[usize]) -> TabularDataset {
        let w = self.columns.len();
        let mut cells = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            cells.extend_from_slice(&self.cells[r * w..(r + 1) * w]);
        }
        TabularDataset {
            columns: self.columns.clone(),
            cells,
            n_rows: rows.len(),
        }
    }

    /// Blank the response in the given rows, returning the prior values.
    pub fn mask_rows(&mut self, col: usize, rows: &[usize]) -> Vec<Option<f64>> {
        rows.iter()
            .map(|&r| {
                let old = self.get(r, col);
                self.set(r, col, None);
                old
            })
            .collect()
    }
}

/// Expected columns and the optional numeric sentinel treated as missing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub columns: Vec<String>,
    pub missing_sentinel: Option<f64>,
}

/// Row and missing-cell counts from one load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadSummary {
    pub n_rows: usize,
    pub missing_per_column: HashMap<String, usize>,
}

/// Read the schema columns from a headed CSV file. Empty cells and the
/// configured sentinel parse as missing; any other non-numeric cell is a
/// parse error naming its row and column.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<(TabularDataset, LoadSummary)> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, schema)
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<(TabularDataset, LoadSummary)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut col_pos = Vec::with_capacity(schema.columns.len());
    for want in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| h.trim() == want)
            .ok_or_else(|| Error::Schema(format!("column '{want}' not found in header")))?;
        col_pos.push(pos);
    }
    let mut cells: Vec<Option<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        for (want, &pos) in schema.columns.iter().zip(&col_pos) {
            let raw = record.get(pos).unwrap_or("").trim();
            let cell = if raw.is_empty() {
                None
            } else {
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    row: i + 2, // 1-based, after the header line
                    column: want.clone(),
                    message: format!("'{raw}' is not numeric"),
                })?;
                if Some(v) == schema.missing_sentinel {
                    None
                } else {
                    Some(v)
                }
            };
            cells.push(cell);
        }
    }
    let ds = TabularDataset::new(schema.columns.clone(), cells)?;
    let missing_per_column = schema
        .columns
        .iter()
        .enumerate()
        .map(|(c, name)| (name.clone(), ds.n_missing(c)))
        .collect();
    let summary = LoadSummary {
        n_rows: ds.n_rows(),
        missing_per_column,
    };
    Ok((ds, summary))
}

/// Row partition from a seeded uniform shuffle.
#[derive(Debug, Clone)]
pub struct Split {
    pub train_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
}

/// Uniform random split of the dataset's rows; deterministic per seed.
/// Row lists come back sorted ascending.
pub fn make_split(dataset: &TabularDataset, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::ParamDomain(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.n_rows();
    let mut rows: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, streams::SPLIT_SHUFFLE);
    rows.shuffle(&mut rng);
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, n.saturating_sub(1).max(1));
    let mut train_rows = rows[..n_train].to_vec();
    let mut validation_rows = rows[n_train..].to_vec();
    train_rows.sort_unstable();
    validation_rows.sort_unstable();
    Ok(Split {
        train_rows,
        validation_rows,
    })
}
