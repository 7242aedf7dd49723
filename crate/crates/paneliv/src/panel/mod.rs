//! Rectangular entity×period data store with explicit missing markers.
//!
//! Storage is always rectangular: every column holds |entities|×|periods|
//! cells, and an unbalanced panel is represented by missing cells, never by
//! ragged rows. Datasets are immutable after construction; transforms return
//! new datasets.

mod filter;
mod transform;

pub use filter::{time_dummies, within_demean, FilteredSample, SampleFilter};
pub use transform::{apply_transform, Transform};

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Ordered entity×period observation store with named columns.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    entities: Vec<String>,
    periods: Vec<i64>,
    entity_index: HashMap<String, usize>,
    period_index: HashMap<i64, usize>,
    columns: IndexMap<String, Vec<Option<f64>>>,
    metadata: HashMap<String, String>,
}

impl PanelDataset {
    /// Builds an empty dataset over the given (sorted, deduplicated) axes.
    pub fn new(mut entities: Vec<String>, mut periods: Vec<i64>) -> Self {
        entities.sort();
        entities.dedup();
        periods.sort_unstable();
        periods.dedup();
        let entity_index = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        let period_index = periods.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        PanelDataset {
            entities,
            periods,
            entity_index,
            period_index,
            columns: IndexMap::new(),
            metadata: HashMap::new(),
        }
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(|s| s.as_str())
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn entity_id(&self, entity: &str) -> Option<usize> {
        self.entity_index.get(entity).copied()
    }

    pub fn period_id(&self, period: i64) -> Option<usize> {
        self.period_index.get(&period).copied()
    }

    /// Raw cell storage for one column, entity-major.
    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.columns
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn cell(&self, column: &str, entity_id: usize, period_id: usize) -> Result<Option<f64>> {
        Ok(self.column(column)?[self.cell_index(entity_id, period_id)])
    }

    pub fn cell_index(&self, entity_id: usize, period_id: usize) -> usize {
        entity_id * self.periods.len() + period_id
    }

    pub fn metadata(&self, column: &str) -> Option<&str> {
        self.metadata.get(column).map(|s| s.as_str())
    }

    /// Appends a column; the cell vector must be entity-major and rectangular.
    pub fn add_column(&mut self, name: &str, cells: Vec<Option<f64>>) -> Result<()> {
        if self.columns.contains_key(name) {
            return Err(Error::ColumnCollision(name.to_string()));
        }
        assert_eq!(
            cells.len(),
            self.entities.len() * self.periods.len(),
            "column `{name}` is not rectangular"
        );
        self.columns.insert(name.to_string(), cells);
        Ok(())
    }

    pub fn set_metadata(&mut self, column: &str, note: &str) {
        self.metadata.insert(column.to_string(), note.to_string());
    }

    /// Returns a copy of this dataset with the new column appended.
    pub fn with_column(&self, name: &str, cells: Vec<Option<f64>>) -> Result<PanelDataset> {
        let mut out = self.clone();
        out.add_column(name, cells)?;
        Ok(out)
    }

    /// Per-entity series of one column, in period order.
    pub fn entity_series(&self, column: &str, entity_id: usize) -> Result<&[Option<f64>]> {
        let t = self.periods.len();
        Ok(&self.column(column)?[entity_id * t..(entity_id + 1) * t])
    }

    /// Loads a panel from CSV. The entity column is a string key, the time
    /// column an integer; every other column becomes a value column. Cells
    /// for (entity, period) pairs absent from the file stay missing, and an
    /// empty string is a missing value.
    pub fn from_csv_path(path: &Path, entity_col: &str, time_col: &str) -> Result<PanelDataset> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, entity_col, time_col)
    }

    pub fn from_csv_reader<R: Read>(
        reader: R,
        entity_col: &str,
        time_col: &str,
    ) -> Result<PanelDataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::CsvParse {
                line: 1,
                msg: e.to_string(),
            })?
            .clone();
        let entity_pos = headers
            .iter()
            .position(|h| h == entity_col)
            .ok_or_else(|| Error::UnknownColumn(entity_col.to_string()))?;
        let time_pos = headers
            .iter()
            .position(|h| h == time_col)
            .ok_or_else(|| Error::UnknownColumn(time_col.to_string()))?;
        let value_cols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != entity_pos && *i != time_pos)
            .map(|(i, h)| (i, h.to_string()))
            .collect();

        // First pass: collect rows and the axis sets.
        let mut rows: Vec<(String, i64, Vec<Option<f64>>)> = Vec::new();
        for (row_no, record) in rdr.records().enumerate() {
            let line = row_no as u64 + 2; // header is line 1
            let record = record.map_err(|e| Error::CsvParse {
                line,
                msg: e.to_string(),
            })?;
            let entity = record
                .get(entity_pos)
                .ok_or_else(|| Error::CsvParse {
                    line,
                    msg: "missing entity field".into(),
                })?
                .to_string();
            let time_raw = record.get(time_pos).unwrap_or("");
            let period: i64 = time_raw.trim().parse().map_err(|_| Error::CellType {
                column: time_col.to_string(),
                row: line,
                value: time_raw.to_string(),
            })?;
            let mut values = Vec::with_capacity(value_cols.len());
            for (pos, name) in &value_cols {
                let raw = record.get(*pos).unwrap_or("").trim();
                if raw.is_empty() {
                    values.push(None);
                } else {
                    let v: f64 = raw.parse().map_err(|_| Error::CellType {
                        column: name.clone(),
                        row: line,
                        value: raw.to_string(),
                    })?;
                    values.push(Some(v));
                }
            }
            rows.push((entity, period, values));
        }

        let entities: Vec<String> = rows.iter().map(|(e, _, _)| e.clone()).collect();
        let periods: Vec<i64> = rows.iter().map(|(_, p, _)| *p).collect();
        let mut ds = PanelDataset::new(entities, periods);
        let n_cells = ds.n_entities() * ds.n_periods();
        let mut data: Vec<Vec<Option<f64>>> = vec![vec![None; n_cells]; value_cols.len()];
        let mut seen = vec![false; n_cells];
        for (entity, period, values) in rows {
            let e = ds.entity_index[&entity];
            let t = ds.period_index[&period];
            let idx = ds.cell_index(e, t);
            if seen[idx] {
                return Err(Error::DuplicateObservation { entity, period });
            }
            seen[idx] = true;
            for (c, v) in values.into_iter().enumerate() {
                data[c][idx] = v;
            }
        }
        for ((_, name), cells) in value_cols.into_iter().zip(data) {
            ds.add_column(&name, cells)?;
        }
        Ok(ds)
    }

    /// Writes the panel as CSV in long form, columns in insertion order.
    /// Only cells with at least one non-missing value column are emitted.
    pub fn to_csv<W: std::io::Write>(
        &self,
        writer: W,
        entity_col: &str,
        time_col: &str,
    ) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![entity_col.to_string(), time_col.to_string()];
        header.extend(self.columns.keys().cloned());
        wtr.write_record(&header)
            .map_err(|e| Error::CsvParse { line: 0, msg: e.to_string() })?;
        for (e, entity) in self.entities.iter().enumerate() {
            for (t, period) in self.periods.iter().enumerate() {
                let idx = self.cell_index(e, t);
                let cells: Vec<String> = self
                    .columns
                    .values()
                    .map(|col| col[idx].map(|v| v.to_string()).unwrap_or_default())
                    .collect();
                if cells.iter().all(|c| c.is_empty()) {
                    continue;
                }
                let mut record = vec![entity.clone(), period.to_string()];
                record.extend(cells);
                wtr.write_record(&record)
                    .map_err(|e| Error::CsvParse { line: 0, msg: e.to_string() })?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}
