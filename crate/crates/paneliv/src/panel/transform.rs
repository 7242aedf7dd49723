use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// A column-level derivation. Transforms never change the panel axes; they
/// append one new column and leave the sources untouched. Missing inputs
/// propagate to missing outputs.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// Natural log; non-positive inputs become missing (counted, not fatal).
    Log { source: String, output: String },
    /// Within-entity lag by `k` periods; the first `k` periods go missing.
    Lag { source: String, output: String, k: usize },
    Square { source: String, output: String },
    Interaction { left: String, right: String, output: String },
    /// Within-entity first difference.
    FirstDifference { source: String, output: String },
}

impl Transform {
    pub fn output(&self) -> &str {
        match self {
            Transform::Log { output, .. }
            | Transform::Lag { output, .. }
            | Transform::Square { output, .. }
            | Transform::Interaction { output, .. }
            | Transform::FirstDifference { output, .. } => output,
        }
    }
}

/// Applies `t` and returns a new dataset with the output column appended.
/// Returns the number of cells forced to missing by a log of a non-positive
/// value alongside the dataset (zero for every other transform kind).
pub fn apply_transform(ds: &PanelDataset, t: &Transform) -> Result<(PanelDataset, usize)> {
    if ds.has_column(t.output()) {
        return Err(Error::ColumnCollision(t.output().to_string()));
    }
    let n_periods = ds.n_periods();
    let mut warnings = 0usize;
    let cells = match t {
        Transform::Log { source, .. } => ds
            .column(source)?
            .iter()
            .map(|c| match c {
                Some(v) if *v > 0.0 => Some(v.ln()),
                Some(_) => {
                    warnings += 1;
                    None
                }
                None => None,
            })
            .collect(),
        Transform::Square { source, .. } => ds
            .column(source)?
            .iter()
            .map(|c| c.map(|v| v * v))
            .collect(),
        Transform::Interaction { left, right, .. } => ds
            .column(left)?
            .iter()
            .zip(ds.column(right)?)
            .map(|(a, b)| match (a, b) {
                (Some(x), Some(y)) => Some(x * y),
                _ => None,
            })
            .collect(),
        Transform::Lag { source, k, .. } => {
            if *k >= n_periods {
                return Err(Error::LagTooLong { k: *k, periods: n_periods });
            }
            let src = ds.column(source)?;
            let mut out = vec![None; src.len()];
            for e in 0..ds.n_entities() {
                let base = e * n_periods;
                for t_idx in *k..n_periods {
                    out[base + t_idx] = src[base + t_idx - k];
                }
            }
            out
        }
        Transform::FirstDifference { source, .. } => {
            let src = ds.column(source)?;
            let mut out = vec![None; src.len()];
            for e in 0..ds.n_entities() {
                let base = e * n_periods;
                for t_idx in 1..n_periods {
                    out[base + t_idx] = match (src[base + t_idx], src[base + t_idx - 1]) {
                        (Some(cur), Some(prev)) => Some(cur - prev),
                        _ => None,
                    };
                }
            }
            out
        }
    };
    let out = ds.with_column(t.output(), cells)?;
    Ok((out, warnings))
}
