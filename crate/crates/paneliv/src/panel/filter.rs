use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Sample selection for one estimation: a period window, an optional entity
/// allowlist (also how cluster-group subsamples are expressed), and the set
/// of variables over which listwise deletion applies.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct SampleFilter {
    /// Inclusive period window; `None` keeps all periods.
    pub period_range: Option<(i64, i64)>,
    pub entity_allowlist: Option<Vec<String>>,
    /// Label carried through to reports (e.g. an emission cluster name);
    /// membership itself is expressed through the allowlist.
    pub group_label: Option<String>,
    /// Listwise-completeness set: retained cells are non-missing for every
    /// variable listed here.
    pub completeness: Vec<String>,
}

impl SampleFilter {
    pub fn all() -> Self {
        SampleFilter::default()
    }

    pub fn with_completeness<I: IntoIterator<Item = String>>(mut self, vars: I) -> Self {
        self.completeness = vars.into_iter().collect();
        self
    }
}

/// The resolved row set after filtering and listwise deletion. Entities with
/// fewer than 2 retained periods are dropped (their within variation is
/// zero) and recorded in `dropped_singletons`.
#[derive(Debug, Clone)]
pub struct FilteredSample {
    /// Retained (entity_id, period_id) cells, entity-major order.
    rows: Vec<(usize, usize)>,
    /// Retained observation count per retained entity, in entity order.
    entity_counts: IndexMap<usize, usize>,
    /// Sorted distinct retained period ids.
    retained_periods: Vec<usize>,
    pub dropped_singletons: Vec<String>,
}

impl FilteredSample {
    pub fn build(ds: &PanelDataset, filter: &SampleFilter) -> Result<FilteredSample> {
        for var in &filter.completeness {
            if !ds.has_column(var) {
                return Err(Error::UnknownColumn(var.clone()));
            }
        }
        let allow: Option<Vec<usize>> = match &filter.entity_allowlist {
            Some(list) => {
                let mut ids = Vec::with_capacity(list.len());
                for e in list {
                    ids.push(
                        ds.entity_id(e)
                            .ok_or_else(|| Error::UnknownColumn(format!("entity `{e}`")))?,
                    );
                }
                Some(ids)
            }
            None => None,
        };
        let cols: Vec<&[Option<f64>]> = filter
            .completeness
            .iter()
            .map(|v| ds.column(v))
            .collect::<Result<_>>()?;

        let mut rows = Vec::new();
        let mut entity_counts: IndexMap<usize, usize> = IndexMap::new();
        for e in 0..ds.n_entities() {
            if let Some(allow) = &allow {
                if !allow.contains(&e) {
                    continue;
                }
            }
            for t in 0..ds.n_periods() {
                let period = ds.periods()[t];
                if let Some((lo, hi)) = filter.period_range {
                    if period < lo || period > hi {
                        continue;
                    }
                }
                let idx = ds.cell_index(e, t);
                if cols.iter().all(|c| c[idx].is_some()) {
                    rows.push((e, t));
                    *entity_counts.entry(e).or_insert(0) += 1;
                }
            }
        }

        // Drop singleton entities: a single retained period has no within
        // variation and would make the demeaned row identically zero.
        let singleton_ids: Vec<usize> = entity_counts
            .iter()
            .filter(|(_, &c)| c < 2)
            .map(|(&e, _)| e)
            .collect();
        let dropped_singletons: Vec<String> = singleton_ids
            .iter()
            .map(|&e| ds.entities()[e].clone())
            .collect();
        if !singleton_ids.is_empty() {
            rows.retain(|(e, _)| !singleton_ids.contains(e));
            for e in &singleton_ids {
                entity_counts.shift_remove(e);
            }
        }
        if rows.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut retained_periods: Vec<usize> = rows.iter().map(|&(_, t)| t).collect();
        retained_periods.sort_unstable();
        retained_periods.dedup();

        Ok(FilteredSample {
            rows,
            entity_counts,
            retained_periods,
            dropped_singletons,
        })
    }

    pub fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_entities(&self) -> usize {
        self.entity_counts.len()
    }

    pub fn entity_counts(&self) -> &IndexMap<usize, usize> {
        &self.entity_counts
    }

    pub fn retained_periods(&self) -> &[usize] {
        &self.retained_periods
    }

    /// Entity id per retained row, for cluster assignment.
    pub fn cluster_ids(&self) -> Vec<usize> {
        self.rows.iter().map(|&(e, _)| e).collect()
    }

    /// Raw (non-demeaned) values of one variable over the retained rows.
    /// Every retained cell must be non-missing for the variable.
    pub fn values(&self, ds: &PanelDataset, var: &str) -> Result<Vec<f64>> {
        let col = ds.column(var)?;
        self.rows
            .iter()
            .map(|&(e, t)| {
                col[ds.cell_index(e, t)].ok_or_else(|| {
                    Error::InvalidSpec(format!(
                        "variable `{var}` is missing inside the filtered sample; \
                         add it to the completeness set"
                    ))
                })
            })
            .collect()
    }
}

/// Subtracts per-entity means over the retained rows for each variable.
/// Output vectors align with `sample.rows()`.
pub fn within_demean(
    ds: &PanelDataset,
    vars: &[String],
    sample: &FilteredSample,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(vars.len());
    for var in vars {
        let raw = sample.values(ds, var)?;
        let mut sums: IndexMap<usize, f64> = IndexMap::new();
        for (&(e, _), v) in sample.rows().iter().zip(&raw) {
            *sums.entry(e).or_insert(0.0) += v;
        }
        let demeaned: Vec<f64> = sample
            .rows()
            .iter()
            .zip(&raw)
            .map(|(&(e, _), v)| v - sums[&e] / sample.entity_counts()[&e] as f64)
            .collect();
        out.push(demeaned);
    }
    Ok(out)
}

/// Drop-first period indicator block over the retained rows. Returns the
/// dummy period labels (all retained periods except the earliest) and one
/// 0/1 column per label.
pub fn time_dummies(
    ds: &PanelDataset,
    sample: &FilteredSample,
) -> Result<(Vec<i64>, Vec<Vec<f64>>)> {
    let retained = sample.retained_periods();
    if retained.len() < 2 {
        return Err(Error::NoTimeVariation);
    }
    let labels: Vec<i64> = retained[1..].iter().map(|&t| ds.periods()[t]).collect();
    let cols: Vec<Vec<f64>> = retained[1..]
        .iter()
        .map(|&t_dummy| {
            sample
                .rows()
                .iter()
                .map(|&(_, t)| if t == t_dummy { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    Ok((labels, cols))
}
