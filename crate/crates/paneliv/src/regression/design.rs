//! Assembly of estimation-ready design matrices from a spec and a dataset:
//! listwise filtering, within-demeaning, time dummies, intercept handling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::{time_dummies, within_demean, FilteredSample, PanelDataset};
use crate::regression::ModelSpec;

pub const INTERCEPT: &str = "const";

/// Within-demeaned instruments must keep this share of their raw sum of
/// squares to count as having within variation.
const WITHIN_VARIATION_TOL: f64 = 1e-14;

pub struct Design {
    /// (entity name, period) per retained row.
    pub row_keys: Vec<(String, i64)>,
    pub y: DVector<f64>,
    /// Structural regressors: [endogenous?, exogenous.., time dummies.., const?].
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    /// Instrument design [instruments.., exogenous.., time dummies.., const?],
    /// present when the spec has instruments.
    pub z: Option<DMatrix<f64>>,
    pub z_names: Vec<String>,
    /// Count of excluded-instrument columns (they lead in `z`).
    pub n_excluded: usize,
    pub n_entities: usize,
    /// Parameters absorbed by entity demeaning.
    pub n_absorbed: usize,
    /// Slope parameters (endogenous + exogenous), excluding dummies/constant.
    pub n_slopes: usize,
    pub cluster_ids: Vec<usize>,
    pub dropped_singletons: Vec<String>,
}

impl Design {
    pub fn build(spec: &ModelSpec, ds: &PanelDataset) -> Result<Design> {
        spec.validate()?;
        let vars = spec.all_variables();
        let mut filter = spec.filter.clone();
        filter.completeness = vars.clone();
        let sample = FilteredSample::build(ds, &filter)?;

        let columns: Vec<Vec<f64>> = if spec.fixed_effects.entity {
            within_demean(ds, &vars, &sample)?
        } else {
            vars.iter().map(|v| sample.values(ds, v)).collect::<Result<_>>()?
        };
        let col_of = |name: &str| -> &Vec<f64> {
            &columns[vars.iter().position(|v| v == name).unwrap()]
        };

        let n = sample.n_obs();
        let y = DVector::from_vec(col_of(&spec.dependent).clone());

        let mut names: Vec<String> = Vec::new();
        let mut x_cols: Vec<Vec<f64>> = Vec::new();
        if let Some(endog) = &spec.endogenous {
            names.push(endog.clone());
            x_cols.push(col_of(endog).clone());
        }
        for exog in &spec.exogenous {
            names.push(exog.clone());
            x_cols.push(col_of(exog).clone());
        }
        let n_slopes = names.len();

        let mut dummy_cols: Vec<Vec<f64>> = Vec::new();
        let mut dummy_names: Vec<String> = Vec::new();
        if spec.fixed_effects.time {
            let (labels, cols) = time_dummies(ds, &sample)?;
            for (label, col) in labels.into_iter().zip(cols) {
                dummy_names.push(format!("t{label}"));
                // Dummies are demeaned too when entity FE is on, so the
                // within fit matches LSDV exactly.
                if spec.fixed_effects.entity {
                    dummy_cols.push(demean_by_entity(&col, &sample));
                } else {
                    dummy_cols.push(col);
                }
            }
        }
        names.extend(dummy_names.iter().cloned());
        x_cols.extend(dummy_cols.iter().cloned());

        let with_intercept = !spec.fixed_effects.entity;
        if with_intercept {
            names.push(INTERCEPT.to_string());
            x_cols.push(vec![1.0; n]);
        }

        let x = matrix_from_cols(n, &x_cols);

        let (z, z_names, n_excluded) = if spec.instruments.is_empty() {
            (None, Vec::new(), 0)
        } else {
            let mut z_names: Vec<String> = Vec::new();
            let mut z_cols: Vec<Vec<f64>> = Vec::new();
            for inst in &spec.instruments {
                let col = col_of(inst).clone();
                let within_ss: f64 = col.iter().map(|v| v * v).sum();
                let raw_ss: f64 = sample
                    .values(ds, inst)?
                    .iter()
                    .map(|v| v * v)
                    .sum();
                if within_ss <= WITHIN_VARIATION_TOL * raw_ss.max(1e-300) {
                    return Err(Error::DegenerateInstrument(inst.clone()));
                }
                z_names.push(inst.clone());
                z_cols.push(col);
            }
            let n_excluded = z_cols.len();
            for exog in &spec.exogenous {
                z_names.push(exog.clone());
                z_cols.push(col_of(exog).clone());
            }
            z_names.extend(dummy_names.iter().cloned());
            z_cols.extend(dummy_cols.iter().cloned());
            if with_intercept {
                z_names.push(INTERCEPT.to_string());
                z_cols.push(vec![1.0; n]);
            }
            (Some(matrix_from_cols(n, &z_cols)), z_names, n_excluded)
        };

        let row_keys = sample
            .rows()
            .iter()
            .map(|&(e, t)| (ds.entities()[e].clone(), ds.periods()[t]))
            .collect();

        Ok(Design {
            row_keys,
            y,
            x,
            names,
            z,
            z_names,
            n_excluded,
            n_entities: sample.n_entities(),
            n_absorbed: if spec.fixed_effects.entity { sample.n_entities() } else { 0 },
            n_slopes,
            cluster_ids: sample.cluster_ids(),
            dropped_singletons: sample.dropped_singletons.clone(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// Total parameter count including absorbed entity effects.
    pub fn k_total(&self) -> usize {
        self.n_absorbed + self.x.ncols()
    }

    pub fn dof_residual(&self) -> usize {
        self.n_obs() - self.k_total()
    }

    /// 1 − SSR/TSS over the (demeaned) dependent variable.
    pub fn r_squared_within(&self, residuals: &DVector<f64>) -> f64 {
        let mean = self.y.mean();
        let tss: f64 = self.y.iter().map(|v| (v - mean) * (v - mean)).sum();
        if tss == 0.0 {
            return 0.0;
        }
        1.0 - residuals.dot(residuals) / tss
    }
}

fn demean_by_entity(col: &[f64], sample: &FilteredSample) -> Vec<f64> {
    let mut sums: indexmap::IndexMap<usize, f64> = indexmap::IndexMap::new();
    for (&(e, _), v) in sample.rows().iter().zip(col) {
        *sums.entry(e).or_insert(0.0) += v;
    }
    sample
        .rows()
        .iter()
        .zip(col)
        .map(|(&(e, _), v)| v - sums[&e] / sample.entity_counts()[&e] as f64)
        .collect()
}

fn matrix_from_cols(n: usize, cols: &[Vec<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}
