//! Weak-instrument and identification diagnostics.
//!
//! The rank-type statistics are implemented through their single-endogenous
//! equivalences: the robust Wald F of the excluded instruments in the first
//! stage, and the robust score (LM) test of the same exclusion. General
//! reduced-rank statistics for multiple endogenous regressors are out of
//! scope and rejected with an explicit error.

mod ar;

pub use ar::{
    ar_confidence_set, ar_test, ArConfidenceSet, ArProblem, ArSetKind, ArTest, GridPolicy,
};
pub(crate) use ar::invert as invert_for_experiment;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::regression::covariance::CovarianceKind;
use crate::regression::{Design, EstimationResult, ModelSpec};

#[derive(Debug, Clone, serde::Serialize)]
pub struct FStat {
    pub statistic: f64,
    pub dof_num: usize,
    pub dof_den: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LmStat {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Everything the reporting footer needs for one IV estimation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DiagnosticsBundle {
    pub first_stage_f: FStat,
    pub underid_lm: LmStat,
    /// AR test of the paper's null β = 0.
    pub ar_at_zero: ArTest,
    pub ar_confidence_set: ArConfidenceSet,
}

/// Robust Wald F for joint nullity of the excluded-instrument coefficients
/// in the first stage, divided by the number of restrictions.
pub fn first_stage_f(first_stage: &EstimationResult, excluded: &[String]) -> Result<FStat> {
    if excluded.is_empty() {
        return Err(Error::InvalidSpec("no excluded instruments named".into()));
    }
    let idx: Vec<usize> = excluded
        .iter()
        .map(|name| {
            first_stage
                .coef_index(name)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))
        })
        .collect::<Result<_>>()?;
    let q = idx.len();
    let b = DVector::from_iterator(q, idx.iter().map(|&i| first_stage.coefficients[i]));
    let mut v = DMatrix::zeros(q, q);
    for (a, &ia) in idx.iter().enumerate() {
        for (c, &ic) in idx.iter().enumerate() {
            v[(a, c)] = first_stage.vcov[(ia, ic)];
        }
    }
    let v_inv = v
        .try_inverse()
        .ok_or_else(|| Error::Collinear(excluded.to_vec()))?;
    let wald = (b.transpose() * v_inv * &b)[(0, 0)];
    let statistic = wald / q as f64;
    let dof_den = first_stage.dof_residual;
    let dist = FisherSnedecor::new(q as f64, dof_den as f64)
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    Ok(FStat {
        statistic,
        dof_num: q,
        dof_den,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Score (LM) test of joint significance of the excluded instruments in the
/// first stage. Classical covariance yields the textbook n·R²-partial form;
/// robust and cluster covariance use the sandwich score variance.
pub fn underid_lm(spec: &ModelSpec, ds: &PanelDataset) -> Result<LmStat> {
    spec.validate()?;
    if spec.endogenous.is_none() {
        return Err(Error::Unsupported(
            "under-identification LM requires an IV spec".into(),
        ));
    }
    let design = Design::build(spec, ds)?;
    let z = design.z.as_ref().expect("IV design has Z");
    let q = design.n_excluded;
    let n = design.n_obs();

    let z_excl = z.columns(0, q).into_owned();
    let w = z.columns(q, z.ncols() - q).into_owned();
    let w_names: Vec<String> = design.z_names[q..].to_vec();

    let endog = design.x.column(0).into_owned();
    let d_til = residualize(&w, &endog, &w_names)?;
    let z_til = residualize_matrix(&w, &z_excl, &w_names)?;

    let score = z_til.transpose() * &d_til;
    let statistic = match spec.covariance.kind {
        CovarianceKind::Classical => {
            // n · uncentered partial R² of d̃ on Z̃.
            let ztz = z_til.transpose() * &z_til;
            let sol = ztz
                .lu()
                .solve(&score)
                .ok_or_else(|| Error::Collinear(design.z_names[..q].to_vec()))?;
            let explained = score.dot(&sol);
            let total = d_til.dot(&d_til);
            n as f64 * explained / total
        }
        CovarianceKind::RobustHc1 => {
            let mut meat = DMatrix::zeros(q, q);
            for i in 0..n {
                let e2 = d_til[i] * d_til[i];
                let zi = z_til.row(i).transpose();
                meat.ger(e2, &zi, &zi, 1.0);
            }
            // Same small-sample inflation as HC1: projection shrinks the
            // squared residuals by (n−k)/n on average, which would otherwise
            // oversize the test.
            if spec.covariance.small_sample {
                let k = design.n_absorbed + z.ncols();
                meat *= n as f64 / (n - k) as f64;
            }
            score_quadratic(&score, &meat, &design.z_names[..q])?
        }
        CovarianceKind::ClusterEntity => {
            let mut scores: std::collections::BTreeMap<usize, DVector<f64>> =
                std::collections::BTreeMap::new();
            for i in 0..n {
                let s = scores
                    .entry(design.cluster_ids[i])
                    .or_insert_with(|| DVector::zeros(q));
                *s += z_til.row(i).transpose() * d_til[i];
            }
            if scores.len() < 2 {
                return Err(Error::DegenerateCluster(scores.len()));
            }
            let mut meat = DMatrix::zeros(q, q);
            for s in scores.values() {
                meat.ger(1.0, s, s, 1.0);
            }
            // Cluster analog of the HC1 inflation, as in the covariance path.
            if spec.covariance.small_sample {
                let g = scores.len() as f64;
                let k = design.n_absorbed + z.ncols();
                meat *= (g / (g - 1.0)) * ((n as f64 - 1.0) / (n - k) as f64);
            }
            score_quadratic(&score, &meat, &design.z_names[..q])?
        }
    };
    let dist =
        ChiSquared::new(q as f64).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    Ok(LmStat {
        statistic,
        dof: q,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Runs the full diagnostics set for one IV spec.
pub fn compute_bundle(
    spec: &ModelSpec,
    ds: &PanelDataset,
    level: f64,
    grid: &GridPolicy,
) -> Result<DiagnosticsBundle> {
    let (second, first) = crate::regression::tsls_fit(spec, ds)?;
    let f = first_stage_f(&first, &spec.instruments)?;
    let lm = underid_lm(spec, ds)?;
    let problem = ArProblem::build(spec, ds)?;
    let ar_zero = problem.test(0.0)?;
    let endog = spec.endogenous.as_deref().expect("IV spec");
    let center = second.coef(endog).expect("endogenous coefficient");
    let se = second.std_error(endog).expect("endogenous se");
    let set = ar::invert(&problem, level, grid, center, se)?;
    Ok(DiagnosticsBundle {
        first_stage_f: f,
        underid_lm: lm,
        ar_at_zero: ar_zero,
        ar_confidence_set: set,
    })
}

fn score_quadratic(score: &DVector<f64>, meat: &DMatrix<f64>, names: &[String]) -> Result<f64> {
    let sol = meat
        .clone()
        .lu()
        .solve(score)
        .ok_or_else(|| Error::Collinear(names.to_vec()))?;
    Ok(score.dot(&sol))
}

pub(crate) fn residualize(
    w: &DMatrix<f64>,
    v: &DVector<f64>,
    w_names: &[String],
) -> Result<DVector<f64>> {
    if w.ncols() == 0 {
        return Ok(v.clone());
    }
    let ls = crate::regression::lstsq::solve_least_squares(w, v, w_names)?;
    Ok(ls.residuals)
}

pub(crate) fn residualize_matrix(
    w: &DMatrix<f64>,
    m: &DMatrix<f64>,
    w_names: &[String],
) -> Result<DMatrix<f64>> {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let col = m.column(j).into_owned();
        let res = residualize(w, &col, w_names)?;
        out.set_column(j, &res);
    }
    Ok(out)
}
