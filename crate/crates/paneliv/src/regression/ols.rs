use indexmap::IndexMap;

use crate::error::Result;
use crate::panel::PanelDataset;
use crate::regression::covariance::{compute_vcov, CovarianceSettings};
use crate::regression::design::Design;
use crate::regression::lstsq::solve_least_squares;
use crate::regression::{EstimationResult, EstimatorTag, ModelSpec};

/// Least-squares fit of an already-assembled design.
pub fn ols_fit(design: &Design, cov: &CovarianceSettings) -> Result<EstimationResult> {
    let ls = solve_least_squares(&design.x, &design.y, &design.names)?;
    let vcov = compute_vcov(
        &design.x,
        &ls.xtx_inv,
        &ls.residuals,
        design.k_total(),
        &design.cluster_ids,
        cov,
    )?;
    let coefficients: IndexMap<String, f64> = design
        .names
        .iter()
        .cloned()
        .zip(ls.beta.iter().copied())
        .collect();
    let residuals = design
        .row_keys
        .iter()
        .cloned()
        .zip(ls.residuals.iter().copied())
        .collect();
    Ok(EstimationResult {
        coefficients,
        vcov,
        n_obs: design.n_obs(),
        n_entities: design.n_entities,
        dof_model: design.n_slopes,
        dof_residual: design.dof_residual(),
        r_squared_within: design.r_squared_within(&ls.residuals),
        residuals,
        estimator_tag: EstimatorTag::FeOls,
        diagnostics: None,
    })
}

/// Builds the design from a spec without instruments and runs OLS.
pub fn fit_model(spec: &ModelSpec, ds: &PanelDataset) -> Result<EstimationResult> {
    let design = Design::build(spec, ds)?;
    ols_fit(&design, &spec.covariance)
}
