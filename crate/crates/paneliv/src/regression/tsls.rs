use indexmap::IndexMap;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::regression::covariance::compute_vcov;
use crate::regression::design::Design;
use crate::regression::lstsq::solve_least_squares;
use crate::regression::{EstimationResult, EstimatorTag, ModelSpec};

/// Two-stage least squares with a single endogenous regressor.
///
/// Returns (second stage, first stage). The second-stage covariance uses
/// residuals computed with the original endogenous column, not the fitted
/// values (the standard 2SLS correction).
pub fn tsls_fit(
    spec: &ModelSpec,
    ds: &PanelDataset,
) -> Result<(EstimationResult, EstimationResult)> {
    spec.validate()?;
    let endog_name = spec
        .endogenous
        .clone()
        .ok_or_else(|| Error::InvalidSpec("tsls_fit requires an endogenous regressor".into()))?;
    let design = Design::build(spec, ds)?;
    let z = design.z.as_ref().expect("instrumented design has Z");

    // First stage: endogenous on instruments + exogenous + dummies.
    let endog_col = design.x.column(0).into_owned();
    let fs = solve_least_squares(z, &endog_col, &design.z_names)?;
    let fs_k_total = design.n_absorbed + z.ncols();
    if design.n_obs() <= fs_k_total {
        return Err(Error::InsufficientObservations {
            n_obs: design.n_obs(),
            n_params: fs_k_total,
        });
    }
    let fs_vcov = compute_vcov(
        z,
        &fs.xtx_inv,
        &fs.residuals,
        fs_k_total,
        &design.cluster_ids,
        &spec.covariance,
    )?;
    let first_stage = EstimationResult {
        coefficients: design
            .z_names
            .iter()
            .cloned()
            .zip(fs.beta.iter().copied())
            .collect(),
        vcov: fs_vcov,
        n_obs: design.n_obs(),
        n_entities: design.n_entities,
        dof_model: design.n_excluded + spec.exogenous.len(),
        dof_residual: design.n_obs() - fs_k_total,
        r_squared_within: {
            let mean = endog_col.mean();
            let tss: f64 = endog_col.iter().map(|v| (v - mean) * (v - mean)).sum();
            if tss == 0.0 { 0.0 } else { 1.0 - fs.residuals.dot(&fs.residuals) / tss }
        },
        residuals: design
            .row_keys
            .iter()
            .cloned()
            .zip(fs.residuals.iter().copied())
            .collect(),
        estimator_tag: EstimatorTag::FirstStage,
        diagnostics: None,
    };

    // Second stage on [fitted endogenous, exogenous, dummies, const?].
    let mut x_hat = design.x.clone();
    x_hat.set_column(0, &fs.fitted);
    let ss = solve_least_squares(&x_hat, &design.y, &design.names)?;

    // Structural residuals with the ORIGINAL endogenous column.
    let residuals = &design.y - &design.x * &ss.beta;

    let vcov = compute_vcov(
        &x_hat,
        &ss.xtx_inv,
        &residuals,
        design.k_total(),
        &design.cluster_ids,
        &spec.covariance,
    )?;

    let coefficients: IndexMap<String, f64> = design
        .names
        .iter()
        .cloned()
        .zip(ss.beta.iter().copied())
        .collect();
    debug_assert_eq!(design.names[0], endog_name);
    let second_stage = EstimationResult {
        coefficients,
        vcov,
        n_obs: design.n_obs(),
        n_entities: design.n_entities,
        dof_model: design.n_slopes,
        dof_residual: design.dof_residual(),
        r_squared_within: design.r_squared_within(&residuals),
        residuals: design
            .row_keys
            .iter()
            .cloned()
            .zip(residuals.iter().copied())
            .collect(),
        estimator_tag: EstimatorTag::FeTsls,
        diagnostics: None,
    };
    Ok((second_stage, first_stage))
}

/// Just-identified closed form (Z̃ᵀX̃)⁻¹Z̃ᵀỹ, exposed for oracle checks.
pub fn just_identified_closed_form(design: &Design) -> Result<nalgebra::DVector<f64>> {
    let z = design
        .z
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("closed form requires instruments".into()))?;
    if z.ncols() != design.x.ncols() {
        return Err(Error::InvalidSpec(
            "closed form requires exact identification".into(),
        ));
    }
    let ztx: DMatrix<f64> = z.transpose() * &design.x;
    let zty = z.transpose() * &design.y;
    ztx.lu()
        .solve(&zty)
        .ok_or_else(|| Error::Collinear(design.z_names.clone()))
}
