//! Fixed-effects OLS and two-stage least squares with robust covariance.

mod design;
pub mod covariance;
pub mod lstsq;
mod ols;
mod tsls;

pub use covariance::{CovarianceKind, CovarianceSettings};
pub use design::Design;
pub use ols::{fit_model, ols_fit};
pub use tsls::{just_identified_closed_form, tsls_fit};

use indexmap::IndexMap;
use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::panel::SampleFilter;

#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct FixedEffects {
    pub entity: bool,
    pub time: bool,
}

impl FixedEffects {
    pub fn both() -> Self {
        FixedEffects { entity: true, time: true }
    }
    pub fn none() -> Self {
        FixedEffects::default()
    }
}

/// Declarative description of one regression.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ModelSpec {
    pub dependent: String,
    /// Reporting order of the exogenous regressors.
    pub exogenous: Vec<String>,
    /// At most one endogenous regressor.
    pub endogenous: Option<String>,
    /// Excluded instruments.
    pub instruments: Vec<String>,
    pub fixed_effects: FixedEffects,
    pub covariance: CovarianceSettings,
    pub filter: SampleFilter,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.endogenous.is_some() && self.instruments.is_empty() {
            return Err(Error::InvalidSpec(
                "an endogenous regressor requires at least one instrument".into(),
            ));
        }
        if self.endogenous.is_none() && !self.instruments.is_empty() {
            return Err(Error::InvalidSpec(
                "instruments require an endogenous regressor".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        let mut roles: Vec<&String> = vec![&self.dependent];
        roles.extend(self.exogenous.iter());
        if let Some(e) = &self.endogenous {
            roles.push(e);
        }
        roles.extend(self.instruments.iter());
        for name in roles {
            if !seen.insert(name) {
                return Err(Error::InvalidSpec(format!(
                    "`{name}` appears in more than one role"
                )));
            }
        }
        Ok(())
    }

    /// Every variable the spec touches; listwise deletion runs over this set.
    pub fn all_variables(&self) -> Vec<String> {
        let mut vars = vec![self.dependent.clone()];
        vars.extend(self.exogenous.iter().cloned());
        if let Some(e) = &self.endogenous {
            vars.push(e.clone());
        }
        vars.extend(self.instruments.iter().cloned());
        for extra in &self.filter.completeness {
            if !vars.contains(extra) {
                vars.push(extra.clone());
            }
        }
        vars
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorTag {
    FeOls,
    FeTsls,
    FirstStage,
}

impl std::fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorTag::FeOls => write!(f, "FE-OLS"),
            EstimatorTag::FeTsls => write!(f, "FE-2SLS"),
            EstimatorTag::FirstStage => write!(f, "first-stage"),
        }
    }
}

/// One estimated model: point estimates, covariance, fit statistics, and an
/// optional diagnostics bundle filled in by the diagnostics module.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub coefficients: IndexMap<String, f64>,
    /// Symmetric PSD covariance over the reported coefficients, in
    /// `coefficients` order.
    pub vcov: DMatrix<f64>,
    pub n_obs: usize,
    pub n_entities: usize,
    pub dof_model: usize,
    pub dof_residual: usize,
    pub r_squared_within: f64,
    /// Residuals keyed by (entity, period).
    pub residuals: Vec<((String, i64), f64)>,
    pub estimator_tag: EstimatorTag,
    pub diagnostics: Option<crate::diagnostics::DiagnosticsBundle>,
}

impl EstimationResult {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.coefficients.get(name).copied()
    }

    pub fn coef_index(&self, name: &str) -> Option<usize> {
        self.coefficients.get_index_of(name)
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.coef_index(name)?;
        Some(self.vcov[(i, i)].sqrt())
    }

    pub fn t_stat(&self, name: &str) -> Option<f64> {
        Some(self.coef(name)? / self.std_error(name)?)
    }

    /// Two-sided p-value from the t distribution with `dof_residual`.
    pub fn p_value(&self, name: &str) -> Option<f64> {
        let t = self.t_stat(name)?;
        let dist = StudentsT::new(0.0, 1.0, self.dof_residual as f64).ok()?;
        Some(2.0 * (1.0 - dist.cdf(t.abs())))
    }
}
