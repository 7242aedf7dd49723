//! Anderson-Rubin test and confidence set by grid inversion.
//!
//! The AR regression of y − β₀·d on exogenous + FE + instruments is
//! evaluated through Frisch-Waugh partialling: y, d, and the excluded
//! instruments are residualized on the included regressors once, after which
//! every β₀ point costs O(n·q). The instrument-coefficient subvector and its
//! sandwich covariance from the partialled regression equal the full
//! regression's exactly, so the statistic is unchanged.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::regression::covariance::{compute_vcov, CovarianceSettings};
use crate::regression::lstsq::solve_least_squares;
use crate::regression::{Design, ModelSpec};

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ArTest {
    pub beta0: f64,
    /// Wald statistic in χ²/q form.
    pub statistic: f64,
    pub p_value: f64,
}

/// Search policy for the AR set inversion.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPolicy {
    /// Grid center; defaults to the 2SLS point estimate.
    pub center: Option<f64>,
    /// Initial half-width in standard-error units.
    pub half_width_se: f64,
    /// Grid points per pass; must be odd and ≥ 3 so the center is included.
    pub steps: usize,
    /// Multiplier applied to the half-width while a boundary still fails to
    /// reject.
    pub expansion_factor: f64,
    /// Half-width cap in standard-error units; non-rejection persisting at
    /// the cap marks the set unbounded on that side.
    pub max_half_width_se: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            center: None,
            half_width_se: 10.0,
            steps: 2001,
            expansion_factor: 4.0,
            max_half_width_se: 1e4,
        }
    }
}

impl GridPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 3 || self.steps % 2 == 0 {
            return Err(Error::GridPolicy(format!(
                "steps must be odd and >= 3, got {}",
                self.steps
            )));
        }
        if !(self.half_width_se > 0.0) {
            return Err(Error::GridPolicy("zero-width grid".into()));
        }
        if !self.max_half_width_se.is_finite() || self.max_half_width_se < self.half_width_se {
            return Err(Error::GridPolicy("expansion cap must be finite and >= the initial half-width".into()));
        }
        if self.expansion_factor <= 1.0 {
            return Err(Error::GridPolicy("expansion factor must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArSetKind {
    Empty,
    Bounded,
    Unbounded,
    Disjoint,
    WholeLine,
}

/// The non-rejection region of the AR test at a given level.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ArConfidenceSet {
    pub level: f64,
    /// Closed intervals; an infinite endpoint marks an unbounded tail.
    pub intervals: Vec<(f64, f64)>,
    pub kind: ArSetKind,
    pub unbounded_below: bool,
    pub unbounded_above: bool,
}

impl ArConfidenceSet {
    pub fn covers(&self, beta: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= beta && beta <= hi)
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self.kind, ArSetKind::Bounded | ArSetKind::Disjoint)
            && !self.unbounded_below
            && !self.unbounded_above
    }

    /// Total length of the bounded pieces; infinite if any tail is open.
    pub fn length(&self) -> f64 {
        self.intervals.iter().map(|&(lo, hi)| hi - lo).sum()
    }
}

/// Partialled AR regression, reusable across β₀ points.
pub struct ArProblem {
    /// Coefficients of ỹ and d̃ on Z̃.
    a_y: DVector<f64>,
    a_d: DVector<f64>,
    u_y: DVector<f64>,
    u_d: DVector<f64>,
    z_til: DMatrix<f64>,
    ztz_inv: DMatrix<f64>,
    /// Full AR-regression parameter count (absorbed FE + included + q).
    k_total: usize,
    dof_residual: usize,
    q: usize,
    cluster_ids: Vec<usize>,
    covariance: CovarianceSettings,
    z_names: Vec<String>,
}

impl ArProblem {
    pub fn build(spec: &ModelSpec, ds: &PanelDataset) -> Result<ArProblem> {
        spec.validate()?;
        if spec.endogenous.is_none() {
            return Err(Error::InvalidSpec("AR test requires an IV spec".into()));
        }
        let design = Design::build(spec, ds)?;
        let z = design.z.as_ref().expect("IV design has Z");
        let q = design.n_excluded;
        let z_excl = z.columns(0, q).into_owned();
        let w = z.columns(q, z.ncols() - q).into_owned();
        let w_names: Vec<String> = design.z_names[q..].to_vec();

        let y_til = super::residualize(&w, &design.y, &w_names)?;
        let d_col = design.x.column(0).into_owned();
        let d_til = super::residualize(&w, &d_col, &w_names)?;
        let z_til = super::residualize_matrix(&w, &z_excl, &w_names)?;

        let z_names: Vec<String> = design.z_names[..q].to_vec();
        let ls_y = solve_least_squares(&z_til, &y_til, &z_names)?;
        let ls_d = solve_least_squares(&z_til, &d_til, &z_names)?;

        let k_total = design.n_absorbed + z.ncols();
        let n = design.n_obs();
        if n <= k_total {
            return Err(Error::InsufficientObservations { n_obs: n, n_params: k_total });
        }
        Ok(ArProblem {
            a_y: ls_y.beta,
            a_d: ls_d.beta,
            u_y: ls_y.residuals,
            u_d: ls_d.residuals,
            ztz_inv: ls_y.xtx_inv,
            z_til,
            k_total,
            dof_residual: n - k_total,
            q,
            cluster_ids: design.cluster_ids,
            covariance: spec.covariance,
            z_names,
        })
    }

    /// AR statistic (χ²/q form) and p-value at one β₀.
    pub fn test(&self, beta0: f64) -> Result<ArTest> {
        let a = &self.a_y - &self.a_d * beta0;
        let u = &self.u_y - &self.u_d * beta0;
        let vcov = compute_vcov(
            &self.z_til,
            &self.ztz_inv,
            &u,
            self.k_total,
            &self.cluster_ids,
            &self.covariance,
        )?;
        let sol = vcov
            .lu()
            .solve(&a)
            .ok_or_else(|| Error::Collinear(self.z_names.clone()))?;
        let statistic = a.dot(&sol) / self.q as f64;
        let dist = FisherSnedecor::new(self.q as f64, self.dof_residual as f64)
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        Ok(ArTest {
            beta0,
            statistic,
            p_value: 1.0 - dist.cdf(statistic),
        })
    }
}

/// AR test of β = β₀ for one spec.
pub fn ar_test(spec: &ModelSpec, ds: &PanelDataset, beta0: f64) -> Result<ArTest> {
    ArProblem::build(spec, ds)?.test(beta0)
}

/// Inverts the AR test over a centered expanding grid. The level-L set is
/// every β₀ whose AR p-value exceeds 1 − L; endpoints are refined by
/// bisection to 1e-6 of a standard error.
pub fn ar_confidence_set(
    spec: &ModelSpec,
    ds: &PanelDataset,
    level: f64,
    grid: &GridPolicy,
) -> Result<ArConfidenceSet> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level must be in (0,1), got {level}")));
    }
    let problem = ArProblem::build(spec, ds)?;
    let (second, _first) = crate::regression::tsls_fit(spec, ds)?;
    let endog = spec.endogenous.as_deref().expect("IV spec");
    let center = grid
        .center
        .unwrap_or_else(|| second.coef(endog).expect("endogenous coefficient"));
    let se = second.std_error(endog).expect("endogenous se");
    invert(&problem, level, grid, center, se)
}

pub(crate) fn invert(
    problem: &ArProblem,
    level: f64,
    grid: &GridPolicy,
    center: f64,
    se: f64,
) -> Result<ArConfidenceSet> {
    grid.validate()?;
    if !(se > 0.0) || !se.is_finite() {
        return Err(Error::GridPolicy(format!("degenerate standard-error scale {se}")));
    }
    let alpha = 1.0 - level;
    let accept = |p: f64| p > alpha;

    let mut half_width = grid.half_width_se * se;
    let cap = grid.max_half_width_se * se;
    let (points, p_values, unbounded_below, unbounded_above) = loop {
        let step = 2.0 * half_width / (grid.steps - 1) as f64;
        let points: Vec<f64> = (0..grid.steps)
            .map(|i| center - half_width + i as f64 * step)
            .collect();
        let p_values: Vec<f64> = points
            .par_iter()
            .map(|&b| problem.test(b).map(|t| t.p_value))
            .collect::<Result<_>>()?;
        let open_left = accept(p_values[0]);
        let open_right = accept(*p_values.last().unwrap());
        if (!open_left && !open_right) || half_width >= cap {
            break (points, p_values, open_left, open_right);
        }
        half_width = (half_width * grid.expansion_factor).min(cap);
    };

    // Maximal runs of non-rejected points.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &p) in p_values.iter().enumerate() {
        match (accept(p), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, p_values.len() - 1));
    }

    if runs.is_empty() {
        return Ok(ArConfidenceSet {
            level,
            intervals: Vec::new(),
            kind: ArSetKind::Empty,
            unbounded_below: false,
            unbounded_above: false,
        });
    }

    let tol = 1e-6 * se;
    let bisect = |mut rejected: f64, mut accepted: f64| -> Result<f64> {
        while (rejected - accepted).abs() > tol {
            let mid = 0.5 * (rejected + accepted);
            if accept(problem.test(mid)?.p_value) {
                accepted = mid;
            } else {
                rejected = mid;
            }
        }
        Ok(accepted)
    };

    let mut intervals = Vec::with_capacity(runs.len());
    for &(s, e) in &runs {
        let lo = if s == 0 {
            if unbounded_below { f64::NEG_INFINITY } else { points[0] }
        } else {
            bisect(points[s - 1], points[s])?
        };
        let hi = if e == points.len() - 1 {
            if unbounded_above { f64::INFINITY } else { points[e] }
        } else {
            bisect(points[e + 1], points[e])?
        };
        intervals.push((lo, hi));
    }

    let whole_line = runs.len() == 1 && unbounded_below && unbounded_above
        && runs[0] == (0, points.len() - 1);
    let kind = if whole_line {
        ArSetKind::WholeLine
    } else if unbounded_below || unbounded_above {
        ArSetKind::Unbounded
    } else if intervals.len() > 1 {
        ArSetKind::Disjoint
    } else {
        ArSetKind::Bounded
    };

    Ok(ArConfidenceSet {
        level,
        intervals,
        kind,
        unbounded_below,
        unbounded_above,
    })
}
