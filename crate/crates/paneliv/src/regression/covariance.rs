//! Classical, HC1, and cluster-robust sandwich covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Classical,
    RobustHc1,
    ClusterEntity,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct CovarianceSettings {
    pub kind: CovarianceKind,
    /// Apply the finite-sample factors (n/(n−k) for HC1,
    /// G/(G−1)·(n−1)/(n−k) for clusters). On by default.
    pub small_sample: bool,
}

impl Default for CovarianceSettings {
    fn default() -> Self {
        CovarianceSettings { kind: CovarianceKind::RobustHc1, small_sample: true }
    }
}

impl CovarianceSettings {
    pub fn classical() -> Self {
        CovarianceSettings { kind: CovarianceKind::Classical, small_sample: true }
    }
    pub fn hc1() -> Self {
        CovarianceSettings { kind: CovarianceKind::RobustHc1, small_sample: true }
    }
    pub fn cluster() -> Self {
        CovarianceSettings { kind: CovarianceKind::ClusterEntity, small_sample: true }
    }
}

/// Sandwich covariance of the coefficient vector.
///
/// `bread_x` are the regressors whose cross-product inverse is `xtx_inv`
/// (for 2SLS these are the first-stage fitted regressors), `residuals` the
/// structural residuals, and `k_total` the full parameter count including
/// absorbed fixed effects; `dof_residual = n − k_total`.
pub fn compute_vcov(
    bread_x: &DMatrix<f64>,
    xtx_inv: &DMatrix<f64>,
    residuals: &DVector<f64>,
    k_total: usize,
    cluster_ids: &[usize],
    settings: &CovarianceSettings,
) -> Result<DMatrix<f64>> {
    let n = bread_x.nrows();
    let k = bread_x.ncols();
    assert!(n > k_total, "dof accounting requires n > k_total");
    let dof_residual = n - k_total;

    match settings.kind {
        CovarianceKind::Classical => {
            let sigma2 = residuals.dot(residuals) / dof_residual as f64;
            Ok(xtx_inv * sigma2)
        }
        CovarianceKind::RobustHc1 => {
            let mut meat = DMatrix::zeros(k, k);
            for i in 0..n {
                let e2 = residuals[i] * residuals[i];
                let xi = bread_x.row(i).transpose();
                meat.ger(e2, &xi, &xi, 1.0);
            }
            let factor = if settings.small_sample {
                n as f64 / dof_residual as f64
            } else {
                1.0
            };
            Ok(xtx_inv * meat * xtx_inv * factor)
        }
        CovarianceKind::ClusterEntity => {
            let n_clusters = {
                let mut ids: Vec<usize> = cluster_ids.to_vec();
                ids.sort_unstable();
                ids.dedup();
                ids.len()
            };
            if n_clusters < 2 {
                return Err(Error::DegenerateCluster(n_clusters));
            }
            assert_eq!(cluster_ids.len(), n, "one cluster id per observation");
            let mut scores: std::collections::BTreeMap<usize, DVector<f64>> =
                std::collections::BTreeMap::new();
            for i in 0..n {
                let s = scores
                    .entry(cluster_ids[i])
                    .or_insert_with(|| DVector::zeros(k));
                *s += bread_x.row(i).transpose() * residuals[i];
            }
            let mut meat = DMatrix::zeros(k, k);
            for s in scores.values() {
                meat.ger(1.0, s, s, 1.0);
            }
            let factor = if settings.small_sample {
                let g = n_clusters as f64;
                g / (g - 1.0) * (n as f64 - 1.0) / dof_residual as f64
            } else {
                1.0
            };
            Ok(xtx_inv * meat * xtx_inv * factor)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::lstsq::solve_least_squares;

    fn fixture(n: usize, k: usize) -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(n, k, |i, j| {
            if j == 0 { 1.0 } else { ((i * 13 + j * 7) % 9) as f64 - 4.0 }
        });
        let y = DVector::from_fn(n, |i, _| ((i * 5) % 7) as f64 * 0.5);
        (x, y)
    }

    #[test]
    fn hc1_with_equal_residuals_matches_classical() {
        // Degenerate homoskedastic case: residuals all equal in magnitude
        // make the HC meat equal sigma² XᵀX, so HC0 == classical up to the
        // df factor n/(n-k) vs n-k denominators.
        let n = 10;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i % 2) as f64 });
        // Construct y so residuals are +-c exactly: y = x*0 + e with e alternating.
        let y = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let names = vec!["a".to_string(), "b".to_string()];
        let ls = solve_least_squares(&x, &y, &names).unwrap();
        assert!(ls.residuals.iter().all(|e| (e.abs() - ls.residuals[0].abs()).abs() < 1e-12));
        let classical = compute_vcov(&x, &ls.xtx_inv, &ls.residuals, 2, &[], &CovarianceSettings::classical()).unwrap();
        let hc1 = compute_vcov(&x, &ls.xtx_inv, &ls.residuals, 2, &[], &CovarianceSettings::hc1()).unwrap();
        // classical: e'e/(n-k) (X'X)^-1 ; HC1: n/(n-k) (X'X)^-1 X'diag(e²)X (X'X)^-1
        // with |e| constant both equal c²·n/(n-k)·(X'X)^{-1}.
        assert!((classical - hc1).amax() < 1e-10);
    }

    #[test]
    fn singleton_clusters_match_hc1_up_to_factor() {
        let (x, y) = fixture(12, 3);
        let names: Vec<String> = (0..3).map(|i| format!("x{i}")).collect();
        let ls = solve_least_squares(&x, &y, &names).unwrap();
        let ids: Vec<usize> = (0..12).collect();
        let clustered = compute_vcov(&x, &ls.xtx_inv, &ls.residuals, 3, &ids, &CovarianceSettings::cluster()).unwrap();
        let hc1 = compute_vcov(&x, &ls.xtx_inv, &ls.residuals, 3, &ids, &CovarianceSettings::hc1()).unwrap();
        // Every observation its own cluster: meats coincide; the factors are
        // n/(n-1)·(n-1)/(n-k) = n/(n-k) for clusters vs n/(n-k) for HC1.
        assert!((clustered - hc1).amax() < 1e-12);
    }

    #[test]
    fn duplicated_clusters_double_the_hc0_sandwich() {
        let (x, y) = fixture(6, 2);
        let names: Vec<String> = (0..2).map(|i| format!("x{i}")).collect();
        // Duplicate the data into two identical clusters.
        let mut x2 = DMatrix::zeros(12, 2);
        let mut y2 = DVector::zeros(12);
        for i in 0..6 {
            for j in 0..2 {
                x2[(i, j)] = x[(i, j)];
                x2[(i + 6, j)] = x[(i, j)];
            }
            y2[i] = y[i];
            y2[i + 6] = y[i];
        }
        let ls2 = solve_least_squares(&x2, &y2, &names).unwrap();
        let ids: Vec<usize> = (0..12).map(|i| i / 6).collect();
        let no_ss = CovarianceSettings { kind: CovarianceKind::ClusterEntity, small_sample: false };
        let clustered = compute_vcov(&x2, &ls2.xtx_inv, &ls2.residuals, 2, &ids, &no_ss).unwrap();
        // Single-copy HC0 sandwich on the original data.
        let ls1 = solve_least_squares(&x, &y, &names).unwrap();
        let hc0_settings = CovarianceSettings { kind: CovarianceKind::RobustHc1, small_sample: false };
        let hc0 = compute_vcov(&x, &ls1.xtx_inv, &ls1.residuals, 2, &[], &hc0_settings).unwrap();
        // With duplicated data, each cluster score is X'e of one copy; the
        // duplicated bread is (2X'X)^{-1}. Meat = 2·(X'e outer). Direct
        // algebra: V_clustered = 1/2 · (X'X)^{-1}(X'ee'X)(X'X)^{-1}.
        // Compare against that closed form.
        let e = &ls1.residuals;
        let score = x.transpose() * e;
        let outer = &score * score.transpose();
        let expected = &ls1.xtx_inv * outer * &ls1.xtx_inv * 0.5;
        assert!((clustered.clone() - expected).amax() < 1e-10);
        // Sanity: the HC0 single-copy sandwich exists and is PSD-scaled kin.
        assert!(hc0[(0, 0)] >= 0.0);
    }

    #[test]
    fn one_observation_cluster_is_valid() {
        let (x, y) = fixture(12, 2);
        let names: Vec<String> = (0..2).map(|i| format!("x{i}")).collect();
        let ls = solve_least_squares(&x, &y, &names).unwrap();
        let mut ids: Vec<usize> = vec![0; 12];
        for (i, id) in ids.iter_mut().enumerate().skip(1) {
            *id = 1 + (i - 1) / 6;
        }
        // Cluster 0 has a single observation.
        let v = compute_vcov(&x, &ls.xtx_inv, &ls.residuals, 2, &ids, &CovarianceSettings::cluster()).unwrap();
        assert!(v[(0, 0)].is_finite());
    }

    #[test]
    fn single_cluster_errors() {
        let (x, y) = fixture(8, 2);
        let names: Vec<String> = (0..2).map(|i| format!("x{i}")).collect();
        let ls = solve_least_squares(&x, &y, &names).unwrap();
        let ids = vec![0usize; 8];
        assert!(matches!(
            compute_vcov(&x, &ls.xtx_inv, &ls.residuals, 2, &ids, &CovarianceSettings::cluster()),
            Err(Error::DegenerateCluster(1))
        ));
    }
}
