//! Shared fixture generators and independent reference computations for the
//! integration suites. Everything here deliberately avoids the library's own
//! design/solver path so comparisons are real oracles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use paneliv::panel::PanelDataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).unwrap().sample(rng)
}

/// Small random panel with outcome `y` and regressors `x1`, `x2` over entity
/// and time effects. With `with_missing`, at most one cell per entity is
/// knocked out (never dropping an entity below 2 observations).
pub fn small_random_panel(
    rng: &mut ChaCha8Rng,
    n_entities: usize,
    n_periods: usize,
    with_missing: bool,
) -> PanelDataset {
    let entities: Vec<String> = (0..n_entities).map(|i| format!("E{i}")).collect();
    let periods: Vec<i64> = (2000..2000 + n_periods as i64).collect();
    let mut ds = PanelDataset::new(entities, periods);
    let a: Vec<f64> = (0..n_entities).map(|_| normal(rng)).collect();
    let g: Vec<f64> = (0..n_periods).map(|_| normal(rng)).collect();
    let cells = n_entities * n_periods;
    let mut x1 = Vec::with_capacity(cells);
    let mut x2 = Vec::with_capacity(cells);
    let mut y = Vec::with_capacity(cells);
    for i in 0..n_entities {
        let gap = if with_missing && n_periods >= 3 {
            Some(rng.random_range(0..n_periods))
        } else {
            None
        };
        for t in 0..n_periods {
            if gap == Some(t) {
                x1.push(None);
                x2.push(None);
                y.push(None);
                continue;
            }
            let v1 = normal(rng);
            let v2 = normal(rng);
            let out = 1.5 * v1 - 0.7 * v2 + a[i] + g[t] + 0.5 * normal(rng);
            x1.push(Some(v1));
            x2.push(Some(v2));
            y.push(Some(out));
        }
    }
    ds.add_column("x1", x1).unwrap();
    ds.add_column("x2", x2).unwrap();
    ds.add_column("y", y).unwrap();
    ds
}

/// Complete random panel with a confounded endogenous regressor `d`, an
/// exogenous control `w`, an instrument `z`, and outcome `y`.
pub fn iv_random_panel(rng: &mut ChaCha8Rng, n_entities: usize, n_periods: usize) -> PanelDataset {
    let entities: Vec<String> = (0..n_entities).map(|i| format!("E{i}")).collect();
    let periods: Vec<i64> = (0..n_periods as i64).collect();
    let mut ds = PanelDataset::new(entities, periods);
    let a_d: Vec<f64> = (0..n_entities).map(|_| normal(rng)).collect();
    let a_y: Vec<f64> = (0..n_entities).map(|_| normal(rng)).collect();
    let g_d: Vec<f64> = (0..n_periods).map(|_| normal(rng)).collect();
    let g_y: Vec<f64> = (0..n_periods).map(|_| normal(rng)).collect();
    let cells = n_entities * n_periods;
    let mut z = Vec::with_capacity(cells);
    let mut w = Vec::with_capacity(cells);
    let mut d = Vec::with_capacity(cells);
    let mut y = Vec::with_capacity(cells);
    for i in 0..n_entities {
        for t in 0..n_periods {
            let zi = 3.0 * normal(rng);
            let wi = normal(rng);
            let ci = normal(rng);
            let di = 0.8 * zi + 0.5 * ci + 0.3 * wi + a_d[i] + g_d[t] + normal(rng);
            let yi = 0.5 * di + wi + ci + a_y[i] + g_y[t] + normal(rng);
            z.push(Some(zi));
            w.push(Some(wi));
            d.push(Some(di));
            y.push(Some(yi));
        }
    }
    ds.add_column("z", z).unwrap();
    ds.add_column("w", w).unwrap();
    ds.add_column("d", d).unwrap();
    ds.add_column("y", y).unwrap();
    ds
}

/// OLS via explicit normal equations — independent of the library's QR path.
pub fn solve_normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    xtx.lu().solve(&xty).expect("oracle design is full rank")
}

/// Subtracts per-entity means from one row-aligned column.
pub fn demean_rows(values: &[f64], entity_of_row: &[usize], n_entities: usize) -> Vec<f64> {
    let mut sums = vec![0.0; n_entities];
    let mut counts = vec![0usize; n_entities];
    for (&e, v) in entity_of_row.iter().zip(values) {
        sums[e] += v;
        counts[e] += 1;
    }
    entity_of_row
        .iter()
        .zip(values)
        .map(|(&e, v)| v - sums[e] / counts[e] as f64)
        .collect()
}

/// The listwise-complete rows of a panel over the named variables, as
/// (entity_id, period_id, values-in-variable-order), entity-major.
pub fn complete_rows(
    ds: &PanelDataset,
    vars: &[&str],
) -> Vec<(usize, usize, Vec<f64>)> {
    let cols: Vec<&[Option<f64>]> = vars.iter().map(|v| ds.column(v).unwrap()).collect();
    let mut rows = Vec::new();
    for e in 0..ds.n_entities() {
        for t in 0..ds.n_periods() {
            let idx = ds.cell_index(e, t);
            if cols.iter().all(|c| c[idx].is_some()) {
                rows.push((e, t, cols.iter().map(|c| c[idx].unwrap()).collect()));
            }
        }
    }
    rows
}
