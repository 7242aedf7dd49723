//! Construction of the liquidity-exposure instrument: inverse-distance
//! neighbor weights over a financial-openness panel, time-averaged per
//! entity, interacted with a global interest-rate series, giving
//! z_{i,t} = rate_t × openness-bar_i.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Symmetric pairwise distances in kilometers; diagonal is 0, off-diagonal
/// strictly positive.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    entities: Vec<String>,
    dist: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(entities: Vec<String>, dist: DMatrix<f64>) -> Result<DistanceMatrix> {
        let n = entities.len();
        if dist.nrows() != n || dist.ncols() != n {
            return Err(Error::DistanceData("matrix shape does not match entity list".into()));
        }
        for i in 0..n {
            if dist[(i, i)] != 0.0 {
                return Err(Error::DistanceData(format!(
                    "nonzero self-distance for `{}`",
                    entities[i]
                )));
            }
            for j in 0..n {
                if i != j {
                    let d = dist[(i, j)];
                    if !(d > 0.0) {
                        return Err(Error::DistanceData(format!(
                            "distance between `{}` and `{}` must be positive, got {d}",
                            entities[i], entities[j]
                        )));
                    }
                    let rel = (dist[(i, j)] - dist[(j, i)]).abs() / dist[(i, j)].abs();
                    if rel > 1e-9 {
                        return Err(Error::DistanceData(format!(
                            "asymmetry between `{}` and `{}`",
                            entities[i], entities[j]
                        )));
                    }
                }
            }
        }
        Ok(DistanceMatrix { entities, dist })
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[(i, j)]
    }

    pub fn entity_id(&self, entity: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == entity)
    }

    /// Loads undirected pair rows (entity_a, entity_b, distance_km).
    /// Repeated pairs, in either orientation, are rejected.
    pub fn from_csv_path(path: &Path) -> Result<DistanceMatrix> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<DistanceMatrix> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut pairs: BTreeMap<(String, String), f64> = BTreeMap::new();
        let mut names: Vec<String> = Vec::new();
        for (row_no, record) in rdr.records().enumerate() {
            let line = row_no as u64 + 2;
            let record = record.map_err(|e| Error::CsvParse { line, msg: e.to_string() })?;
            let a = record.get(0).unwrap_or("").trim().to_string();
            let b = record.get(1).unwrap_or("").trim().to_string();
            let raw = record.get(2).unwrap_or("").trim();
            let d: f64 = raw.parse().map_err(|_| Error::CellType {
                column: "distance_km".into(),
                row: line,
                value: raw.to_string(),
            })?;
            if a == b {
                return Err(Error::DistanceData(format!("self-pair for `{a}` at line {line}")));
            }
            let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            if pairs.insert(key, d).is_some() {
                return Err(Error::DistanceData(format!(
                    "duplicate pair ({a}, {b}) at line {line}"
                )));
            }
            for name in [a, b] {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names.sort();
        let n = names.len();
        if n < 2 {
            return Err(Error::DistanceData("need at least 2 entities".into()));
        }
        let mut dist = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let key = if names[i] < names[j] {
                    (names[i].clone(), names[j].clone())
                } else {
                    (names[j].clone(), names[i].clone())
                };
                let d = *pairs.get(&key).ok_or_else(|| {
                    Error::DistanceData(format!(
                        "missing distance between `{}` and `{}`",
                        names[i], names[j]
                    ))
                })?;
                dist[(i, j)] = d;
                dist[(j, i)] = d;
            }
        }
        DistanceMatrix::new(names, dist)
    }
}

/// Entity×period panel of the de-jure financial openness index. Backed by a
/// single-column PanelDataset; the observed value range is recorded rather
/// than clamped.
#[derive(Debug, Clone)]
pub struct OpennessPanel {
    panel: PanelDataset,
    column: String,
    pub observed_min: f64,
    pub observed_max: f64,
}

impl OpennessPanel {
    pub fn new(panel: PanelDataset, column: &str) -> Result<OpennessPanel> {
        let cells = panel.column(column)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in cells.iter().flatten() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if !lo.is_finite() {
            return Err(Error::EmptySeries);
        }
        Ok(OpennessPanel {
            panel,
            column: column.to_string(),
            observed_min: lo,
            observed_max: hi,
        })
    }

    pub fn panel(&self) -> &PanelDataset {
        &self.panel
    }

    pub fn value(&self, entity: &str, period: i64) -> Option<f64> {
        let e = self.panel.entity_id(entity)?;
        let t = self.panel.period_id(period)?;
        self.panel.cell(&self.column, e, t).ok().flatten()
    }
}

/// Period → global rate (percent per annum). Must cover the whole target
/// window with no missing values.
#[derive(Debug, Clone)]
pub struct GlobalRateSeries {
    rates: BTreeMap<i64, f64>,
}

impl GlobalRateSeries {
    pub fn new(rates: BTreeMap<i64, f64>) -> Self {
        GlobalRateSeries { rates }
    }

    pub fn get(&self, period: i64) -> Result<f64> {
        self.rates
            .get(&period)
            .copied()
            .ok_or(Error::MissingRatePeriod(period))
    }

    /// CSV with columns (year, rate).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<GlobalRateSeries> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let mut rates = BTreeMap::new();
        for (row_no, record) in rdr.records().enumerate() {
            let line = row_no as u64 + 2;
            let record = record.map_err(|e| Error::CsvParse { line, msg: e.to_string() })?;
            let year: i64 = record.get(0).unwrap_or("").trim().parse().map_err(|_| {
                Error::CellType {
                    column: "year".into(),
                    row: line,
                    value: record.get(0).unwrap_or("").to_string(),
                }
            })?;
            let rate: f64 = record.get(1).unwrap_or("").trim().parse().map_err(|_| {
                Error::CellType {
                    column: "rate".into(),
                    row: line,
                    value: record.get(1).unwrap_or("").to_string(),
                }
            })?;
            rates.insert(year, rate);
        }
        Ok(GlobalRateSeries { rates })
    }

    pub fn from_csv_path(path: &Path) -> Result<GlobalRateSeries> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }
}

/// Provenance attached to a constructed instrument.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    /// SHA-256 digests of the input files, when built from files.
    pub input_digests: IndexMap<String, String>,
    pub include_self: bool,
    pub window: (i64, i64),
    /// Cells whose neighbor weights were renormalized over the observed
    /// neighbors because some were missing.
    pub renormalized_cells: Vec<(String, i64)>,
    pub openness_observed_range: (f64, f64),
}

/// The constructed z_{i,t} with everything needed to audit it.
#[derive(Debug, Clone)]
pub struct InstrumentSeries {
    pub entities: Vec<String>,
    pub periods: Vec<i64>,
    /// z values, entity-major, aligned with (entities × periods).
    pub z: Vec<Option<f64>>,
    /// Per-entity time-averaged neighbor openness.
    pub kopen_bar: Vec<f64>,
    /// Weight matrix actually used, rows = target entity.
    pub weights: DMatrix<f64>,
    pub provenance: Provenance,
}

impl InstrumentSeries {
    /// Merges the series into a panel as a new column.
    pub fn merge_into(&self, ds: &PanelDataset, column: &str) -> Result<PanelDataset> {
        let mut cells = vec![None; ds.n_entities() * ds.n_periods()];
        for (i, entity) in self.entities.iter().enumerate() {
            let Some(e) = ds.entity_id(entity) else { continue };
            for (j, &period) in self.periods.iter().enumerate() {
                let Some(t) = ds.period_id(period) else { continue };
                cells[ds.cell_index(e, t)] = self.z[i * self.periods.len() + j];
            }
        }
        let mut out = ds.with_column(column, cells)?;
        out.set_metadata(column, "liquidity-exposure instrument (rate x neighbor openness)");
        Ok(out)
    }
}

/// Normalized inverse-distance weights of `target` over every other loaded
/// entity: ω_j = (1/d_j) / Σ_k (1/d_k). Self-weight is zero.
pub fn inverse_distance_weights(d: &DistanceMatrix, target: usize) -> Result<Vec<f64>> {
    let n = d.entities().len();
    if n < 2 {
        return Err(Error::DistanceData("no other entities to weight".into()));
    }
    let mut weights = vec![0.0; n];
    let mut total = 0.0;
    for j in 0..n {
        if j == target {
            continue;
        }
        let dist = d.distance(target, j);
        if !(dist > 0.0) {
            return Err(Error::DistanceData(format!(
                "non-positive distance between `{}` and `{}`",
                d.entities()[target],
                d.entities()[j]
            )));
        }
        weights[j] = 1.0 / dist;
        total += weights[j];
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Per-period weighted average of neighbor openness. Periods where some
/// weighted neighbors are missing renormalize over the observed ones; the
/// flagged period list is returned alongside. A period with no observed
/// neighbor at all yields a missing cell.
pub fn neighbor_weighted_openness(
    openness: &OpennessPanel,
    weights: &[f64],
    entities: &[String],
    periods: &[i64],
) -> (Vec<Option<f64>>, Vec<i64>) {
    let mut out = Vec::with_capacity(periods.len());
    let mut flagged = Vec::new();
    for &period in periods {
        let mut acc = 0.0;
        let mut seen_weight = 0.0;
        let mut any_missing = false;
        for (j, entity) in entities.iter().enumerate() {
            let w = weights[j];
            if w == 0.0 {
                continue;
            }
            match openness.value(entity, period) {
                Some(v) => {
                    acc += w * v;
                    seen_weight += w;
                }
                None => any_missing = true,
            }
        }
        if seen_weight == 0.0 {
            out.push(None);
        } else if any_missing {
            flagged.push(period);
            out.push(Some(acc / seen_weight));
        } else {
            out.push(Some(acc));
        }
    }
    (out, flagged)
}

/// Arithmetic mean over the non-missing periods.
pub fn time_average(series: &[Option<f64>]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in series.iter().flatten() {
        sum += v;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptySeries);
    }
    Ok(sum / count as f64)
}

/// Composes weights, neighbor averaging, time averaging, and the rate
/// interaction over the sample window.
pub fn build_instrument(
    distances: &DistanceMatrix,
    openness: &OpennessPanel,
    rates: &GlobalRateSeries,
    window: (i64, i64),
    include_self: bool,
) -> Result<InstrumentSeries> {
    let entities = distances.entities().to_vec();
    let periods: Vec<i64> = (window.0..=window.1).collect();
    if periods.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "empty window {}..={}",
            window.0, window.1
        )));
    }
    // The rate series must cover the window before any work starts.
    let rate_values: Vec<f64> = periods
        .iter()
        .map(|&p| rates.get(p))
        .collect::<Result<_>>()?;

    let n = entities.len();
    let mut weights = DMatrix::zeros(n, n);
    let mut kopen_bar = Vec::with_capacity(n);
    let mut renormalized_cells = Vec::new();
    for i in 0..n {
        let mut w = inverse_distance_weights(distances, i)?;
        if include_self {
            // Inclusive variant: the target's own openness participates with
            // an inverse-distance weight it cannot have (self-distance is 0),
            // so it enters with the mean of the neighbor weights, then the
            // vector is renormalized.
            let mean_w = w.iter().sum::<f64>() / (n - 1) as f64;
            w[i] = mean_w;
            let total: f64 = w.iter().sum();
            for v in &mut w {
                *v /= total;
            }
        }
        for (j, &v) in w.iter().enumerate() {
            weights[(i, j)] = v;
        }
        let (series, flagged) = neighbor_weighted_openness(openness, &w, &entities, &periods);
        for period in flagged {
            renormalized_cells.push((entities[i].clone(), period));
        }
        kopen_bar.push(time_average(&series)?);
    }

    let mut z = Vec::with_capacity(n * periods.len());
    for bar in &kopen_bar {
        for rate in &rate_values {
            z.push(Some(rate * bar));
        }
    }

    Ok(InstrumentSeries {
        entities,
        periods,
        z,
        kopen_bar,
        weights,
        provenance: Provenance {
            input_digests: IndexMap::new(),
            include_self,
            window,
            renormalized_cells,
            openness_observed_range: (openness.observed_min, openness.observed_max),
        },
    })
}

/// SHA-256 digest of a file, hex-encoded, for provenance sidecars.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri_distance() -> DistanceMatrix {
        let names = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let dist = DMatrix::from_row_slice(3, 3, &[
            0.0, 1.0, 3.0,
            1.0, 0.0, 2.0,
            3.0, 2.0, 0.0,
        ]);
        DistanceMatrix::new(names, dist).unwrap()
    }

    #[test]
    fn weights_from_known_distances() {
        let d = tri_distance();
        let w = inverse_distance_weights(&d, 0).unwrap();
        assert!((w[1] - 0.75).abs() < 1e-12);
        assert!((w[2] - 0.25).abs() < 1e-12);
        assert_eq!(w[0], 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_distances_give_uniform_weights() {
        let names = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let mut dist = DMatrix::from_element(3, 3, 5.0);
        dist.fill_diagonal(0.0);
        let d = DistanceMatrix::new(names, dist).unwrap();
        let w = inverse_distance_weights(&d, 1).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weights_invariant_to_distance_rescaling() {
        let d = tri_distance();
        let scaled = DistanceMatrix::new(
            d.entities().to_vec(),
            DMatrix::from_fn(3, 3, |i, j| 2.0 * d.distance(i, j)),
        )
        .unwrap();
        let w1 = inverse_distance_weights(&d, 2).unwrap();
        let w2 = inverse_distance_weights(&scaled, 2).unwrap();
        for (a, b) in w1.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn openness_panel(values: &[(&str, i64, f64)]) -> OpennessPanel {
        let entities: Vec<String> = {
            let mut v: Vec<String> = values.iter().map(|(e, _, _)| e.to_string()).collect();
            v.sort();
            v.dedup();
            v
        };
        let periods: Vec<i64> = {
            let mut v: Vec<i64> = values.iter().map(|(_, p, _)| *p).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let mut ds = PanelDataset::new(entities, periods);
        let mut cells = vec![None; ds.n_entities() * ds.n_periods()];
        for (e, p, v) in values {
            let ei = ds.entity_id(e).unwrap();
            let ti = ds.period_id(*p).unwrap();
            cells[ds.cell_index(ei, ti)] = Some(*v);
        }
        ds.add_column("kopen", cells).unwrap();
        OpennessPanel::new(ds, "kopen").unwrap()
    }

    #[test]
    fn weighted_openness_arithmetic() {
        let op = openness_panel(&[("B", 2000, 0.2), ("C", 2000, 1.0)]);
        let weights = vec![0.0, 0.75, 0.25];
        let entities = vec!["A".into(), "B".into(), "C".into()];
        let (series, flagged) = neighbor_weighted_openness(&op, &weights, &entities, &[2000]);
        assert!((series[0].unwrap() - 0.4).abs() < 1e-12);
        assert!(flagged.is_empty());
    }

    #[test]
    fn missing_neighbor_renormalizes_and_flags() {
        let op = openness_panel(&[("B", 2000, 0.2), ("C", 2000, 1.0), ("B", 2001, 0.6)]);
        let weights = vec![0.0, 0.75, 0.25];
        let entities = vec!["A".into(), "B".into(), "C".into()];
        let (series, flagged) = neighbor_weighted_openness(&op, &weights, &entities, &[2000, 2001]);
        // 2001: C missing, renormalize over B alone.
        assert!((series[1].unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(flagged, vec![2001]);
    }

    #[test]
    fn time_average_basics() {
        assert!((time_average(&[Some(0.2), Some(0.4), Some(0.6)]).unwrap() - 0.4).abs() < 1e-12);
        assert!((time_average(&[Some(0.7), None, Some(0.7)]).unwrap() - 0.7).abs() < 1e-12);
        assert!(time_average(&[None, None]).is_err());
    }

    #[test]
    fn instrument_is_rate_times_exposure() {
        let d = tri_distance();
        let op = openness_panel(&[
            ("A", 2000, 0.1), ("B", 2000, 0.2), ("C", 2000, 1.0),
            ("A", 2001, 0.3), ("B", 2001, 0.6), ("C", 2001, 0.8),
        ]);
        let mut rates = BTreeMap::new();
        rates.insert(2000, 2.0);
        rates.insert(2001, 4.0);
        let r = GlobalRateSeries::new(rates);
        let inst = build_instrument(&d, &op, &r, (2000, 2001), false).unwrap();
        // Entity A: bar = mean(0.75*0.2+0.25*1.0, 0.75*0.6+0.25*0.8) = mean(0.4, 0.65)
        let bar_a = inst.kopen_bar[0];
        assert!((bar_a - 0.525).abs() < 1e-12);
        assert!((inst.z[0].unwrap() - 2.0 * bar_a).abs() < 1e-12);
        assert!((inst.z[1].unwrap() - 4.0 * bar_a).abs() < 1e-12);
        // Per-entity z/rate constant across periods.
        for i in 0..3 {
            let r0 = inst.z[i * 2].unwrap() / 2.0;
            let r1 = inst.z[i * 2 + 1].unwrap() / 4.0;
            assert!((r0 - r1).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_rate_year_is_a_hard_error() {
        let d = tri_distance();
        let op = openness_panel(&[("A", 2000, 0.1), ("B", 2000, 0.2), ("C", 2000, 1.0)]);
        let mut rates = BTreeMap::new();
        rates.insert(2000, 2.0);
        let r = GlobalRateSeries::new(rates);
        let err = build_instrument(&d, &op, &r, (2000, 2001), false).unwrap_err();
        assert!(matches!(err, Error::MissingRatePeriod(2001)));
    }

    #[test]
    fn duplicate_distance_pair_rejected() {
        let csv = "entity_a,entity_b,distance_km\nA,B,100\nB,A,100\n";
        let err = DistanceMatrix::from_csv_reader(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DistanceData(_)));
    }
}
