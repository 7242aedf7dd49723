use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Serialize;

use paneliv::diagnostics;
use paneliv::error::Error as LibError;
use paneliv::instrument::{
    build_instrument, file_digest, DistanceMatrix, GlobalRateSeries, OpennessPanel,
};
use paneliv::panel::{apply_transform, PanelDataset, SampleFilter};
use paneliv::regression::{
    fit_model, tsls_fit, CovarianceSettings, EstimationResult, ModelSpec,
};
use paneliv::reporting::{format_table, TableColumn, TableLayout, TableStyle};
use paneliv::simulation::run_experiment;

use crate::config::{BuildInstrumentConfig, EstimateConfig, SimulateConfig};

/// Exit-code taxonomy: 0 success, 2 config, 3 data, 4 estimation, 5 internal.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> CliError {
        CliError { code: 2, message: format!("config error: {}", msg.into()) }
    }
    pub fn internal(msg: impl Into<String>) -> CliError {
        CliError { code: 5, message: format!("internal error: {}", msg.into()) }
    }
}

impl From<LibError> for CliError {
    fn from(e: LibError) -> CliError {
        use LibError::*;
        let hint = match &e {
            InvalidSpec(_) => " (check the model keys: dependent/exogenous/endogenous/instruments)",
            Collinear(_) => " (drop one of the named columns)",
            DegenerateInstrument(_) => " (the instrument has no within variation; check the fixed-effects flags)",
            MissingRatePeriod(_) => " (extend the rate CSV to cover the window)",
            DuplicateObservation { .. } => " (each (entity, period) may appear once)",
            _ => "",
        };
        let msg = format!("{e}{hint}");
        match e {
            InvalidConfig(_) | InvalidSpec(_) | GridPolicy(_) | Unsupported(_) => {
                CliError { code: 2, message: format!("config error: {msg}") }
            }
            CsvParse { .. } | CellType { .. } | DuplicateObservation { .. }
            | UnknownColumn(_) | ColumnCollision(_) | DistanceData(_)
            | MissingRatePeriod(_) | AllNeighborsMissing { .. } | EmptySeries | Io(_) => {
                CliError { code: 3, message: format!("data error: {msg}") }
            }
            Collinear(_) | InsufficientObservations { .. } | SingletonEntity(_)
            | NoTimeVariation | EmptySample | DegenerateInstrument(_)
            | DegenerateCluster(_) | LagTooLong { .. } | TooManyFailures { .. } => {
                CliError { code: 4, message: format!("estimation error: {msg}") }
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn load_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// All outputs go through write-to-temp + rename so failures never leave a
/// partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::internal(format!("creating {}: {e}", dir.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::internal(format!("writing {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::internal(format!("renaming to {}: {e}", path.display())))?;
    Ok(())
}

#[derive(Serialize)]
struct ResultSummary {
    estimator: String,
    coefficients: IndexMap<String, f64>,
    std_errors: IndexMap<String, f64>,
    p_values: IndexMap<String, f64>,
    n_obs: usize,
    n_entities: usize,
    dof_residual: usize,
    r_squared_within: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<diagnostics::DiagnosticsBundle>,
}

impl ResultSummary {
    fn from(result: &EstimationResult) -> ResultSummary {
        let names: Vec<String> = result.coefficients.keys().cloned().collect();
        ResultSummary {
            estimator: result.estimator_tag.to_string(),
            coefficients: result.coefficients.clone(),
            std_errors: names
                .iter()
                .map(|n| (n.clone(), result.std_error(n).unwrap_or(f64::NAN)))
                .collect(),
            p_values: names
                .iter()
                .map(|n| (n.clone(), result.p_value(n).unwrap_or(f64::NAN)))
                .collect(),
            n_obs: result.n_obs,
            n_entities: result.n_entities,
            dof_residual: result.dof_residual,
            r_squared_within: result.r_squared_within,
            diagnostics: result.diagnostics.clone(),
        }
    }
}

fn resolve_allowlist(cfg: &EstimateConfig) -> CliResult<Option<Vec<String>>> {
    match (&cfg.group, &cfg.groups) {
        (None, _) => Ok(cfg.entity_allowlist.clone()),
        (Some(label), Some(groups)) => {
            let members = groups.get(label).ok_or_else(|| {
                CliError::config(format!(
                    "group `{label}` not found; defined groups: {:?}",
                    groups.keys().collect::<Vec<_>>()
                ))
            })?;
            Ok(Some(members.clone()))
        }
        (Some(label), None) => Err(CliError::config(format!(
            "group `{label}` selected but no `groups` map is configured"
        ))),
    }
}

pub fn cmd_estimate(cfg: &EstimateConfig) -> CliResult<String> {
    let style: TableStyle = cfg.style.parse().map_err(CliError::from)?;
    let mut ds = PanelDataset::from_csv_path(Path::new(&cfg.panel_csv), &cfg.entity_col, &cfg.time_col)?;
    for t in &cfg.transforms {
        let (next, warned) = apply_transform(&ds, t)?;
        if warned > 0 {
            eprintln!("warning: {warned} non-positive cells became missing in `{}`", t.output());
        }
        ds = next;
    }

    let filter = SampleFilter {
        period_range: cfg.period_range,
        entity_allowlist: resolve_allowlist(cfg)?,
        group_label: cfg.group.clone(),
        completeness: Vec::new(),
    };
    let covariance = CovarianceSettings { kind: cfg.covariance, small_sample: true };

    if cfg.endogenous.is_none() && cfg.exogenous.is_empty() {
        return Err(CliError::config("the model has no regressors"));
    }

    // FE column: every regressor treated as exogenous.
    let mut fe_exog = Vec::new();
    if let Some(endog) = &cfg.endogenous {
        fe_exog.push(endog.clone());
    }
    fe_exog.extend(cfg.exogenous.iter().cloned());
    let fe_spec = ModelSpec {
        dependent: cfg.dependent.clone(),
        exogenous: fe_exog,
        endogenous: None,
        instruments: vec![],
        fixed_effects: cfg.fixed_effects(),
        covariance,
        filter: filter.clone(),
    };
    fe_spec.validate()?;
    let fe = fit_model(&fe_spec, &ds)?;

    let mut columns = vec![TableColumn { label: "FE".into(), result: &fe }];
    let iv_pair: Option<(EstimationResult, EstimationResult)> = if cfg.endogenous.is_some() {
        if cfg.instruments.is_empty() {
            return Err(CliError::config(
                "an endogenous regressor is configured but no instruments are",
            ));
        }
        let iv_spec = ModelSpec {
            dependent: cfg.dependent.clone(),
            exogenous: cfg.exogenous.clone(),
            endogenous: cfg.endogenous.clone(),
            instruments: cfg.instruments.clone(),
            fixed_effects: cfg.fixed_effects(),
            covariance,
            filter: filter.clone(),
        };
        iv_spec.validate()?;
        let grid = cfg.ar_grid.clone().unwrap_or_default();
        let (mut second, first) = tsls_fit(&iv_spec, &ds)?;
        second.diagnostics = Some(diagnostics::compute_bundle(&iv_spec, &ds, cfg.ar_level, &grid)?);
        Some((second, first))
    } else {
        if !cfg.instruments.is_empty() {
            return Err(CliError::config(
                "instruments are configured but no endogenous regressor is",
            ));
        }
        None
    };
    if let Some((second, first)) = &iv_pair {
        columns.push(TableColumn { label: "IV".into(), result: second });
        columns.push(TableColumn { label: "First stage".into(), result: first });
    }

    let mut row_order: Vec<String> = Vec::new();
    if let Some(endog) = &cfg.endogenous {
        row_order.push(endog.clone());
    }
    row_order.extend(cfg.exogenous.iter().cloned());
    row_order.extend(cfg.instruments.iter().cloned());

    let mut layout = TableLayout::new(columns, row_order);
    layout.decimals = cfg.decimals;
    let rendered = format_table(&layout, style)?;

    if let Some(dir) = &cfg.output_dir {
        let dir = PathBuf::from(dir);
        let table_csv = format_table(&layout, TableStyle::Csv)?;
        write_atomic(&dir.join("table.csv"), table_csv.as_bytes())?;
        let mut results: IndexMap<&str, ResultSummary> = IndexMap::new();
        results.insert("fe", ResultSummary::from(&fe));
        if let Some((second, first)) = &iv_pair {
            results.insert("iv", ResultSummary::from(second));
            results.insert("first_stage", ResultSummary::from(first));
        }
        let json = serde_json::to_string_pretty(&results)
            .map_err(|e| CliError::internal(e.to_string()))?;
        write_atomic(&dir.join("results.json"), json.as_bytes())?;
    }
    Ok(rendered)
}

pub fn cmd_build_instrument(cfg: &BuildInstrumentConfig) -> CliResult<()> {
    let distance_path = Path::new(&cfg.distance_csv);
    let openness_path = Path::new(&cfg.openness_csv);
    let rate_path = Path::new(&cfg.rate_csv);

    let distances = DistanceMatrix::from_csv_path(distance_path)?;
    let openness_panel = PanelDataset::from_csv_path(
        openness_path,
        &cfg.openness_entity_col,
        &cfg.openness_time_col,
    )?;
    let openness = OpennessPanel::new(openness_panel, &cfg.openness_col)?;
    let rates = GlobalRateSeries::from_csv_path(rate_path)?;

    let mut series = build_instrument(&distances, &openness, &rates, cfg.window, cfg.include_self)?;
    for (label, path) in [
        ("distance_csv", distance_path),
        ("openness_csv", openness_path),
        ("rate_csv", rate_path),
    ] {
        series
            .provenance
            .input_digests
            .insert(label.to_string(), file_digest(path)?);
    }

    let merged = match &cfg.panel_csv {
        Some(panel) => {
            let base = PanelDataset::from_csv_path(Path::new(panel), &cfg.entity_col, &cfg.time_col)?;
            series.merge_into(&base, &cfg.output_column)?
        }
        None => {
            let base = PanelDataset::new(series.entities.clone(), series.periods.clone());
            series.merge_into(&base, &cfg.output_column)?
        }
    };
    let mut csv_bytes = Vec::new();
    merged.to_csv(&mut csv_bytes, &cfg.entity_col, &cfg.time_col)?;
    write_atomic(Path::new(&cfg.output_csv), &csv_bytes)?;

    let provenance = serde_json::to_string_pretty(&series.provenance)
        .map_err(|e| CliError::internal(e.to_string()))?;
    write_atomic(Path::new(&cfg.provenance_json), provenance.as_bytes())?;
    eprintln!(
        "instrument `{}` built for {} entities over {}..={} (openness range {:.3}..{:.3})",
        cfg.output_column,
        series.entities.len(),
        cfg.window.0,
        cfg.window.1,
        series.provenance.openness_observed_range.0,
        series.provenance.openness_observed_range.1,
    );
    Ok(())
}

pub fn cmd_simulate(cfg: &SimulateConfig) -> CliResult<String> {
    if cfg.reps == 0 {
        return Err(CliError::config("reps must be >= 1"));
    }
    let report = run_experiment(&cfg.dgp, cfg.reps)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::internal(e.to_string()))?;
    if let Some(path) = &cfg.report_json {
        write_atomic(Path::new(path), json.as_bytes())?;
    }
    let mut text = String::new();
    text.push_str(&format!(
        "replications: {} ({} failed)\n",
        report.replications, report.failures
    ));
    text.push_str(&format!("true beta: {}\n", report.beta_true));
    text.push_str(&format!(
        "FE-OLS   mean {:+.6}  bias {:+.6}  rmse {:.6}\n",
        report.fe_ols.mean_estimate, report.fe_ols.mean_bias, report.fe_ols.rmse
    ));
    text.push_str(&format!(
        "FE-2SLS  mean {:+.6}  bias {:+.6}  rmse {:.6}\n",
        report.tsls.mean_estimate, report.tsls.mean_bias, report.tsls.rmse
    ));
    text.push_str(&format!(
        "first-stage F: mean {:.2}, share > 10: {:.1}%\n",
        report.mean_first_stage_f,
        100.0 * report.share_first_stage_f_above_10
    ));
    text.push_str(&format!(
        "under-id LM rejection at 5%: {:.1}%\n",
        100.0 * report.underid_rejection_rate
    ));
    text.push_str(&format!(
        "AR: rejection at truth {:.1}%, 95% coverage {:.1}%, bounded sets {:.1}%\n",
        100.0 * report.ar_rejection_rate_at_truth,
        100.0 * report.ar_coverage,
        100.0 * report.ar_bounded_rate
    ));
    eprintln!("wall clock: {:.2}s", report.wall_clock_secs);
    Ok(text)
}

pub fn cmd_describe(panel: &Path, entity_col: &str, time_col: &str) -> CliResult<String> {
    let ds = PanelDataset::from_csv_path(panel, entity_col, time_col)?;
    let mut out = String::new();
    out.push_str(&format!(
        "{} entities x {} periods ({}..={})\n\n",
        ds.n_entities(),
        ds.n_periods(),
        ds.periods().first().copied().unwrap_or(0),
        ds.periods().last().copied().unwrap_or(0)
    ));
    out.push_str(&format!(
        "{:<24} {:>8} {:>12} {:>12} {:>12} {:>12}\n",
        "variable", "n", "mean", "sd", "min", "max"
    ));
    let names: Vec<String> = ds.column_names().map(|s| s.to_string()).collect();
    for name in names {
        let values: Vec<f64> = ds.column(&name)?.iter().flatten().copied().collect();
        if values.is_empty() {
            out.push_str(&format!("{name:<24} {:>8} (all missing)\n", 0));
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.push_str(&format!(
            "{name:<24} {:>8} {mean:>12.4} {:>12.4} {min:>12.4} {max:>12.4}\n",
            values.len(),
            var.sqrt()
        ));
    }
    Ok(out)
}
