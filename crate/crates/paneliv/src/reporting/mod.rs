//! Regression tables in the journal style: coefficients with parenthesized
//! standard errors, significance stars, and a diagnostics footer, rendered
//! as text, CSV, or LaTeX.

use crate::error::{Error, Result};
use crate::regression::EstimationResult;

/// Default legend: *** below 0.01, ** below 0.05, * below 0.1. Boundary
/// p-values take the weaker marking (strict inequality).
pub const DEFAULT_STAR_THRESHOLDS: [f64; 3] = [0.01, 0.05, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableStyle {
    Text,
    Csv,
    Latex,
}

impl std::str::FromStr for TableStyle {
    type Err = Error;
    fn from_str(s: &str) -> Result<TableStyle> {
        match s {
            "text" => Ok(TableStyle::Text),
            "csv" => Ok(TableStyle::Csv),
            "latex" => Ok(TableStyle::Latex),
            other => Err(Error::InvalidConfig(format!("unknown table style `{other}`"))),
        }
    }
}

pub struct TableColumn<'a> {
    pub label: String,
    pub result: &'a EstimationResult,
}

pub struct TableLayout<'a> {
    pub columns: Vec<TableColumn<'a>>,
    /// Coefficient rows, top to bottom. Coefficients absent from a column
    /// render as blank cells.
    pub row_order: Vec<String>,
    /// Strictly decreasing thresholds, strongest first.
    pub star_thresholds: [f64; 3],
    pub decimals: usize,
}

impl<'a> TableLayout<'a> {
    pub fn new(columns: Vec<TableColumn<'a>>, row_order: Vec<String>) -> TableLayout<'a> {
        TableLayout {
            columns,
            row_order,
            star_thresholds: DEFAULT_STAR_THRESHOLDS,
            decimals: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.star_thresholds;
        if !(t[0] < t[1] && t[1] < t[2]) {
            return Err(Error::InvalidConfig(
                "star thresholds must be strictly increasing in p".into(),
            ));
        }
        for name in &self.row_order {
            if !self.columns.iter().any(|c| c.result.coef(name).is_some()) {
                return Err(Error::InvalidConfig(format!(
                    "row `{name}` appears in no column"
                )));
            }
        }
        Ok(())
    }
}

/// Stars for a two-sided p-value; boundaries get the weaker marking.
pub fn stars(p: f64, thresholds: &[f64; 3]) -> &'static str {
    if p < thresholds[0] {
        "***"
    } else if p < thresholds[1] {
        "**"
    } else if p < thresholds[2] {
        "*"
    } else {
        ""
    }
}

/// Renders the table in the requested style. Output is deterministic.
pub fn format_table(layout: &TableLayout, style: TableStyle) -> Result<String> {
    layout.validate()?;
    let d = layout.decimals;
    let mut body: Vec<Vec<String>> = Vec::new();

    let mut header = vec![String::new()];
    header.extend(layout.columns.iter().map(|c| c.label.clone()));
    body.push(header);

    for name in &layout.row_order {
        let mut coef_row = vec![name.clone()];
        let mut se_row = vec![String::new()];
        for col in &layout.columns {
            match col.result.coef(name) {
                Some(b) => {
                    let p = col.result.p_value(name).unwrap_or(1.0);
                    coef_row.push(format!("{b:.d$}{}", stars(p, &layout.star_thresholds)));
                    let se = col.result.std_error(name).unwrap_or(f64::NAN);
                    se_row.push(format!("({se:.d$})"));
                }
                None => {
                    coef_row.push(String::new());
                    se_row.push(String::new());
                }
            }
        }
        body.push(coef_row);
        body.push(se_row);
    }

    // Footer: N, entities, R2-within, and whatever diagnostics are present.
    let mut footer: Vec<Vec<String>> = Vec::new();
    let mut push_stat = |label: &str, cells: Vec<String>| {
        let mut row = vec![label.to_string()];
        row.extend(cells);
        footer.push(row);
    };
    push_stat(
        "Observations",
        layout.columns.iter().map(|c| c.result.n_obs.to_string()).collect(),
    );
    push_stat(
        "Entities",
        layout.columns.iter().map(|c| c.result.n_entities.to_string()).collect(),
    );
    push_stat(
        "R2 (within)",
        layout
            .columns
            .iter()
            .map(|c| format!("{:.d$}", c.result.r_squared_within))
            .collect(),
    );
    let has_diag = layout.columns.iter().any(|c| c.result.diagnostics.is_some());
    if has_diag {
        let diag_cell = |f: &dyn Fn(&crate::diagnostics::DiagnosticsBundle) -> String| {
            layout
                .columns
                .iter()
                .map(|c| c.result.diagnostics.as_ref().map(f).unwrap_or_default())
                .collect::<Vec<String>>()
        };
        push_stat(
            "First-stage F",
            diag_cell(&|b| format!("{:.d$}", b.first_stage_f.statistic)),
        );
        push_stat(
            "Underid. LM p",
            diag_cell(&|b| format!("{:.d$}", b.underid_lm.p_value)),
        );
        push_stat(
            "AR stat (b=0)",
            diag_cell(&|b| format!("{:.d$}", b.ar_at_zero.statistic)),
        );
        push_stat(
            "AR 95% set",
            diag_cell(&|b| {
                let set = &b.ar_confidence_set;
                match set.intervals.as_slice() {
                    [] => "empty".to_string(),
                    parts => parts
                        .iter()
                        .map(|(lo, hi)| format!("[{lo:.d$}, {hi:.d$}]"))
                        .collect::<Vec<_>>()
                        .join(" u "),
                }
            }),
        );
    }

    match style {
        TableStyle::Csv => {
            let mut wtr = csv::Writer::from_writer(Vec::new());
            for row in body.iter().chain(footer.iter()) {
                wtr.write_record(row)
                    .map_err(|e| Error::CsvParse { line: 0, msg: e.to_string() })?;
            }
            let bytes = wtr
                .into_inner()
                .map_err(|e| Error::CsvParse { line: 0, msg: e.to_string() })?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        TableStyle::Text => {
            let widths = column_widths(body.iter().chain(footer.iter()));
            let mut out = String::new();
            let render = |row: &[String], out: &mut String| {
                for (i, cell) in row.iter().enumerate() {
                    if i == 0 {
                        out.push_str(&format!("{:<w$}", cell, w = widths[0]));
                    } else {
                        out.push_str(&format!("  {:>w$}", cell, w = widths[i]));
                    }
                }
                out.push('\n');
            };
            render(&body[0], &mut out);
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
            for row in &body[1..] {
                render(row, &mut out);
            }
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
            for row in &footer {
                render(row, &mut out);
            }
            out.push_str("*** p<0.01, ** p<0.05, * p<0.1\n");
            Ok(out)
        }
        TableStyle::Latex => {
            let cols = layout.columns.len();
            let mut out = String::new();
            out.push_str(&format!("\\begin{{tabular}}{{l{}}}\n", "c".repeat(cols)));
            out.push_str("\\hline\n");
            let render = |row: &[String]| -> String {
                let escaped: Vec<String> =
                    row.iter().map(|c| c.replace('_', "\\_")).collect();
                format!("{} \\\\\n", escaped.join(" & "))
            };
            out.push_str(&render(&body[0]));
            out.push_str("\\hline\n");
            for row in &body[1..] {
                out.push_str(&render(row));
            }
            out.push_str("\\hline\n");
            for row in &footer {
                out.push_str(&render(row));
            }
            out.push_str("\\hline\n\\end{tabular}\n");
            out.push_str("% *** p<0.01, ** p<0.05, * p<0.1\n");
            Ok(out)
        }
    }
}

fn column_widths<'a, I: Iterator<Item = &'a Vec<String>>>(rows: I) -> Vec<usize> {
    let mut widths: Vec<usize> = Vec::new();
    for row in rows {
        if widths.len() < row.len() {
            widths.resize(row.len(), 0);
        }
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    widths
}
