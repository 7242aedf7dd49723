//! JSON run configurations. Unknown keys are hard errors; command-line
//! flags override config values.

use indexmap::IndexMap;
use serde::Deserialize;

use paneliv::diagnostics::GridPolicy;
use paneliv::panel::Transform;
use paneliv::regression::{CovarianceKind, FixedEffects};
use paneliv::simulation::DgpConfig;

fn default_entity_col() -> String {
    "entity".into()
}
fn default_time_col() -> String {
    "year".into()
}
fn default_true() -> bool {
    true
}
fn default_level() -> f64 {
    0.95
}
fn default_style() -> String {
    "text".into()
}
fn default_decimals() -> usize {
    3
}
fn default_covariance() -> CovarianceKind {
    CovarianceKind::RobustHc1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Input panel CSV path.
    pub panel_csv: String,
    #[serde(default = "default_entity_col")]
    pub entity_col: String,
    #[serde(default = "default_time_col")]
    pub time_col: String,
    /// Column derivations applied before estimation, in order.
    #[serde(default)]
    pub transforms: Vec<Transform>,
    pub dependent: String,
    #[serde(default)]
    pub exogenous: Vec<String>,
    #[serde(default)]
    pub endogenous: Option<String>,
    #[serde(default)]
    pub instruments: Vec<String>,
    #[serde(default = "default_true")]
    pub entity_effects: bool,
    #[serde(default = "default_true")]
    pub time_effects: bool,
    #[serde(default = "default_covariance")]
    pub covariance: CovarianceKind,
    /// Inclusive [first, last] period window.
    #[serde(default)]
    pub period_range: Option<(i64, i64)>,
    #[serde(default)]
    pub entity_allowlist: Option<Vec<String>>,
    /// Named entity groups (e.g. emission clusters); select one with `group`.
    #[serde(default)]
    pub groups: Option<IndexMap<String, Vec<String>>>,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default = "default_level")]
    pub ar_level: f64,
    #[serde(default)]
    pub ar_grid: Option<GridPolicy>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default = "default_style")]
    pub style: String,
    #[serde(default = "default_decimals")]
    pub decimals: usize,
}

impl EstimateConfig {
    pub fn fixed_effects(&self) -> FixedEffects {
        FixedEffects { entity: self.entity_effects, time: self.time_effects }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildInstrumentConfig {
    /// Pair CSV (entity_a, entity_b, distance_km), undirected.
    pub distance_csv: String,
    /// Panel CSV holding the openness index.
    pub openness_csv: String,
    #[serde(default = "default_entity_col")]
    pub openness_entity_col: String,
    #[serde(default = "default_time_col")]
    pub openness_time_col: String,
    pub openness_col: String,
    /// CSV (year, rate).
    pub rate_csv: String,
    /// Inclusive averaging and output window.
    pub window: (i64, i64),
    /// Include the target's own openness in the weighted average
    /// (sensitivity variant; the default excludes it).
    #[serde(default)]
    pub include_self: bool,
    /// Optional panel to merge the instrument column into; when absent the
    /// output panel holds the instrument alone.
    #[serde(default)]
    pub panel_csv: Option<String>,
    #[serde(default = "default_entity_col")]
    pub entity_col: String,
    #[serde(default = "default_time_col")]
    pub time_col: String,
    /// Name of the instrument column in the output.
    pub output_column: String,
    pub output_csv: String,
    pub provenance_json: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub dgp: DgpConfig,
    pub reps: usize,
    #[serde(default)]
    pub report_json: Option<String>,
}
