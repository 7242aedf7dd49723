use thiserror::Error;

/// Errors produced by dataset construction, estimation, and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: u64, msg: String },

    #[error("duplicate observation for entity `{entity}` in period {period}")]
    DuplicateObservation { entity: String, period: i64 },

    #[error("non-numeric cell in column `{column}`, row {row}: `{value}`")]
    CellType {
        column: String,
        row: u64,
        value: String,
    },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{0}` already exists")]
    ColumnCollision(String),

    #[error("lag {k} is not smaller than the number of periods ({periods})")]
    LagTooLong { k: usize, periods: usize },

    #[error("entity `{0}` has fewer than 2 retained periods")]
    SingletonEntity(String),

    #[error("no time variation: a single retained period")]
    NoTimeVariation,

    #[error("empty sample after filtering")]
    EmptySample,

    #[error("design is rank deficient; dependent columns: {0:?}")]
    Collinear(Vec<String>),

    #[error("insufficient observations: {n_obs} rows for {n_params} parameters")]
    InsufficientObservations { n_obs: usize, n_params: usize },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("instrument `{0}` has no within variation after fixed-effect absorption")]
    DegenerateInstrument(String),

    #[error("cluster-robust covariance requires at least 2 clusters, got {0}")]
    DegenerateCluster(usize),

    #[error("distance data error: {0}")]
    DistanceData(String),

    #[error("rate series missing period {0}")]
    MissingRatePeriod(i64),

    #[error("all neighbors missing for entity `{entity}` in period {period}")]
    AllNeighborsMissing { entity: String, period: i64 },

    #[error("empty series")]
    EmptySeries,

    #[error("grid policy error: {0}")]
    GridPolicy(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{failed} of {total} replications failed estimation (threshold 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
