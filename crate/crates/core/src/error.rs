use thiserror::Error;

/// Errors surfaced by estimation, sampling, and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input vectors are empty")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("weight at row {index} is not positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("treatment at row {index} is not 0/1 ({value})")]
    NonBinaryTreatment { index: usize, value: String },
    #[error("missing value in column `{column}` at row {index}")]
    MissingValue { column: String, index: usize },
    #[error("degenerate arm: n1={n1}, n0={n0}")]
    DegenerateArm { n1: usize, n0: usize },
    #[error("both arms need at least 2 units (n1={n1}, n0={n0})")]
    ArmTooSmall { n1: usize, n0: usize },
    #[error("requested sample of {requested} from population of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("cannot build {requested} strata from {units} units")]
    TooManyStrata { requested: usize, units: usize },
    #[error("stratum repair exhausted: an arm is empty in every stratum")]
    EmptyStratumArm,
    #[error("oracle data missing: {0}")]
    OracleDataMissing(&'static str),
    #[error("zero bootstrap variance with differing point estimates")]
    ZeroVariance,
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("invalid weight interval: low={low}, high={high}")]
    InvalidInterval { low: f64, high: f64 },
    #[error("more than half of the bootstrap replicates were degenerate ({redraws} redraws for {replicates} replicates)")]
    DegenerateBootstrap { redraws: usize, replicates: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown covariate column `{0}`")]
    UnknownCovariate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
