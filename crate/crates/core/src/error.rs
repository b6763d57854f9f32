//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Sampling time outside the [0, 24) hour window.
    #[error("sampling time {0} h is outside [0, 24)")]
    InvalidTime(f64),

    /// Design matrix does not have full column rank.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// Vector/matrix sizes disagree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// The 3x3 normal equations could not be factorized.
    #[error("singular normal equations (pivot ratio {0:.3e})")]
    SingularNormalEquations(f64),

    /// Too few samples for the requested operation.
    #[error("insufficient replication: n = {n}, need at least {min}")]
    InsufficientReplication { n: usize, min: usize },

    /// Chi-square raw moment order outside 1..=4.
    #[error("unsupported chi-square moment order {0}; supported orders are 1..=4")]
    InvalidOrder(u32),

    /// A plug-in variance that must be positive was not.
    #[error("variance must be positive, got {0}")]
    NonpositiveVariance(f64),

    /// Contrast construction requires at least two conditions.
    #[error("need at least 2 conditions, got {0}")]
    InvalidConditionCount(usize),

    /// The contrasted covariance is numerically singular.
    #[error("contrast covariance numerically singular (condition number {0:.3e})")]
    SingularOmega(f64),

    /// The moment-matching optimizer could not satisfy both equations.
    #[error("moment matching failed: optimizer residual {0:.3e}")]
    MomentMismatch(f64),

    /// The 2x2 rhythm covariance block has a clearly negative eigenvalue.
    #[error("negative eigenvalue {0:.3e} in rhythm covariance block")]
    NonpositiveTau(f64),

    /// Amplitude/phase transform gradient requested at zero amplitude.
    #[error("zero amplitude: transform gradient undefined")]
    ZeroAmplitude,

    /// Expression column and metadata row sets disagree.
    #[error("sample '{id}' {context}")]
    MissingSample { id: String, context: String },

    /// A gene id occurs more than once in the expression file.
    #[error("duplicate gene id '{0}'")]
    DuplicateGene(String),

    /// Declared units are inconsistent with the data.
    #[error("units mismatch: {0}")]
    UnitsMismatch(String),

    /// A precondition not covered by a more specific variant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Scenario/config validation failure.
    #[error("invalid scenario '{label}': {reason}")]
    InvalidScenario { label: String, reason: String },

    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
