use thiserror::Error;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("grid mass {mass} deviates from 1 beyond {tol}")]
    NonnormalizedGrid { mass: f64, tol: f64 },
    #[error("second moment does not settle inside the grid (boundary density {boundary})")]
    DivergentMoment { boundary: f64 },
    #[error("tail mass {tail_mass} outside [-{half_width}, {half_width}] exceeds {tol}")]
    DomainTooSmall { half_width: f64, tail_mass: f64, tol: f64 },
    #[error("frequency {t} beyond the grid Nyquist limit {nyquist}")]
    QuadratureUnreliable { t: f64, nyquist: f64 },
    #[error("|t| = {t} below the floor {floor}; use the zero limit instead")]
    NearZeroT { t: f64, floor: f64 },
    #[error("density mean {mean} is not zero")]
    MeanNotZero { mean: f64 },
    #[error("empirical limit {empirical} disagrees with e^(-gamma/2) = {analytic}")]
    LimitMismatch { analytic: f64, empirical: f64 },
    #[error("no valid T: bound e^(-gamma_-/2) already violated at t = {t}")]
    NoValidT { t: f64 },
    #[error("pinned constant is nonpositive: 1 - gamma_- T^2 = {factor}")]
    NonpositiveC { factor: f64 },
    #[error("zeta(sqrt e) = {zeta_min} exceeds the plateau {plateau}; no crossing y0")]
    NoCrossing { zeta_min: f64, plateau: f64 },
    #[error("dominating function is not integrable (tail exponent {exponent})")]
    NotDominatable { exponent: f64 },
    #[error("domination violated at {count} (N, y) points, worst ratio {worst_ratio}")]
    DominationViolated { count: usize, worst_ratio: f64 },
    #[error("mass {mass} deviates from 1 beyond {tol}; domain too small for the target variance")]
    AliasingDetected { mass: f64, tol: f64 },
    #[error("grid density cannot supply frequency {t} (Nyquist {nyquist})")]
    NyquistExceeded { t: f64, nyquist: f64 },
    #[error("intermediate support exceeds the padded domain (lost mass {lost})")]
    SupportOverflow { lost: f64 },
    #[error("grid spacings differ: {0} vs {1}")]
    SpacingMismatch(f64, f64),
    #[error("grids do not match")]
    GridMismatch,
    #[error("spectral integrand not negligible at y_max = {y_max} (value {value})")]
    TailNotNegligible { y_max: f64, value: f64 },
    #[error("N = {n} is below sigma = {sigma}")]
    NBelowSigma { n: u64, sigma: u32 },
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
