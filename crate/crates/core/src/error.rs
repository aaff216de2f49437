use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("state invariant violated: {0}")]
    InvalidState(String),

    #[error("matrix `{0}` is not skew-symmetric")]
    NotSkew(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("thrust magnitude {magnitude:.3e} N is below the singularity guard")]
    ThrustSingularity { magnitude: f64 },

    #[error("desired heading is parallel to the commanded thrust axis")]
    FrameDegenerate,

    #[error("quadrotor position is at the pivot; tether direction undefined")]
    UndefinedDirection,

    #[error("position {norm:.6} m lies outside the reachable ball of radius {radius:.6} m")]
    OutsideReach { norm: f64, radius: f64 },

    #[error("input map is near-singular (condition number {condition:.3e}); tether close to taut")]
    NearTaut { condition: f64 },

    #[error("link {link} points at the antipode of the hanging equilibrium")]
    AntipodalLink { link: usize },

    #[error("gain synthesis failed: {0}")]
    Synthesis(String),

    #[error("non-finite value at t = {t:.6} s; state: {dump}")]
    NonFinite { t: f64, dump: String },

    #[error("link {link} rate {rate:.3e} rad/s exceeds divergence guard at t = {t:.6} s")]
    Divergence { t: f64, link: usize, rate: f64 },

    #[error("controller failed at t = {t:.6} s: {source}")]
    Controller {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("trajectory parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the user's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Solver(_)
                | Error::ThrustSingularity { .. }
                | Error::FrameDegenerate
                | Error::UndefinedDirection
                | Error::OutsideReach { .. }
                | Error::NearTaut { .. }
                | Error::AntipodalLink { .. }
                | Error::Synthesis(_)
                | Error::NonFinite { .. }
                | Error::Divergence { .. }
                | Error::Controller { .. }
                | Error::InvalidState(_)
        )
    }
}
