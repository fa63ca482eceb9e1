use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("array aperture {aperture:.9} m exceeds the limit {limit:.9} m")]
    ApertureViolation { aperture: f64, limit: f64 },

    #[error("subarray spacing is undefined for a compact array (K = 1)")]
    UndefinedSpacing,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error(
        "user {user}: interference null space has dimension {available}, {required} streams needed"
    )]
    RankDeficient {
        user: usize,
        available: usize,
        required: usize,
    },

    #[error("channel assembly: {0}")]
    Assembly(String),

    #[error("linear algebra: {0}")]
    Linalg(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
