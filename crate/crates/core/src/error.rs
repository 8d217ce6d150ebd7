use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cube contains no cell centers of the grid")]
    EmptyCube,
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("collection does not belong to this grid: {0}")]
    MismatchedCollection(String),
    #[error("no translated dyadic cube covers the dilated cube (side {side}, k = {k})")]
    NoShiftedCover { side: String, k: u32 },
    #[error("inadmissible power exponent {a} for p = {p}")]
    InadmissibleExponent { a: f64, p: f64 },
    #[error("malformed rational {0:?}")]
    Rational(String),
    #[error("invalid shift specification: {0}")]
    Shift(String),
    #[error("invalid kernel: {0}")]
    Kernel(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
