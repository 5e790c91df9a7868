use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of matrices, vectors or schemes disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter lies outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data is malformed (non-finite values, overlapping segments, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// A numerical procedure failed (factorization, root bracketing, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Projection of one measurement segment failed.
    #[error("segment {segment}: {source}")]
    Segment {
        segment: usize,
        #[source]
        source: Box<Error>,
    },

    /// Configuration file or command-line options are unusable.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code: 2 configuration, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) => 2,
            Error::Dimension(_) | Error::Input(_) | Error::Csv { .. } | Error::Io { .. } => 3,
            Error::Numerical(_) => 4,
            Error::Segment { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn csv(path: impl AsRef<std::path::Path>, source: csv::Error) -> Self {
        Error::Csv { path: path.as_ref().display().to_string(), source }
    }
}
