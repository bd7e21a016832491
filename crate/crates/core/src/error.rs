use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("undefined variance: target dimension {0} is constant")]
    UndefinedVariance(usize),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

/// Failures while reading recordings (NDR1 or CSV).
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("bad magic: expected \"NDR1\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("truncated {section}: expected {expected} bytes, found {actual}")]
    Truncated {
        section: &'static str,
        expected: u64,
        actual: u64,
    },
    #[error("size overflow: {0}")]
    Overflow(String),
    #[error("invalid recording: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Failures while loading a manifest/weights checkpoint pair.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("tensor {name} at offset {offset} overlaps the previous tensor ending at {prev_end}")]
    OffsetOverlap {
        name: String,
        offset: usize,
        prev_end: usize,
    },
    #[error("tensor table does not cover the blob: {0}")]
    Coverage(String),
    #[error("tensor {name} has shape {found:?}, config implies {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
}
