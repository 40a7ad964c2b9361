use std::path::PathBuf;

use crate::volume::BlockKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),

    #[error("invalid volume metadata: {0}")]
    InvalidMeta(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("corrupt container: checksum mismatch on chunk {key} at offset {offset}")]
    ChecksumMismatch { key: BlockKey, offset: u64 },

    #[error("corrupt container: {0}")]
    Corrupt(String),

    #[error("chunk {0} not present in container")]
    MissingChunk(BlockKey),

    #[error("frame {index} out of range (movie has {count} frames)")]
    FrameOutOfRange { index: usize, count: usize },

    #[error("lz4 decompression failed for chunk {key}: {message}")]
    Decompress { key: BlockKey, message: String },

    #[error("block of {size} bytes exceeds cache capacity of {capacity} bytes")]
    BlockTooLarge { size: usize, capacity: usize },

    #[error("{kind} line {line}: {message}")]
    Parse {
        kind: &'static str,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("invalid warp: {0}")]
    InvalidWarp(String),

    #[error("image: {0}")]
    Image(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),
}

impl Error {
    pub(crate) fn at_path(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Path {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) | Error::Path { .. } => "io",
            Error::BadMagic { .. } | Error::UnsupportedVersion(_) => "format",
            Error::InvalidMeta(_) => "meta",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::ChecksumMismatch { .. } | Error::Corrupt(_) => "corrupt",
            Error::MissingChunk(_) => "missing-chunk",
            Error::FrameOutOfRange { .. } => "frame-range",
            Error::Decompress { .. } => "decompress",
            Error::BlockTooLarge { .. } => "cache",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::InvalidWarp(_) => "warp",
            Error::Image(_) => "image",
            Error::SizeMismatch(_) => "size-mismatch",
        }
    }
}
