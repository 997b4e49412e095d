use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    /// Malformed binary input; `offset` is the byte where reading failed.
    #[error("{}: at byte offset {offset}: {msg}", path.display())]
    Format { path: PathBuf, offset: u64, msg: String },

    #[error("{}: unsupported model format version {found} (this build reads version {expected})", path.display())]
    Version { path: PathBuf, found: u32, expected: u32 },

    /// Malformed text input.
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{0}")]
    Config(String),

    #[error("dataset '{name}' is not in the cache at {} (run `deepstack fetch {name}` first)", path.display())]
    MissingDataset { name: String, path: PathBuf },

    #[error("checksum mismatch for {}", path.display())]
    Checksum { path: PathBuf },

    #[error("download failed: {0}")]
    Network(String),

    #[error(transparent)]
    Core(#[from] deepstack_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::MissingDataset { .. } => 2,
            Error::Core(deepstack_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}
