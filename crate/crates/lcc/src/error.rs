use std::io;
use std::path::PathBuf;

pub type Result<T, E = LccError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LccError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corrupt data at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error(transparent)]
    Codec(#[from] lcc_core::Error),
    #[error("step {0} is not in the chain")]
    MissingStep(u64),
    #[error("chain error: {0}")]
    Chain(String),
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("injected fault at {0}")]
    Injected(&'static str),
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<LccError>,
    },
}

impl LccError {
    pub fn corrupt(offset: usize, reason: impl Into<String>) -> Self {
        LccError::Corrupt { offset: offset as u64, reason: reason.into() }
    }

    /// Attaches the file the error came from.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ LccError::File { .. } => e,
            e => LccError::File { path: path.into(), source: Box::new(e) },
        }
    }

    /// The innermost error, skipping file context.
    pub fn root(&self) -> &LccError {
        match self {
            LccError::File { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code: 1 I/O, 2 bad flags, 3 corrupt input or missing
    /// step, 4 checksum failure.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            LccError::Io(_) | LccError::Injected(_) | LccError::Pipeline(_) => 1,
            LccError::Config(_) => 2,
            LccError::Checksum { .. } => 4,
            LccError::Codec(lcc_core::Error::Config(_)) => 2,
            LccError::Corrupt { .. }
            | LccError::Codec(_)
            | LccError::MissingStep(_)
            | LccError::Chain(_)
            | LccError::File { .. } => 3,
        }
    }
}
