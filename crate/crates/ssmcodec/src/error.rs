use std::path::PathBuf;

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Core(#[from] ssmcodec_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    /// Bad arguments or missing inputs, detected before any work starts.
    #[error("{0}")]
    Usage(String),
}

impl CodecError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CodecError::Io { path, source }
    }

    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        CodecError::Format { what, msg: msg.into() }
    }

    /// Process exit status: 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CodecError::Usage(_) => 2,
            _ => 1,
        }
    }
}
