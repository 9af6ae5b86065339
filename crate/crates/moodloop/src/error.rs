use std::path::{Path, PathBuf};

/// Failure classes map to process exit codes: validation 1, I/O 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Transport(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        Error::Invalid(msg.to_string())
    }

    /// Prefix a validation message with the file it came from.
    pub fn in_file(self, path: impl AsRef<Path>) -> Self {
        match self {
            Error::Invalid(m) => Error::Invalid(format!("{}: {m}", path.as_ref().display())),
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) => 1,
            Error::Io { .. } | Error::Transport(_) => 2,
        }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Invalid(e.to_string())
            }
        }
    )*};
}

invalid_from!(
    moodloop_core::token::ParseError,
    moodloop_core::score::ScoreError,
    moodloop_core::tension::TensionError,
    moodloop_core::loops::LoopError,
    moodloop_core::annotate::AnnotateError,
    moodloop_core::generate::GenerateError,
    moodloop_core::evaluate::EvalError,
    moodloop_core::evaluate::survey::SurveyError,
    serde_json::Error,
    toml::de::Error,
    toml::ser::Error,
    csv::Error
);
