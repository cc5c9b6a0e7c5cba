use std::path::PathBuf;

use thiserror::Error;

use crate::ham::MachineId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid environment configuration: {0}")]
    Config(String),

    #[error("episode already terminated")]
    EpisodeDone,

    #[error("machine failed validation: {0}")]
    InvalidMachine(String),

    #[error("unknown machine id {0}")]
    UnknownMachine(MachineId),

    #[error("call stack exceeded {0} frames")]
    CallDepth(usize),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("illegal internal action: {0}")]
    IllegalAction(String),

    #[error("cannot normalize against baseline maximum {0}; the baseline never produced a positive return")]
    Normalization(f64),

    #[error("invalid experiment configuration: {0}")]
    Experiment(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
