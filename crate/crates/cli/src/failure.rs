use std::fmt;

use tdflio::dataset::DatasetError;
use tdflio::pipeline::PipelineError;
use tdflio::tdf::TdfError;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INSUFFICIENT: u8 = 3;
pub const EXIT_RESOURCE: u8 = 4;

/// Fatal error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }

    pub fn insufficient(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INSUFFICIENT,
            error: error.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut text = String::new();
        for cause in self.error.chain() {
            let part = cause.to_string();
            if !text.contains(&part) {
                if !text.is_empty() {
                    text += ": ";
                }
                text += &part;
            }
        }
        f.write_str(&text)
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        let code = if e.is_input_error() {
            EXIT_INPUT
        } else {
            EXIT_INSUFFICIENT
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

impl From<TdfError> for Failure {
    fn from(e: TdfError) -> Self {
        let code = if e.is_resource_limit() {
            EXIT_RESOURCE
        } else {
            EXIT_INPUT
        };
        Self {
            code,
            error: e.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Map(e) => e.into(),
            PipelineError::Dataset(e) => e.into(),
            e => Self::input(e),
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;
