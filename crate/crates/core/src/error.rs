// Copyright 2026 The iobalance Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// The variants are grouped by class; [`Error::exit_code`] maps each class
/// onto the stable process exit code used by the command-line tool.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("{0} is undefined for an empty workload collection")]
    EmptyCollection(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("design matrix is rank deficient (column {column} is linearly dependent)")]
    Singular { column: usize },

    #[error("too few observations: {rows} rows for {terms} terms")]
    TooFewRows { rows: usize, terms: usize },

    #[error("fit failed for the {slot} workload model: {source}")]
    ModelFit {
        slot: String,
        #[source]
        source: Box<Error>,
    },

    #[error("infeasible placement: {0}")]
    Infeasible(String),

    #[error("malformed {what} at line {line}, column {column}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid {what}: {message}")]
    Validation { what: &'static str, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(what: &'static str, err: &serde_json::Error) -> Self {
        Error::Parse {
            what,
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    ///
    /// 2 = configuration or input error, 3 = model fit failure,
    /// 4 = infeasible placement, 5 = I/O failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidValue(_)
            | Error::EmptyCollection(_)
            | Error::Config(_)
            | Error::Parse { .. }
            | Error::Validation { .. } => 2,
            Error::Singular { .. } | Error::TooFewRows { .. } | Error::ModelFit { .. } => 3,
            Error::Infeasible(_) => 4,
            Error::Io { .. } => 5,
        }
    }
}
