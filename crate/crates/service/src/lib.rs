//! Service layer over `earlywarn-core`: the HTTP API, alert fan-out, the
//! open-loop load generator, calculator presets and the operator CLI.

pub mod alerts;
pub mod api;
pub mod cli;
pub mod loadgen;
pub mod pipeline;
pub mod presets;

use std::io;

use earlywarn_core::grid::GridError;
use earlywarn_core::inference::InferenceError;
use earlywarn_core::ingest::IngestError;
use earlywarn_core::serve::ServeError;
use earlywarn_core::store::StoreError;

/// Error with a stable, machine-readable `kind`.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct Error {
    pub kind: String,
    pub message: String,
}

impl Error {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self { kind: kind.into(), message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new("invalid_argument", message)
    }
}

macro_rules! kinded {
    ($($t:ty),*) => {$(
        impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::new(e.kind(), e.to_string())
            }
        }
    )*};
}

kinded!(ServeError, StoreError, InferenceError, IngestError, GridError, loadgen::LoadgenError);

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::new("io", e.to_string())
    }
}
