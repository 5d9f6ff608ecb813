// Copyright 2026 The fluxq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use thiserror::Error;

/// Errors produced by the simulator.
///
/// Every variant maps onto one of the CLI exit codes through [`FluxError::exit_code`].
#[derive(Debug, Error)]
pub enum FluxError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what} {index} out of range (limit {limit})")]
    Range {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("non-finite phase {value} at basis index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("inconsistent sign assignment on {conflicts} hypercube edge(s); worst edge ({i}, {k}) at {sigma:.1} sigma")]
    SignInconsistency {
        conflicts: usize,
        i: usize,
        k: usize,
        sigma: f64,
    },

    #[error("empty spectrum: {0}")]
    EmptySpectrum(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl FluxError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            FluxError::Config(_) | FluxError::Range { .. } | FluxError::Json(_) => 2,
            FluxError::ResourceCap(_) => 4,
            _ => 3,
        }
    }

    /// Short machine-readable tag used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            FluxError::Config(_) => "config",
            FluxError::Range { .. } => "range",
            FluxError::Invariant(_) => "invariant",
            FluxError::NonFinite { .. } => "non_finite",
            FluxError::ResourceCap(_) => "resource_cap",
            FluxError::SignInconsistency { .. } => "sign_inconsistency",
            FluxError::EmptySpectrum(_) => "empty_spectrum",
            FluxError::Validation(_) => "validation",
            FluxError::Io(_) => "io",
            FluxError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, FluxError>;
