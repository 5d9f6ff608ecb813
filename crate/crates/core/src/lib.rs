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

//! Gate-level simulation of a quantum algorithm for thermal rate constants.
//!
//! A position-grid wavefunction lives in a qubit register ([`qreg`]). It is
//! propagated with split-operator steps built from diagonal phases and the
//! quantum Fourier transform ([`gates`], [`propagator`]). A pointer register
//! coupled through conditional powers of the step reads out quasi-energies
//! ([`pointer`]); Hadamard-basis measurements recover signed eigenstate
//! amplitudes ([`amplitudes`]). From energies and amplitudes the flux-flux
//! correlation function and rate constant follow classically ([`rate`]).
//! [`oracle`] computes every intermediate quantity by dense linear algebra.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amplitudes;
pub mod cli;
pub mod error;
pub mod gates;
pub mod oracle;
pub mod pipeline;
pub mod pointer;
pub mod propagator;
pub mod qreg;
pub mod rate;
pub mod sampling;

pub use error::{FluxError, Result};
pub use qreg::{GridSpec, StateVector, C64};
