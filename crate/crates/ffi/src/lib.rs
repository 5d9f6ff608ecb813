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

//! C ABI for fluxq.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_from_*`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`FluxqStatus`]; the message of the last failure on the calling
//! thread is available from [`fluxq_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use fluxq::cli::{build_plan, run_config, validate_config, Mode, RunConfig};
use fluxq::gates::GateTally;
use fluxq::pipeline::run_sampled_rate;
use fluxq::propagator::{propagate, SplitStepPlan};
use fluxq::{FluxError, StateVector, C64};

/// Status codes. Values 2–4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxqStatus {
    Ok = 0,
    /// Invalid configuration or argument value.
    Config = 2,
    /// Validation or numerical failure.
    Validation = 3,
    /// Qubit or memory cap exceeded.
    ResourceCap = 4,
    NullPointer = 10,
    InvalidUtf8 = 11,
    /// Caller buffer has the wrong length.
    BufferSize = 12,
    /// Internal panic caught at the boundary.
    Panic = 13,
}

impl From<&FluxError> for FluxqStatus {
    fn from(e: &FluxError) -> Self {
        match e.exit_code() {
            2 => FluxqStatus::Config,
            4 => FluxqStatus::ResourceCap,
            _ => FluxqStatus::Validation,
        }
    }
}

/// Split-step propagator for one grid and potential.
pub struct FluxqPlan {
    plan: SplitStepPlan,
}

/// A register state.
pub struct FluxqState {
    state: StateVector,
}

/// Headline numbers of a sampled rate run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FluxqRateSummary {
    pub k: f64,
    /// NaN when no bootstrap was requested.
    pub k_stderr: f64,
    pub qr: f64,
    pub plateau_spread: f64,
    pub n_levels: usize,
    pub total_shots: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut v = e.borrow_mut();
        v.clear();
        v.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn fail(status: FluxqStatus, msg: &str) -> FluxqStatus {
    set_error(msg);
    status
}

fn fail_with(e: &FluxError) -> FluxqStatus {
    fail(e.into(), &e.to_string())
}

fn fail_all(errs: &[FluxError]) -> FluxqStatus {
    let msg = errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ");
    let status = if errs.iter().any(|e| e.exit_code() == 4) {
        FluxqStatus::ResourceCap
    } else if errs.iter().any(|e| e.exit_code() == 2) {
        FluxqStatus::Config
    } else {
        FluxqStatus::Validation
    };
    fail(status, &msg)
}

fn guard<F: FnOnce() -> FluxqStatus>(f: F) -> FluxqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(FluxqStatus::Panic, &msg)
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, FluxqStatus> {
    if p.is_null() {
        return Err(fail(FluxqStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FluxqStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn parse_config(json: &str) -> Result<RunConfig, FluxqStatus> {
    RunConfig::from_json(json).map_err(|e| fail_with(&e))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fluxq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` is null or valid for `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fluxq_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Build a plan from the `grid` and `potential` sections of a JSON run config.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fluxq_plan_from_json(json: *const c_char, out: *mut *mut FluxqPlan) -> FluxqStatus {
    guard(|| {
        if out.is_null() {
            return fail(FluxqStatus::NullPointer, "null output handle");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = match parse_config(text) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match build_plan(&config) {
            Ok(plan) => {
                *out = Box::into_raw(Box::new(FluxqPlan { plan }));
                FluxqStatus::Ok
            }
            Err(errs) => fail_all(&errs),
        }
    })
}

/// Total qubits of the plan's register, or 0 for a null handle.
///
/// # Safety
/// `plan` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluxq_plan_qubits(plan: *const FluxqPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.plan.grid().total_qubits())
}

/// Time step of the plan, or NaN for a null handle.
///
/// # Safety
/// `plan` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluxq_plan_dt(plan: *const FluxqPlan) -> f64 {
    plan.as_ref().map_or(f64::NAN, |p| p.plan.grid().dt())
}

/// # Safety
/// `plan` is null or a handle from [`fluxq_plan_from_json`], not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fluxq_plan_free(plan: *mut FluxqPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// `|0…0⟩` on `n_qubits` qubits.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fluxq_state_new(n_qubits: usize, out: *mut *mut FluxqState) -> FluxqStatus {
    guard(|| {
        if out.is_null() {
            return fail(FluxqStatus::NullPointer, "null output handle");
        }
        match StateVector::new(n_qubits) {
            Ok(state) => {
                *out = Box::into_raw(Box::new(FluxqState { state }));
                FluxqStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// State from `len` amplitudes given as real and imaginary parts; `len` must
/// be a power of two. `im` may be null for a real state. Not renormalised.
///
/// # Safety
/// `re` (and `im` when non-null) are valid for `len` reads; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn fluxq_state_from_amplitudes(
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut *mut FluxqState,
) -> FluxqStatus {
    guard(|| {
        if out.is_null() || re.is_null() {
            return fail(FluxqStatus::NullPointer, "null amplitude buffer or output handle");
        }
        let re = std::slice::from_raw_parts(re, len);
        let amps: Vec<C64> = if im.is_null() {
            re.iter().map(|&r| C64::new(r, 0.0)).collect()
        } else {
            let im = std::slice::from_raw_parts(im, len);
            re.iter().zip(im).map(|(&r, &i)| C64::new(r, i)).collect()
        };
        match StateVector::from_amplitudes(amps) {
            Ok(state) => {
                *out = Box::into_raw(Box::new(FluxqState { state }));
                FluxqStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Number of amplitudes, or 0 for a null handle.
///
/// # Safety
/// `state` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluxq_state_dim(state: *const FluxqState) -> usize {
    state.as_ref().map_or(0, |s| s.state.dim())
}

/// `Σ|a_j|²`, or NaN for a null handle.
///
/// # Safety
/// `state` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluxq_state_norm_sqr(state: *const FluxqState) -> f64 {
    state.as_ref().map_or(f64::NAN, |s| s.state.norm_sqr())
}

/// Copy amplitudes out; `len` must equal the state dimension. Either buffer
/// may be null to skip it.
///
/// # Safety
/// `state` is a live handle; non-null buffers are valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fluxq_state_amplitudes(
    state: *const FluxqState,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> FluxqStatus {
    guard(|| {
        let Some(s) = state.as_ref() else {
            return fail(FluxqStatus::NullPointer, "null state handle");
        };
        let amps = s.state.amplitudes();
        if len != amps.len() {
            return fail(
                FluxqStatus::BufferSize,
                &format!("buffer holds {len} values, state has {}", amps.len()),
            );
        }
        for (j, a) in amps.iter().enumerate() {
            if !re.is_null() {
                *re.add(j) = a.re;
            }
            if !im.is_null() {
                *im.add(j) = a.im;
            }
        }
        FluxqStatus::Ok
    })
}

/// # Safety
/// `state` is null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fluxq_state_free(state: *mut FluxqState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// Apply `n_steps` split-operator steps in place.
///
/// # Safety
/// `plan` and `state` are live handles.
#[no_mangle]
pub unsafe extern "C" fn fluxq_propagate(plan: *const FluxqPlan, state: *mut FluxqState, n_steps: u64) -> FluxqStatus {
    guard(|| {
        let (Some(p), Some(s)) = (plan.as_ref(), state.as_mut()) else {
            return fail(FluxqStatus::NullPointer, "null plan or state handle");
        };
        match propagate(&mut s.state, &p.plan, n_steps, &mut GateTally::default()) {
            Ok(()) => FluxqStatus::Ok,
            Err(e) => fail_with(&e),
        }
    })
}

/// Run the sampled rate pipeline for a JSON config (rate mode requirements
/// apply) and report the headline numbers. `seed` overrides `sampling.seed`
/// when `use_seed` is nonzero.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fluxq_rate_from_json(
    json: *const c_char,
    use_seed: i32,
    seed: u64,
    out: *mut FluxqRateSummary,
) -> FluxqStatus {
    guard(|| {
        if out.is_null() {
            return fail(FluxqStatus::NullPointer, "null output summary");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let mut config = match parse_config(text) {
            Ok(c) => c,
            Err(s) => return s,
        };
        if use_seed != 0 {
            config.sampling.seed = seed;
        }
        let p = match validate_config(&config, Mode::Rate) {
            Ok(p) => p,
            Err(errs) => return fail_all(&errs),
        };
        let (Some(params), Some(surface), Some(pointer), Some(initial)) =
            (p.rate, p.surface.as_ref(), p.pointer, p.initial.as_ref())
        else {
            return fail(FluxqStatus::Config, "rate mode sections missing");
        };
        match run_sampled_rate(&p.plan, initial, surface, &pointer, &p.pipeline_options(params), config.sampling.seed) {
            Ok(r) => {
                *out = FluxqRateSummary {
                    k: r.rate.k,
                    k_stderr: r.rate.k_stderr.unwrap_or(f64::NAN),
                    qr: r.rate.qr,
                    plateau_spread: r.rate.plateau.spread,
                    n_levels: r.input.len(),
                    total_shots: r.total_shots,
                };
                FluxqStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Run one mode exactly as the command-line tool does, writing artifacts to
/// `out_dir`. `mode` is one of "propagate", "spectrum", "rate", "validate".
/// Returns the command-line exit code (0, 2, 3 or 4), or a [`FluxqStatus`]
/// above 4 for argument errors.
///
/// # Safety
/// All strings are NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fluxq_run(mode: *const c_char, json: *const c_char, out_dir: *const c_char) -> i32 {
    let status = guard(|| {
        let (mode, text, out) = match (read_str(mode), read_str(json), read_str(out_dir)) {
            (Ok(m), Ok(t), Ok(o)) => (m, t, o),
            (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
        };
        let mode = match mode {
            "propagate" => Mode::Propagate,
            "spectrum" => Mode::Spectrum,
            "rate" => Mode::Rate,
            "validate" => Mode::Validate,
            other => return fail(FluxqStatus::Config, &format!("unknown mode {other:?}")),
        };
        let config = match parse_config(text) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let summary = run_config(&config, mode, &PathBuf::from(out), None, Instant::now());
        if let Some(e) = summary.errors.first() {
            set_error(&e.message);
        }
        match summary.exit_code {
            0 => FluxqStatus::Ok,
            2 => FluxqStatus::Config,
            4 => FluxqStatus::ResourceCap,
            _ => FluxqStatus::Validation,
        }
    });
    status as i32
}
