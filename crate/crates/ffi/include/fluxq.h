/* Copyright 2026 The fluxq Authors. Licensed under the Apache License, Version 2.0. */

#ifndef FLUXQ_H
#define FLUXQ_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 2–4 match the command-line exit codes.
 */
typedef enum FluxqStatus {
  FLUXQ_STATUS_OK = 0,
  /**
   * Invalid configuration or argument value.
   */
  FLUXQ_STATUS_CONFIG = 2,
  /**
   * Validation or numerical failure.
   */
  FLUXQ_STATUS_VALIDATION = 3,
  /**
   * Qubit or memory cap exceeded.
   */
  FLUXQ_STATUS_RESOURCE_CAP = 4,
  FLUXQ_STATUS_NULL_POINTER = 10,
  FLUXQ_STATUS_INVALID_UTF8 = 11,
  /**
   * Caller buffer has the wrong length.
   */
  FLUXQ_STATUS_BUFFER_SIZE = 12,
  /**
   * Internal panic caught at the boundary.
   */
  FLUXQ_STATUS_PANIC = 13,
} FluxqStatus;

/**
 * Split-step propagator for one grid and potential.
 */
typedef struct FluxqPlan FluxqPlan;

/**
 * A register state.
 */
typedef struct FluxqState FluxqState;

/**
 * Headline numbers of a sampled rate run.
 */
typedef struct FluxqRateSummary {
  double k;
  /**
   * NaN when no bootstrap was requested.
   */
  double k_stderr;
  double qr;
  double plateau_spread;
  size_t n_levels;
  uint64_t total_shots;
} FluxqRateSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fluxq_version(void);

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` is null or valid for `len` writable bytes.
 */
size_t fluxq_last_error(char *buf, size_t len);

/**
 * Build a plan from the `grid` and `potential` sections of a JSON run config.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is a valid pointer.
 */
enum FluxqStatus fluxq_plan_from_json(const char *json, struct FluxqPlan **out);

/**
 * Total qubits of the plan's register, or 0 for a null handle.
 *
 * # Safety
 * `plan` is null or a live handle.
 */
size_t fluxq_plan_qubits(const struct FluxqPlan *plan);

/**
 * Time step of the plan, or NaN for a null handle.
 *
 * # Safety
 * `plan` is null or a live handle.
 */
double fluxq_plan_dt(const struct FluxqPlan *plan);

/**
 * # Safety
 * `plan` is null or a handle from [`fluxq_plan_from_json`], not used afterwards.
 */
void fluxq_plan_free(struct FluxqPlan *plan);

/**
 * `|0…0⟩` on `n_qubits` qubits.
 *
 * # Safety
 * `out` is a valid pointer.
 */
enum FluxqStatus fluxq_state_new(size_t n_qubits, struct FluxqState **out);

/**
 * State from `len` amplitudes given as real and imaginary parts; `len` must
 * be a power of two. `im` may be null for a real state. Not renormalised.
 *
 * # Safety
 * `re` (and `im` when non-null) are valid for `len` reads; `out` is valid.
 */
enum FluxqStatus fluxq_state_from_amplitudes(const double *re,
                                             const double *im,
                                             size_t len,
                                             struct FluxqState **out);

/**
 * Number of amplitudes, or 0 for a null handle.
 *
 * # Safety
 * `state` is null or a live handle.
 */
size_t fluxq_state_dim(const struct FluxqState *state);

/**
 * `Σ|a_j|²`, or NaN for a null handle.
 *
 * # Safety
 * `state` is null or a live handle.
 */
double fluxq_state_norm_sqr(const struct FluxqState *state);

/**
 * Copy amplitudes out; `len` must equal the state dimension. Either buffer
 * may be null to skip it.
 *
 * # Safety
 * `state` is a live handle; non-null buffers are valid for `len` writes.
 */
enum FluxqStatus fluxq_state_amplitudes(const struct FluxqState *state,
                                        double *re,
                                        double *im,
                                        size_t len);

/**
 * # Safety
 * `state` is null or a handle from this library, not used afterwards.
 */
void fluxq_state_free(struct FluxqState *state);

/**
 * Apply `n_steps` split-operator steps in place.
 *
 * # Safety
 * `plan` and `state` are live handles.
 */
enum FluxqStatus fluxq_propagate(const struct FluxqPlan *plan,
                                 struct FluxqState *state,
                                 uint64_t n_steps);

/**
 * Run the sampled rate pipeline for a JSON config (rate mode requirements
 * apply) and report the headline numbers. `seed` overrides `sampling.seed`
 * when `use_seed` is nonzero.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is a valid pointer.
 */
enum FluxqStatus fluxq_rate_from_json(const char *json,
                                      int32_t use_seed,
                                      uint64_t seed,
                                      struct FluxqRateSummary *out);

/**
 * Run one mode exactly as the command-line tool does, writing artifacts to
 * `out_dir`. `mode` is one of "propagate", "spectrum", "rate", "validate".
 * Returns the command-line exit code (0, 2, 3 or 4), or a [`FluxqStatus`]
 * above 4 for argument errors.
 *
 * # Safety
 * All strings are NUL-terminated.
 */
int32_t fluxq_run(const char *mode, const char *json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLUXQ_H */
