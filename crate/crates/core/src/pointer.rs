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

//! Pointer register coupled to the system by conditional powers of the step.
//!
//! The pointer occupies the `K` most significant qubits of the joint register,
//! so joint index `x·2^ν + j` holds pointer value `x` and system index `j`,
//! and each pointer value owns a contiguous block of `2^ν` amplitudes.
//!
//! `QFT` on the pointer, then `U^{p·t}` on block `p`, then `QFT⁻¹`, moves an
//! eigenvector with `U v = e^{iθ} v` from `|x⟩` to `|x + tθ·2^K/2π⟩`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::gates::{qft_slice, GateTally, QubitRange};
use crate::propagator::{quasi_energy, SplitStepPlan};
use crate::qreg::{StateVector, C64, MAX_QUBITS};
use crate::sampling::{shot_rng, Categorical};

pub const MAX_POINTER_QUBITS: usize = 16;

const SPECTRUM_STREAM: u64 = 0x5350;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointerConfig {
    pub k: usize,
    #[serde(default)]
    pub x0: usize,
    #[serde(default = "one")]
    pub t_units: u32,
}

fn one() -> u32 {
    1
}

impl PointerConfig {
    pub fn new(k: usize, x0: usize, t_units: u32) -> Result<Self> {
        let c = PointerConfig { k, x0, t_units };
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        if self.k == 0 || self.k > MAX_POINTER_QUBITS {
            return Err(FluxError::Config(format!(
                "pointer needs 1..={MAX_POINTER_QUBITS} qubits, got {}",
                self.k
            )));
        }
        if self.x0 >= 1 << self.k {
            return Err(FluxError::Range {
                what: "pointer reading",
                index: self.x0,
                limit: 1 << self.k,
            });
        }
        Ok(())
    }

    pub fn n_values(&self) -> usize {
        1 << self.k
    }

    /// Phase resolution `2π/2^K`.
    pub fn resolution(&self) -> f64 {
        2.0 * PI / self.n_values() as f64
    }
}

/// System register plus pointer register.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    nu: usize,
    k: usize,
    amps: Vec<C64>,
    // system factor while the joint state is still a product
    product: Option<StateVector>,
}

impl JointState {
    pub fn system_qubits(&self) -> usize {
        self.nu
    }

    pub fn pointer_qubits(&self) -> usize {
        self.k
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// Amplitudes of pointer value `x`, one per system basis state.
    pub fn block(&self, x: usize) -> &[C64] {
        let n = 1 << self.nu;
        &self.amps[x * n..(x + 1) * n]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Whether the joint state is still known to factorise.
    pub fn is_product(&self) -> bool {
        self.product.is_some()
    }

    /// Forget the product structure so that evolution takes the general path.
    pub fn forget_product(&mut self) {
        self.product = None;
    }

    /// Reduced system probabilities `Σ_x |ψ(x, j)|²`.
    pub fn system_probabilities(&self) -> Vec<f64> {
        let n = 1 << self.nu;
        let mut p = vec![0.0; n];
        for x in 0..1 << self.k {
            for (pj, a) in p.iter_mut().zip(self.block(x)) {
                *pj += a.norm_sqr();
            }
        }
        p
    }
}

/// `main ⊗ |x0⟩`.
pub fn attach_pointer(main: &StateVector, cfg: &PointerConfig) -> Result<JointState> {
    cfg.check()?;
    let nu = main.n_qubits();
    if nu + cfg.k > MAX_QUBITS {
        return Err(FluxError::ResourceCap(format!(
            "joint register of {} qubits exceeds the cap of {MAX_QUBITS}",
            nu + cfg.k
        )));
    }
    let n = 1usize << nu;
    let mut amps = vec![C64::new(0.0, 0.0); n << cfg.k];
    amps[cfg.x0 * n..(cfg.x0 + 1) * n].copy_from_slice(main.amplitudes());
    Ok(JointState {
        nu,
        k: cfg.k,
        amps,
        product: Some(main.clone()),
    })
}

/// `QFT⁻¹_ptr · (Σ_p |p⟩⟨p| ⊗ U^{p·t}) · QFT_ptr`.
///
/// A product state is evolved incrementally: block `p` is a multiple of the
/// system state after the pointer transform, so `U^{p·t}ψ` is built once by
/// stepping `t` times per pointer value. Entangled inputs take the literal
/// loop of `p·t` steps per block.
pub fn conditional_evolution(
    joint: &mut JointState,
    plan: &SplitStepPlan,
    cfg: &PointerConfig,
    tally: &mut GateTally,
) -> Result<()> {
    cfg.check()?;
    if joint.k != cfg.k || joint.nu != plan.grid().total_qubits() {
        return Err(FluxError::Config(format!(
            "joint register ({} + {} qubits) does not match plan ({}) and pointer ({})",
            joint.nu,
            joint.k,
            plan.grid().total_qubits(),
            cfg.k
        )));
    }
    if cfg.t_units == 0 {
        return Ok(());
    }
    let range = QubitRange::new(joint.nu, joint.k);
    qft_slice(&mut joint.amps, range, false, tally)?;
    let n = 1usize << joint.nu;
    let t = cfg.t_units as u64;
    match joint.product.take() {
        Some(psi) => {
            let mut phi = psi.amplitudes().to_vec();
            for (p, block) in joint.amps.chunks_mut(n).enumerate() {
                if p > 0 {
                    for _ in 0..t {
                        plan.step_slice(&mut phi, tally);
                    }
                }
                let c: C64 = psi.amplitudes().iter().zip(block.iter()).map(|(a, b)| a.conj() * b).sum();
                block.iter_mut().zip(&phi).for_each(|(b, f)| *b = c * f);
            }
        }
        None => {
            for (p, block) in joint.amps.chunks_mut(n).enumerate() {
                for _ in 0..p as u64 * t {
                    plan.step_slice(block, tally);
                }
            }
        }
    }
    qft_slice(&mut joint.amps, range, true, tally)
}

/// Pointer marginal `P(x) = Σ_j |ψ(x, j)|²`.
pub fn pointer_marginal(joint: &JointState) -> Vec<f64> {
    let n = 1usize << joint.nu;
    joint
        .amps
        .chunks(n)
        .map(|b| b.iter().map(|a| a.norm_sqr()).sum())
        .collect()
}

/// Renormalised system state conditioned on pointer value `x`.
pub fn collapsed_state(joint: &JointState, x: usize) -> Result<StateVector> {
    if x >= 1 << joint.k {
        return Err(FluxError::Range {
            what: "pointer value",
            index: x,
            limit: 1 << joint.k,
        });
    }
    let mut s = StateVector::from_amplitudes(joint.block(x).to_vec())?;
    s.normalize()
        .map_err(|_| FluxError::Invariant(format!("pointer value {x} has zero probability")))?;
    Ok(s)
}

/// Read the pointer once and collapse the system accordingly.
pub fn measure_pointer(joint: JointState, rng_seed: u64) -> Result<(usize, StateVector)> {
    let dev = (joint.norm_sqr() - 1.0).abs();
    if dev > 1e-9 {
        return Err(FluxError::Invariant(format!("joint state norm deviates by {dev:.3e}")));
    }
    let cat = Categorical::new(&pointer_marginal(&joint))?;
    let x = cat.sample(&mut shot_rng(rng_seed, SPECTRUM_STREAM, 0));
    let s = collapsed_state(&joint, x)?;
    Ok((x, s))
}

/// One occupied pointer value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBin {
    pub bin: usize,
    /// `2π(bin − x0)/2^K`.
    pub phase: f64,
    pub energy: f64,
    pub weight: f64,
    pub shots: u64,
}

/// A resolved eigenlevel: a histogram peak with its neighbourhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    /// Peak pointer value.
    pub bin: usize,
    /// Phase refined from the counts of the two neighbouring bins.
    pub phase: f64,
    pub energy: f64,
    /// Fraction of shots within the summation window around the peak.
    pub weight: f64,
    pub shots: u64,
    /// System state after a pointer reading equal to `bin`.
    #[serde(skip)]
    pub collapsed: Option<StateVector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    /// Smallest window weight accepted as a level.
    pub min_weight: f64,
    /// Weaker local maxima this close to an accepted peak are side lobes.
    pub suppress_radius: usize,
    /// Half-width of the window whose counts form a level's weight.
    pub sum_radius: usize,
}

impl Default for PeakOptions {
    fn default() -> Self {
        PeakOptions {
            min_weight: 0.01,
            suppress_radius: 4,
            sum_radius: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub k: usize,
    pub x0: usize,
    pub t_units: u32,
    pub dt: f64,
    pub reference_phase: f64,
    pub n_shots: u64,
    pub histogram: Vec<u64>,
    pub bins: Vec<SpectrumBin>,
    pub levels: Vec<LevelEstimate>,
}

impl SpectrumEstimate {
    pub fn energy_of_phase(&self, phase: f64) -> f64 {
        quasi_energy(phase, self.dt, self.t_units, self.reference_phase)
    }

    pub fn phase_of_bin(&self, bin: f64) -> f64 {
        let p = (1usize << self.k) as f64;
        (2.0 * PI * (bin - self.x0 as f64) / p).rem_euclid(2.0 * PI)
    }

    /// Peak position in fractional bins from a histogram (possibly resampled).
    pub fn refine(&self, counts: &[u64], bin: usize) -> f64 {
        refine_peak(counts, bin)
    }
}

fn circ(p: usize, b: isize) -> usize {
    b.rem_euclid(p as isize) as usize
}

/// Sub-bin offset of a peak from the ratio of its larger neighbour.
///
/// For a phase `δ` bins right of `b` the kernel gives `c_{b+1}/c_b ≈ (δ/(1−δ))²`.
pub fn refine_peak(counts: &[u64], b: usize) -> f64 {
    let p = counts.len();
    let cb = counts[b].max(1) as f64;
    let cl = counts[circ(p, b as isize - 1)] as f64;
    let cr = counts[circ(p, b as isize + 1)] as f64;
    if cr >= cl {
        let r = (cr / cb).sqrt();
        b as f64 + r / (1.0 + r)
    } else {
        let r = (cl / cb).sqrt();
        b as f64 - r / (1.0 + r)
    }
}

/// Local maxima sorted by height, side lobes suppressed, light peaks dropped.
/// Returns `(bin, window shots)`.
pub fn detect_peaks(counts: &[u64], opts: &PeakOptions) -> Vec<(usize, u64)> {
    let p = counts.len();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Vec::new();
    }
    let mut cand: Vec<usize> = (0..p)
        .filter(|&b| {
            counts[b] > 0 && counts[b] >= counts[circ(p, b as isize - 1)] && counts[b] >= counts[circ(p, b as isize + 1)]
        })
        .collect();
    cand.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut out: Vec<(usize, u64)> = Vec::new();
    let dist = |a: usize, b: usize| {
        let d = a.abs_diff(b);
        d.min(p - d)
    };
    for b in cand {
        if out.iter().any(|&(a, _)| dist(a, b) <= opts.suppress_radius) {
            continue;
        }
        let r = opts.sum_radius as isize;
        let w: u64 = (-r..=r).map(|o| counts[circ(p, b as isize + o)]).sum();
        if w as f64 >= opts.min_weight * total as f64 {
            out.push((b, w));
        }
    }
    out
}

/// Prepare, couple, read out, repeated `n_shots` times.
///
/// The joint state after conditional evolution is computed once; each shot
/// is an independent Born draw from its pointer marginal.
pub fn estimate_spectrum(
    initial: &StateVector,
    plan: &SplitStepPlan,
    cfg: &PointerConfig,
    n_shots: u64,
    rng_seed: u64,
    opts: &PeakOptions,
    tally: &mut GateTally,
) -> Result<SpectrumEstimate> {
    cfg.check()?;
    let mut est = SpectrumEstimate {
        k: cfg.k,
        x0: cfg.x0,
        t_units: cfg.t_units,
        dt: plan.grid().dt(),
        reference_phase: plan.reference_phase(),
        n_shots,
        histogram: vec![0; cfg.n_values()],
        bins: Vec::new(),
        levels: Vec::new(),
    };
    if n_shots == 0 {
        return Ok(est);
    }
    initial.check_normalized(1e-9)?;
    let mut joint = attach_pointer(initial, cfg)?;
    conditional_evolution(&mut joint, plan, cfg, tally)?;
    let counts = Categorical::new(&pointer_marginal(&joint))?.histogram(n_shots, rng_seed, SPECTRUM_STREAM);
    est.bins = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(b, &c)| {
            let phase = est.phase_of_bin(b as f64);
            SpectrumBin {
                bin: b,
                phase,
                energy: est.energy_of_phase(phase),
                weight: c as f64 / n_shots as f64,
                shots: c,
            }
        })
        .collect();
    let mut levels = Vec::new();
    for (b, w) in detect_peaks(&counts, opts) {
        let phase = est.phase_of_bin(refine_peak(&counts, b));
        levels.push(LevelEstimate {
            bin: b,
            phase,
            energy: est.energy_of_phase(phase),
            weight: w as f64 / n_shots as f64,
            shots: w,
            collapsed: Some(collapsed_state(&joint, b)?),
        });
    }
    levels.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    est.levels = levels;
    est.histogram = counts;
    Ok(est)
}

/// Amplitude of pointer value `x` for a single eigenphase `θ`:
/// `2^{-K} Σ_p e^{ip(tθ − 2π(x−x0)/2^K)}`.
pub fn pointer_kernel(theta: f64, x: usize, cfg: &PointerConfig) -> C64 {
    let p = cfg.n_values() as f64;
    let d = cfg.t_units as f64 * theta - 2.0 * PI * (x as f64 - cfg.x0 as f64) / p;
    let den = C64::from_polar(1.0, d) - 1.0;
    if den.norm() < 1e-12 {
        return C64::new(1.0, 0.0);
    }
    (C64::from_polar(1.0, p * d) - 1.0) / den / p
}
