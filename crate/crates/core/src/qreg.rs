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

//! Qubit register: dense state vectors, grid bookkeeping and Born-rule readout.
//!
//! Basis index `j` is read as a ν-bit integer. Qubit `q` is bit `q` of `j`
//! (weight `2^q`). Grid coordinates are packed with degree of freedom 0 in the
//! most significant `l` bits and each coordinate written most significant bit
//! first, so `(2, 3)` on a 2×2-qubit grid is `0b10_11 = 11`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::sampling::Categorical;

pub type C64 = Complex64;

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 26;

/// Tolerance on `m Δx² / Δt = 2π / 2^l`, relative.
pub const RESONANCE_TOL: f64 = 1e-12;

/// Norm deviation above which sampling refuses a state.
pub const SAMPLING_NORM_TOL: f64 = 1e-9;

/// Discretisation of configuration space and time (ħ = 1).
///
/// Every degree of freedom gets `qubits_per_dof` qubits and must satisfy the
/// resonance condition `mass[k] * dx[k]^2 / dt = 2π / 2^l`, which is what lets
/// the free propagator split into chirp, Fourier transform, chirp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    qubits_per_dof: usize,
    dx: Vec<f64>,
    dt: f64,
    mass: Vec<f64>,
}

impl GridSpec {
    pub fn new(qubits_per_dof: usize, dx: Vec<f64>, dt: f64, mass: Vec<f64>) -> Result<Self> {
        let errors = Self::check(qubits_per_dof, &dx, dt, &mass);
        if let Some(first) = errors.into_iter().next() {
            return Err(first);
        }
        Ok(GridSpec {
            qubits_per_dof,
            dx,
            dt,
            mass,
        })
    }

    /// Build a grid whose time step is solved from the resonance condition of degree 0.
    pub fn resonant(qubits_per_dof: usize, dx: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if dx.is_empty() || mass.is_empty() {
            return Err(FluxError::Config("grid needs at least one degree of freedom".into()));
        }
        let dt = resonant_dt(qubits_per_dof, dx[0], mass[0]);
        Self::new(qubits_per_dof, dx, dt, mass)
    }

    /// All problems with a candidate grid, not just the first.
    pub fn check(qubits_per_dof: usize, dx: &[f64], dt: f64, mass: &[f64]) -> Vec<FluxError> {
        let mut errs = Vec::new();
        let dofs = dx.len();
        if dofs == 0 {
            errs.push(FluxError::Config("grid needs at least one degree of freedom".into()));
            return errs;
        }
        if mass.len() != dofs {
            errs.push(FluxError::Config(format!(
                "mass has {} entries but dx has {}",
                mass.len(),
                dofs
            )));
            return errs;
        }
        if qubits_per_dof == 0 {
            errs.push(FluxError::Config(
                "qubits per degree must be at least 1 (2π Δt/(m Δx²) = 1 is a degenerate grid)".into(),
            ));
            return errs;
        }
        if qubits_per_dof * dofs > MAX_QUBITS {
            errs.push(FluxError::ResourceCap(format!(
                "{} qubits requested, cap is {MAX_QUBITS}",
                qubits_per_dof * dofs
            )));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            errs.push(FluxError::Config(format!("time step must be positive, got {dt}")));
            return errs;
        }
        for k in 0..dofs {
            if !(dx[k] > 0.0) || !(mass[k] > 0.0) || !dx[k].is_finite() || !mass[k].is_finite() {
                errs.push(FluxError::Config(format!(
                    "degree {k}: dx and mass must be positive and finite"
                )));
                continue;
            }
            let lhs = mass[k] * dx[k] * dx[k] / dt;
            let rhs = 2.0 * PI / (1u64 << qubits_per_dof) as f64;
            if ((lhs - rhs) / rhs).abs() > RESONANCE_TOL {
                errs.push(FluxError::Config(format!(
                    "degree {k}: m·dx²/dt = {lhs:.12e} but resonance requires 2π/2^{qubits_per_dof} = {rhs:.12e}; \
                     nearest consistent dt = {:.15e}",
                    resonant_dt(qubits_per_dof, dx[k], mass[k])
                )));
            }
        }
        errs
    }

    /// Number of degrees of freedom `M`.
    pub fn dofs(&self) -> usize {
        self.dx.len()
    }

    /// Qubits per degree `l`.
    pub fn qubits_per_dof(&self) -> usize {
        self.qubits_per_dof
    }

    /// Total qubits `ν = l·M`.
    pub fn total_qubits(&self) -> usize {
        self.qubits_per_dof * self.dofs()
    }

    /// Grid points per degree `2^l`.
    pub fn points_per_dof(&self) -> usize {
        1 << self.qubits_per_dof
    }

    /// Hilbert space dimension `N = 2^ν`.
    pub fn dim(&self) -> usize {
        1 << self.total_qubits()
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Lowest qubit (bit position) of degree `d`'s block.
    pub fn dof_low_qubit(&self, d: usize) -> usize {
        (self.dofs() - 1 - d) * self.qubits_per_dof
    }

    /// Physical coordinates of basis state `j` (grid origin at zero).
    pub fn position(&self, j: usize) -> Vec<f64> {
        let l = self.qubits_per_dof;
        let mask = (1usize << l) - 1;
        (0..self.dofs())
            .map(|d| ((j >> self.dof_low_qubit(d)) & mask) as f64 * self.dx[d])
            .collect()
    }

    /// Length of the periodic box along degree `d`.
    pub fn box_length(&self, d: usize) -> f64 {
        self.points_per_dof() as f64 * self.dx[d]
    }
}

/// Time step satisfying the resonance condition for one degree.
pub fn resonant_dt(qubits_per_dof: usize, dx: f64, mass: f64) -> f64 {
    mass * dx * dx * (1u64 << qubits_per_dof) as f64 / (2.0 * PI)
}

/// Pack per-degree grid coordinates into a basis index.
pub fn grid_to_index(coords: &[usize], spec: &GridSpec) -> Result<usize> {
    if coords.len() != spec.dofs() {
        return Err(FluxError::Config(format!(
            "expected {} coordinates, got {}",
            spec.dofs(),
            coords.len()
        )));
    }
    let n = spec.points_per_dof();
    let mut j = 0usize;
    for &c in coords {
        if c >= n {
            return Err(FluxError::Range {
                what: "grid coordinate",
                index: c,
                limit: n,
            });
        }
        j = (j << spec.qubits_per_dof()) | c;
    }
    Ok(j)
}

/// Inverse of [`grid_to_index`].
pub fn index_to_grid(j: usize, spec: &GridSpec) -> Result<Vec<usize>> {
    if j >= spec.dim() {
        return Err(FluxError::Range {
            what: "basis index",
            index: j,
            limit: spec.dim(),
        });
    }
    let mask = spec.points_per_dof() - 1;
    Ok((0..spec.dofs())
        .map(|d| (j >> spec.dof_low_qubit(d)) & mask)
        .collect())
}

/// One distinct measurement outcome and how often it occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub outcome: usize,
    pub repeat: u64,
}

/// Dense register of `2^ν` complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

/// `|0…0⟩` on `n_qubits` qubits.
pub fn new_register(n_qubits: usize) -> Result<StateVector> {
    StateVector::new(n_qubits)
}

impl StateVector {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(FluxError::Config("a register needs at least one qubit".into()));
        }
        if n_qubits > MAX_QUBITS {
            return Err(FluxError::ResourceCap(format!(
                "{n_qubits} qubits requested, cap is {MAX_QUBITS}"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = C64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    /// Wrap raw amplitudes; the length must be a power of two. No normalisation is applied.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let n = amps.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(FluxError::Config(format!(
                "amplitude count {n} is not a power of two ≥ 2"
            )));
        }
        let n_qubits = n.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(FluxError::ResourceCap(format!(
                "{n_qubits} qubits requested, cap is {MAX_QUBITS}"
            )));
        }
        Ok(StateVector { n_qubits, amps })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::from_amplitudes(values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    /// Computational basis state `|j⟩`.
    pub fn basis(n_qubits: usize, j: usize) -> Result<Self> {
        let mut s = Self::new(n_qubits)?;
        if j >= s.dim() {
            return Err(FluxError::Range {
                what: "basis index",
                index: j,
                limit: s.dim(),
            });
        }
        s.amps[0] = C64::new(0.0, 0.0);
        s.amps[j] = C64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Rescale to unit norm and return the norm it had.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm_sqr().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(FluxError::Config("cannot normalise a zero or non-finite vector".into()));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(n)
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let dev = (self.norm_sqr() - 1.0).abs();
        if dev > tol {
            return Err(FluxError::Invariant(format!(
                "state norm deviates from 1 by {dev:.3e} (tolerance {tol:.0e})"
            )));
        }
        Ok(())
    }

    /// Largest entrywise distance to `other` after removing the best global phase.
    pub fn distance_up_to_phase(&self, other: &StateVector) -> f64 {
        let ov = self.inner(other);
        let phase = if ov.norm() > 0.0 { ov / ov.norm() } else { C64::new(1.0, 0.0) };
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a * phase - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise distance to `other`.
    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Sample `n_shots` computational-basis outcomes with Born probabilities.
///
/// The state is not collapsed: each shot stands for a fresh preparation of the
/// same register. Outcomes are returned once each, sorted, with repeat counts.
pub fn measure_all(state: &StateVector, n_shots: u64, rng_seed: u64) -> Result<Vec<Shot>> {
    state.check_normalized(SAMPLING_NORM_TOL)?;
    let counts = Categorical::new(&state.probabilities())?.histogram(n_shots, rng_seed, 0);
    Ok(counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(outcome, repeat)| Shot { outcome, repeat })
        .collect())
}

/// Expand shots back into a dense count table of length `dim`.
pub fn shot_histogram(shots: &[Shot], dim: usize) -> Vec<u64> {
    let mut h = vec![0u64; dim];
    for s in shots {
        h[s.outcome] += s.repeat;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(l: usize, m: usize) -> GridSpec {
        GridSpec::resonant(l, vec![1.0; m], vec![1.0; m]).unwrap()
    }

    #[test]
    fn fresh_register_is_all_zero() {
        let s = new_register(1).unwrap();
        assert_eq!(s.amplitudes(), &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let s = new_register(3).unwrap();
        assert_eq!(s.amplitudes()[0], C64::new(1.0, 0.0));
        assert!(s.amplitudes()[1..].iter().all(|a| a.norm() == 0.0));
        assert!(matches!(new_register(0), Err(FluxError::Config(_))));
        assert!(matches!(new_register(MAX_QUBITS + 1), Err(FluxError::ResourceCap(_))));
    }

    #[test]
    fn worked_grid_example() {
        let g = grid(2, 2);
        assert_eq!(grid_to_index(&[2, 3], &g).unwrap(), 11);
        assert_eq!(grid_to_index(&[0, 0], &g).unwrap(), 0);
        assert_eq!(grid_to_index(&[3, 3], &g).unwrap(), 15);
        assert_eq!(index_to_grid(11, &g).unwrap(), vec![2, 3]);
        assert_eq!(index_to_grid(0, &g).unwrap(), vec![0, 0]);
        let g = grid(1, 3);
        assert_eq!(index_to_grid(5, &g).unwrap(), vec![1, 0, 1]);
    }

    #[test]
    fn grid_range_errors() {
        let g = grid(2, 2);
        assert!(matches!(grid_to_index(&[4, 0], &g), Err(FluxError::Range { .. })));
        assert!(matches!(index_to_grid(16, &g), Err(FluxError::Range { .. })));
        assert!(grid_to_index(&[1], &g).is_err());
    }

    #[test]
    fn round_trip_exhaustive() {
        for (l, m) in [(1, 1), (3, 2), (4, 3), (6, 2), (12, 1), (2, 6)] {
            let g = grid(l, m);
            for j in 0..g.dim() {
                let c = index_to_grid(j, &g).unwrap();
                assert_eq!(grid_to_index(&c, &g).unwrap(), j);
            }
        }
    }

    #[test]
    fn resonance_is_enforced() {
        let dt = resonant_dt(3, 1.0, 1.0);
        assert!(GridSpec::new(3, vec![1.0], dt, vec![1.0]).is_ok());
        let err = GridSpec::new(3, vec![1.0], dt * 1.01, vec![1.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nearest consistent dt"), "{msg}");
        assert!(GridSpec::new(0, vec![1.0], dt, vec![1.0]).is_err());
        let g = grid(3, 2);
        assert_eq!(g.total_qubits(), 6);
        assert_eq!(g.dim(), 64);
    }

    #[test]
    fn delta_state_samples_one_outcome() {
        let s = new_register(4).unwrap();
        let shots = measure_all(&s, 500, 1).unwrap();
        assert_eq!(shots, vec![Shot { outcome: 0, repeat: 500 }]);
    }

    #[test]
    fn uniform_two_qubit_frequencies() {
        let s = StateVector::from_real(&[0.5; 4]).unwrap();
        let h = shot_histogram(&measure_all(&s, 1_000_000, 42).unwrap(), 4);
        // binomial sd at p = 1/4, n = 1e6 is 4.3e-4, so 0.005 is > 11 sd
        for c in h {
            assert!((c as f64 / 1e6 - 0.25).abs() < 0.005);
        }
    }

    #[test]
    fn biased_qubit_converges() {
        let s = StateVector::from_real(&[0.6, 0.8]).unwrap();
        let h = shot_histogram(&measure_all(&s, 200_000, 9).unwrap(), 2);
        assert!((h[1] as f64 / 2e5 - 0.64).abs() < 0.005);
    }

    #[test]
    fn sampling_rejects_unnormalised() {
        let s = StateVector::from_real(&[1.0, 1.0]).unwrap();
        assert!(matches!(measure_all(&s, 10, 0), Err(FluxError::Invariant(_))));
    }

    #[test]
    fn sampling_does_not_mutate() {
        let s = StateVector::from_real(&[0.6, 0.8]).unwrap();
        let before = s.clone();
        measure_all(&s, 100, 5).unwrap();
        assert_eq!(s, before);
    }
}
