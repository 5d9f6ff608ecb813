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

//! Elementary gates and the gate-level quantum Fourier transform.
//!
//! Kernels work on raw amplitude slices of length `2^n` so the same code drives
//! a main register, a pointer register, or one block of a joint register.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::qreg::{StateVector, C64};

/// Counts of applied gates, split the way the cost analysis counts them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateTally {
    /// One-qubit gates (Hadamard, single-qubit phase).
    pub n_single: u64,
    /// Two-qubit gates (CNOT, controlled phase).
    pub n_two: u64,
    /// Qubit swaps used for the bit-reversal fix.
    pub n_swap: u64,
    /// Diagonal function phases, applied semantically.
    pub n_diagonal: u64,
}

impl GateTally {
    pub fn merge(&mut self, other: &GateTally) {
        self.n_single += other.n_single;
        self.n_two += other.n_two;
        self.n_swap += other.n_swap;
        self.n_diagonal += other.n_diagonal;
    }
}

/// A contiguous block of qubits, `low .. low + len`, with `low` the least significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitRange {
    pub low: usize,
    pub len: usize,
}

impl QubitRange {
    pub fn new(low: usize, len: usize) -> Self {
        QubitRange { low, len }
    }

    pub fn all(n_qubits: usize) -> Self {
        QubitRange { low: 0, len: n_qubits }
    }

    pub fn qubits(&self) -> std::ops::Range<usize> {
        self.low..self.low + self.len
    }
}

/// One gate of a circuit.
#[derive(Debug, Clone, PartialEq)]
pub enum GateOp {
    Hadamard { target: usize },
    Cnot { control: usize, target: usize },
    /// `Q_l`: phase `e^{±2πi/2^l}` on `|1⟩`.
    Phase { target: usize, order: u32, dagger: bool },
    /// `CQ_l`: phase `e^{±2πi/2^l}` on `|11⟩`.
    ControlledPhase { control: usize, target: usize, order: u32, dagger: bool },
    Swap { a: usize, b: usize },
    /// `|j⟩ → e^{i F(j)} |j⟩` with `F` tabulated over the whole slice.
    DiagonalPhase { tag: String, phases: Arc<[f64]> },
}

fn rotation(order: u32, dagger: bool) -> C64 {
    let theta = 2.0 * PI / 2f64.powi(order as i32);
    C64::from_polar(1.0, if dagger { -theta } else { theta })
}

impl GateOp {
    fn check(&self, n_qubits: usize, len: usize) -> Result<()> {
        let in_range = |q: usize| {
            if q < n_qubits {
                Ok(())
            } else {
                Err(FluxError::Range {
                    what: "qubit",
                    index: q,
                    limit: n_qubits,
                })
            }
        };
        match self {
            GateOp::Hadamard { target } => in_range(*target),
            GateOp::Phase { target, order, .. } => {
                if *order == 0 {
                    return Err(FluxError::Config("rotation order must be ≥ 1".into()));
                }
                in_range(*target)
            }
            GateOp::Cnot { control, target } => {
                in_range(*control)?;
                in_range(*target)?;
                if control == target {
                    return Err(FluxError::Config(format!(
                        "control and target are both qubit {control}"
                    )));
                }
                Ok(())
            }
            GateOp::ControlledPhase { control, target, order, .. } => {
                in_range(*control)?;
                in_range(*target)?;
                if control == target {
                    return Err(FluxError::Config(format!(
                        "control and target are both qubit {control}"
                    )));
                }
                if *order == 0 {
                    return Err(FluxError::Config("rotation order must be ≥ 1".into()));
                }
                Ok(())
            }
            GateOp::Swap { a, b } => {
                in_range(*a)?;
                in_range(*b)
            }
            GateOp::DiagonalPhase { phases, .. } => {
                if phases.len() != len {
                    return Err(FluxError::Config(format!(
                        "diagonal table has {} entries for {} amplitudes",
                        phases.len(),
                        len
                    )));
                }
                for (index, &value) in phases.iter().enumerate() {
                    if !value.is_finite() {
                        return Err(FluxError::NonFinite { index, value });
                    }
                }
                Ok(())
            }
        }
    }

    /// Apply to an amplitude slice of length `2^n`.
    pub fn apply_slice(&self, amps: &mut [C64], tally: &mut GateTally) -> Result<()> {
        let n_qubits = amps.len().trailing_zeros() as usize;
        self.check(n_qubits, amps.len())?;
        self.apply_unchecked(amps, tally);
        Ok(())
    }

    pub fn apply(&self, state: &mut StateVector, tally: &mut GateTally) -> Result<()> {
        self.apply_slice(state.amplitudes_mut(), tally)
    }

    pub(crate) fn apply_unchecked(&self, amps: &mut [C64], tally: &mut GateTally) {
        match self {
            GateOp::Hadamard { target } => {
                hadamard_kernel(amps, *target);
                tally.n_single += 1;
            }
            GateOp::Phase { target, order, dagger } => {
                let w = rotation(*order, *dagger);
                let m = 1usize << target;
                amps.iter_mut()
                    .enumerate()
                    .filter(|(j, _)| j & m != 0)
                    .for_each(|(_, a)| *a *= w);
                tally.n_single += 1;
            }
            GateOp::Cnot { control, target } => {
                let (c, t) = (1usize << control, 1usize << target);
                for j in 0..amps.len() {
                    if j & c != 0 && j & t == 0 {
                        amps.swap(j, j | t);
                    }
                }
                tally.n_two += 1;
            }
            GateOp::ControlledPhase { control, target, order, dagger } => {
                let w = rotation(*order, *dagger);
                let m = (1usize << control) | (1usize << target);
                amps.iter_mut()
                    .enumerate()
                    .filter(|(j, _)| j & m == m)
                    .for_each(|(_, a)| *a *= w);
                tally.n_two += 1;
            }
            GateOp::Swap { a, b } => {
                if a != b {
                    let (ma, mb) = (1usize << a, 1usize << b);
                    for j in 0..amps.len() {
                        if j & ma != 0 && j & mb == 0 {
                            amps.swap(j, (j & !ma) | mb);
                        }
                    }
                }
                tally.n_swap += 1;
            }
            GateOp::DiagonalPhase { phases, .. } => {
                amps.iter_mut()
                    .zip(phases.iter())
                    .for_each(|(a, &f)| *a *= C64::from_polar(1.0, f));
                tally.n_diagonal += 1;
            }
        }
    }

    /// Adjoint gate.
    pub fn dagger(&self) -> GateOp {
        match self {
            GateOp::Phase { target, order, dagger } => GateOp::Phase {
                target: *target,
                order: *order,
                dagger: !dagger,
            },
            GateOp::ControlledPhase { control, target, order, dagger } => GateOp::ControlledPhase {
                control: *control,
                target: *target,
                order: *order,
                dagger: !dagger,
            },
            GateOp::DiagonalPhase { tag, phases } => GateOp::DiagonalPhase {
                tag: format!("{tag}†"),
                phases: phases.iter().map(|f| -f).collect(),
            },
            other => other.clone(),
        }
    }
}

fn hadamard_kernel(amps: &mut [C64], q: usize) {
    let m = 1usize << q;
    let n = amps.len();
    let mut base = 0;
    while base < n {
        for j in base..base + m {
            let a = amps[j];
            let b = amps[j + m];
            amps[j] = (a + b) * FRAC_1_SQRT_2;
            amps[j + m] = (a - b) * FRAC_1_SQRT_2;
        }
        base += 2 * m;
    }
}

/// Run a gate list in order.
pub fn run_circuit(circuit: &[GateOp], amps: &mut [C64], tally: &mut GateTally) -> Result<()> {
    let n_qubits = amps.len().trailing_zeros() as usize;
    for g in circuit {
        g.check(n_qubits, amps.len())?;
    }
    for g in circuit {
        g.apply_unchecked(amps, tally);
    }
    Ok(())
}

/// Adjoint of a gate list.
pub fn inverse_circuit(circuit: &[GateOp]) -> Vec<GateOp> {
    circuit.iter().rev().map(GateOp::dagger).collect()
}

pub fn apply_hadamard(state: &mut StateVector, q: usize, tally: &mut GateTally) -> Result<()> {
    GateOp::Hadamard { target: q }.apply(state, tally)
}

pub fn apply_cnot(state: &mut StateVector, control: usize, target: usize, tally: &mut GateTally) -> Result<()> {
    GateOp::Cnot { control, target }.apply(state, tally)
}

pub fn apply_controlled_phase(
    state: &mut StateVector,
    control: usize,
    target: usize,
    order: u32,
    tally: &mut GateTally,
) -> Result<()> {
    GateOp::ControlledPhase {
        control,
        target,
        order,
        dagger: false,
    }
    .apply(state, tally)
}

pub fn apply_swap(state: &mut StateVector, a: usize, b: usize, tally: &mut GateTally) -> Result<()> {
    GateOp::Swap { a, b }.apply(state, tally)
}

/// `|0…0⟩ → N^{-1/2} Σ_j |j⟩` by a Hadamard on every qubit.
pub fn uniform_superposition(state: &mut StateVector, tally: &mut GateTally) -> Result<()> {
    let zero = state.amplitudes()[0];
    let rest = state.amplitudes()[1..].iter().map(|a| a.norm()).fold(0.0, f64::max);
    if (zero - C64::new(1.0, 0.0)).norm() > 1e-12 || rest > 1e-12 {
        return Err(FluxError::Invariant(
            "uniform superposition must start from |0…0⟩".into(),
        ));
    }
    for q in 0..state.n_qubits() {
        apply_hadamard(state, q, tally)?;
    }
    Ok(())
}

/// `|j⟩ → e^{i F(j)} |j⟩` with `F` evaluated classically for every basis index.
pub fn apply_diagonal_phase<F>(state: &mut StateVector, f: F, tally: &mut GateTally) -> Result<()>
where
    F: Fn(usize) -> f64,
{
    let phases: Arc<[f64]> = (0..state.dim()).map(f).collect();
    GateOp::DiagonalPhase {
        tag: "F".into(),
        phases,
    }
    .apply(state, tally)
}

/// Gate list for the DFT `|s⟩ → n^{-1/2} Σ_{s'} e^{2πi s s'/n} |s'⟩` on `range`,
/// including the trailing swaps that undo the bit reversal.
pub fn qft_circuit(range: QubitRange) -> Vec<GateOp> {
    let mut ops = Vec::with_capacity(range.len * (range.len + 1) / 2 + range.len / 2);
    for i in (0..range.len).rev() {
        let target = range.low + i;
        ops.push(GateOp::Hadamard { target });
        for k in (0..i).rev() {
            ops.push(GateOp::ControlledPhase {
                control: range.low + k,
                target,
                order: (i - k + 1) as u32,
                dagger: false,
            });
        }
    }
    for s in 0..range.len / 2 {
        ops.push(GateOp::Swap {
            a: range.low + s,
            b: range.low + range.len - 1 - s,
        });
    }
    ops
}

fn check_range(range: QubitRange, n_qubits: usize) -> Result<()> {
    if range.len == 0 {
        return Err(FluxError::Config("QFT range is empty".into()));
    }
    if range.low + range.len > n_qubits {
        return Err(FluxError::Range {
            what: "QFT qubit",
            index: range.low + range.len - 1,
            limit: n_qubits,
        });
    }
    Ok(())
}

pub(crate) fn qft_slice(amps: &mut [C64], range: QubitRange, inverse: bool, tally: &mut GateTally) -> Result<()> {
    check_range(range, amps.len().trailing_zeros() as usize)?;
    let c = qft_circuit(range);
    if inverse {
        run_circuit(&inverse_circuit(&c), amps, tally)
    } else {
        run_circuit(&c, amps, tally)
    }
}

/// Gate-level quantum Fourier transform on a sub-register.
pub fn qft(state: &mut StateVector, range: QubitRange, tally: &mut GateTally) -> Result<()> {
    qft_slice(state.amplitudes_mut(), range, false, tally)
}

/// Adjoint of [`qft`].
pub fn inverse_qft(state: &mut StateVector, range: QubitRange, tally: &mut GateTally) -> Result<()> {
    qft_slice(state.amplitudes_mut(), range, true, tally)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S: f64 = FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_state(n: usize, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..1 << n)
            .map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let mut s = StateVector::from_amplitudes(amps).unwrap();
        s.normalize().unwrap();
        s
    }

    fn assert_amps(s: &StateVector, want: &[C64], tol: f64) {
        for (a, b) in s.amplitudes().iter().zip(want) {
            assert!((a - b).norm() < tol, "{a} vs {b}");
        }
    }

    #[test]
    fn hadamard_columns() {
        let mut t = GateTally::default();
        let mut s = StateVector::basis(1, 0).unwrap();
        apply_hadamard(&mut s, 0, &mut t).unwrap();
        assert_amps(&s, &[c(S, 0.0), c(S, 0.0)], 1e-15);
        let mut s = StateVector::basis(1, 1).unwrap();
        apply_hadamard(&mut s, 0, &mut t).unwrap();
        assert_amps(&s, &[c(S, 0.0), c(-S, 0.0)], 1e-15);
        assert_eq!(t.n_single, 2);
        assert!(apply_hadamard(&mut s, 1, &mut t).is_err());
    }

    #[test]
    fn hadamard_is_an_involution() {
        let mut t = GateTally::default();
        let orig = random_state(3, 1);
        for q in 0..3 {
            let mut s = orig.clone();
            apply_hadamard(&mut s, q, &mut t).unwrap();
            apply_hadamard(&mut s, q, &mut t).unwrap();
            assert!(s.distance(&orig) < 1e-12);
        }
    }

    #[test]
    fn uniform_superposition_amplitudes() {
        let mut t = GateTally::default();
        for (n, a) in [(1, S), (2, 0.5), (4, 0.25)] {
            let mut s = StateVector::new(n).unwrap();
            uniform_superposition(&mut s, &mut t).unwrap();
            assert!(s.amplitudes().iter().all(|x| (x - c(a, 0.0)).norm() < 1e-15));
        }
        let mut s = StateVector::basis(2, 1).unwrap();
        assert!(matches!(uniform_superposition(&mut s, &mut t), Err(FluxError::Invariant(_))));
    }

    #[test]
    fn cnot_truth_table() {
        // two-qubit strings |ε₁ε₂⟩ with ε₁ on qubit 1 (control) and ε₂ on qubit 0
        let mut t = GateTally::default();
        let mut s = StateVector::basis(2, 0b10).unwrap();
        apply_cnot(&mut s, 1, 0, &mut t).unwrap();
        assert_eq!(s, StateVector::basis(2, 0b11).unwrap());
        let mut s = StateVector::basis(2, 0b00).unwrap();
        apply_cnot(&mut s, 1, 0, &mut t).unwrap();
        assert_eq!(s, StateVector::basis(2, 0).unwrap());
        let mut s = StateVector::from_real(&[S, 0.0, S, 0.0]).unwrap();
        apply_cnot(&mut s, 1, 0, &mut t).unwrap();
        assert_amps(&s, &[c(S, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(S, 0.0)], 1e-15);
        assert!(matches!(apply_cnot(&mut s, 1, 1, &mut t), Err(FluxError::Config(_))));
        assert_eq!(t.n_two, 3);
    }

    #[test]
    fn controlled_phase_values() {
        let mut t = GateTally::default();
        let mut s = StateVector::basis(2, 0b11).unwrap();
        apply_controlled_phase(&mut s, 0, 1, 1, &mut t).unwrap();
        assert_amps(&s, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)], 1e-15);
        let mut s = StateVector::basis(2, 0b11).unwrap();
        apply_controlled_phase(&mut s, 0, 1, 2, &mut t).unwrap();
        assert!((s.amplitudes()[3] - c(0.0, 1.0)).norm() < 1e-15);
        for order in 1..6 {
            for j in [0b00, 0b01, 0b10] {
                let mut s = StateVector::basis(2, j).unwrap();
                apply_controlled_phase(&mut s, 0, 1, order, &mut t).unwrap();
                assert_eq!(s, StateVector::basis(2, j).unwrap());
            }
        }
        assert!(apply_controlled_phase(&mut s, 0, 0, 1, &mut t).is_err());
        assert!(apply_controlled_phase(&mut s, 0, 1, 0, &mut t).is_err());
    }

    #[test]
    fn diagonal_phase_examples() {
        let mut t = GateTally::default();
        let orig = random_state(3, 4);
        let mut s = orig.clone();
        apply_diagonal_phase(&mut s, |_| 0.0, &mut t).unwrap();
        assert_eq!(s, orig);
        let mut s = StateVector::basis(3, 5).unwrap();
        apply_diagonal_phase(&mut s, |_| PI, &mut t).unwrap();
        assert!((s.amplitudes()[5] + c(1.0, 0.0)).norm() < 1e-15);
        let mut s = StateVector::from_real(&[0.5; 4]).unwrap();
        apply_diagonal_phase(&mut s, |j| j as f64, &mut t).unwrap();
        for j in 0..4 {
            assert!((s.amplitudes()[j] - C64::from_polar(0.5, j as f64)).norm() < 1e-15);
        }
        let err = apply_diagonal_phase(&mut s, |j| if j == 2 { f64::NAN } else { 0.0 }, &mut t).unwrap_err();
        assert!(matches!(err, FluxError::NonFinite { index: 2, .. }));
        assert_eq!(t.n_diagonal, 3);
    }

    #[test]
    fn diagonal_phases_compose_additively() {
        let mut t = GateTally::default();
        let f = |j: usize| (j as f64).sin() * 3.0;
        let g = |j: usize| (j as f64 * 0.7).cos() - 1.0;
        let orig = random_state(4, 8);
        let mut a = orig.clone();
        apply_diagonal_phase(&mut a, f, &mut t).unwrap();
        apply_diagonal_phase(&mut a, g, &mut t).unwrap();
        let mut b = orig.clone();
        apply_diagonal_phase(&mut b, g, &mut t).unwrap();
        apply_diagonal_phase(&mut b, f, &mut t).unwrap();
        let mut s = orig;
        apply_diagonal_phase(&mut s, |j| f(j) + g(j), &mut t).unwrap();
        assert!(a.distance(&b) < 1e-12);
        assert!(a.distance(&s) < 1e-12);
    }

    #[test]
    fn single_qubit_qft_is_hadamard() {
        let mut t = GateTally::default();
        let mut s = StateVector::basis(1, 0).unwrap();
        qft(&mut s, QubitRange::all(1), &mut t).unwrap();
        assert_amps(&s, &[c(S, 0.0), c(S, 0.0)], 1e-15);
        assert_eq!((t.n_single, t.n_two, t.n_swap), (1, 0, 0));
    }

    #[test]
    fn qft_of_zero_is_uniform() {
        let mut t = GateTally::default();
        let mut s = StateVector::new(5).unwrap();
        qft(&mut s, QubitRange::all(5), &mut t).unwrap();
        let a = 1.0 / 32f64.sqrt();
        assert!(s.amplitudes().iter().all(|x| (x - c(a, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn qft_of_basis_one_on_three_qubits() {
        let mut t = GateTally::default();
        let mut s = StateVector::basis(3, 1).unwrap();
        qft(&mut s, QubitRange::all(3), &mut t).unwrap();
        for jp in 0..8 {
            let want = C64::from_polar(1.0 / 8f64.sqrt(), 2.0 * PI * jp as f64 / 8.0);
            assert_relative_eq!((s.amplitudes()[jp] - want).norm(), 0.0, epsilon = 1e-14);
        }
        assert_eq!(t.n_two, 3);
        assert_eq!(t.n_single, 3);
        assert_eq!(t.n_swap, 1);
    }

    #[test]
    fn inverse_qft_round_trip() {
        let mut t = GateTally::default();
        let orig = random_state(6, 3);
        let mut s = orig.clone();
        qft(&mut s, QubitRange::all(6), &mut t).unwrap();
        inverse_qft(&mut s, QubitRange::all(6), &mut t).unwrap();
        assert!(s.distance(&orig) < 1e-12);

        let mut u = StateVector::from_real(&[0.5; 4]).unwrap();
        inverse_qft(&mut u, QubitRange::all(2), &mut t).unwrap();
        assert!(u.distance(&StateVector::basis(2, 0).unwrap()) < 1e-14);
    }

    #[test]
    fn qft_on_sub_register_leaves_other_qubits() {
        let mut t = GateTally::default();
        // |s=3⟩ on qubits 1..3, qubit 0 set to 1, qubit 3 to 0
        let j = (3 << 1) | 1;
        let mut s = StateVector::basis(4, j).unwrap();
        qft(&mut s, QubitRange::new(1, 2), &mut t).unwrap();
        for sp in 0..4usize {
            let want = C64::from_polar(0.5, 2.0 * PI * (3 * sp) as f64 / 4.0);
            assert!((s.amplitudes()[(sp << 1) | 1] - want).norm() < 1e-14);
        }
        assert!(qft(&mut s, QubitRange::new(3, 2), &mut t).is_err());
        assert!(qft(&mut s, QubitRange::new(0, 0), &mut t).is_err());
    }

    #[test]
    fn gates_preserve_inner_products() {
        let mut t = GateTally::default();
        let a0 = random_state(4, 10);
        let b0 = random_state(4, 11);
        let before = a0.inner(&b0);
        let circuit = vec![
            GateOp::Hadamard { target: 2 },
            GateOp::Cnot { control: 0, target: 3 },
            GateOp::ControlledPhase { control: 1, target: 2, order: 3, dagger: false },
            GateOp::Phase { target: 1, order: 2, dagger: true },
            GateOp::Swap { a: 0, b: 3 },
        ];
        let (mut a, mut b) = (a0.clone(), b0.clone());
        run_circuit(&circuit, a.amplitudes_mut(), &mut t).unwrap();
        run_circuit(&circuit, b.amplitudes_mut(), &mut t).unwrap();
        assert!((a.inner(&b) - before).norm() < 1e-12);
        run_circuit(&inverse_circuit(&circuit), a.amplitudes_mut(), &mut t).unwrap();
        assert!(a.distance(&a0) < 1e-12);
    }
}
