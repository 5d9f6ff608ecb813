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

//! Split-operator time step on the position register and wavefunction loading.
//!
//! One step is `D(F₂) · QFT · D(F₁)` with `F₁(j) = −πj²/n` and
//! `F₂(j) = −πj²/n + V(j)Δt` per degree, `n = 2^l`. Under the resonance
//! condition on the grid this is the exact short-time propagator of the
//! discretised problem, up to the global phase `e^{−iπ/4}` per degree.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::gates::{qft_circuit, run_circuit, GateOp, GateTally, QubitRange};
use crate::qreg::{GridSpec, StateVector, C64};

/// External potential `V(q)`, evaluated on grid positions `q_k = c_k Δx_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Free,
    /// `Σ_k ½ m_k ω_k² (q_k − c_k)²`; a single `omega` applies to every degree.
    Harmonic {
        omega: Vec<f64>,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `V0 sech²((q_d − c)/width) + ½ m ω_c² (q_d − c)²` along one degree.
    ///
    /// The quadratic term is zero by default; a small `confinement` keeps the
    /// periodic wrap-around point far from the barrier.
    Eckart {
        v0: f64,
        width: f64,
        #[serde(default)]
        center: Option<f64>,
        #[serde(default)]
        degree: usize,
        #[serde(default)]
        confinement: f64,
    },
    /// `a (q_d − c)⁴ − b (q_d − c)²` along one degree.
    DoubleWell {
        a: f64,
        b: f64,
        #[serde(default)]
        center: Option<f64>,
        #[serde(default)]
        degree: usize,
    },
    /// One value per basis index.
    Tabulated { values: Vec<f64> },
}

fn midpoint(grid: &GridSpec, d: usize) -> f64 {
    (grid.points_per_dof() / 2) as f64 * grid.dx()[d]
}

impl PotentialSpec {
    /// Parameter checks that do not need a grid.
    pub fn check(&self, grid: &GridSpec) -> Vec<FluxError> {
        let mut errs = Vec::new();
        let m = grid.dofs();
        let degree_ok = |degree: usize, errs: &mut Vec<FluxError>| {
            if degree >= m {
                errs.push(FluxError::Config(format!(
                    "potential acts on degree {degree} but the grid has {m}"
                )));
            }
        };
        match self {
            PotentialSpec::Free => {}
            PotentialSpec::Harmonic { omega, center } => {
                if omega.len() != 1 && omega.len() != m {
                    errs.push(FluxError::Config(format!(
                        "harmonic omega needs 1 or {m} entries, got {}",
                        omega.len()
                    )));
                }
                if omega.iter().any(|w| !w.is_finite()) {
                    errs.push(FluxError::Config("harmonic omega must be finite".into()));
                }
                if let Some(c) = center {
                    if c.len() != m {
                        errs.push(FluxError::Config(format!(
                            "harmonic center needs {m} entries, got {}",
                            c.len()
                        )));
                    }
                }
            }
            PotentialSpec::Eckart {
                v0,
                width,
                degree,
                confinement,
                ..
            } => {
                degree_ok(*degree, &mut errs);
                if !(*width > 0.0) {
                    errs.push(FluxError::Config("eckart width must be positive".into()));
                }
                if !v0.is_finite() || !confinement.is_finite() {
                    errs.push(FluxError::Config("eckart parameters must be finite".into()));
                }
            }
            PotentialSpec::DoubleWell { a, b, degree, .. } => {
                degree_ok(*degree, &mut errs);
                if !a.is_finite() || !b.is_finite() {
                    errs.push(FluxError::Config("double-well parameters must be finite".into()));
                }
            }
            PotentialSpec::Tabulated { values } => {
                if values.len() != grid.dim() {
                    errs.push(FluxError::Config(format!(
                        "tabulated potential has {} values for {} grid points",
                        values.len(),
                        grid.dim()
                    )));
                }
            }
        }
        errs
    }

    /// `V` at basis index `j`.
    pub fn value(&self, grid: &GridSpec, j: usize) -> f64 {
        match self {
            PotentialSpec::Free => 0.0,
            PotentialSpec::Harmonic { omega, center } => {
                let q = grid.position(j);
                (0..grid.dofs())
                    .map(|d| {
                        let w = if omega.len() == 1 { omega[0] } else { omega[d] };
                        let c = center.as_ref().map_or_else(|| midpoint(grid, d), |c| c[d]);
                        0.5 * grid.mass()[d] * w * w * (q[d] - c).powi(2)
                    })
                    .sum()
            }
            PotentialSpec::Eckart {
                v0,
                width,
                center,
                degree,
                confinement,
            } => {
                let c = center.unwrap_or_else(|| midpoint(grid, *degree));
                let y = grid.position(j)[*degree] - c;
                let s = 1.0 / (y / width).cosh();
                v0 * s * s + 0.5 * grid.mass()[*degree] * confinement * confinement * y * y
            }
            PotentialSpec::DoubleWell { a, b, center, degree } => {
                let c = center.unwrap_or_else(|| midpoint(grid, *degree));
                let y = grid.position(j)[*degree] - c;
                a * y.powi(4) - b * y * y
            }
            PotentialSpec::Tabulated { values } => values[j],
        }
    }

    pub fn tabulate(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        if let Some(e) = self.check(grid).into_iter().next() {
            return Err(e);
        }
        let v: Vec<f64> = (0..grid.dim()).map(|j| self.value(grid, j)).collect();
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(FluxError::NonFinite {
                index,
                value,
            });
        }
        Ok(v)
    }
}

/// Precomputed phase tables and kinetic circuit for one time step.
#[derive(Debug, Clone)]
pub struct SplitStepPlan {
    grid: GridSpec,
    potential: PotentialSpec,
    chirp: Vec<f64>,
    v: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    d1: Vec<C64>,
    d2: Vec<C64>,
    kinetic: Vec<GateOp>,
}

impl SplitStepPlan {
    pub fn new(grid: GridSpec, potential: PotentialSpec) -> Result<Self> {
        let v = potential.tabulate(&grid)?;
        let n = grid.points_per_dof();
        let chirp: Vec<f64> = (0..n).map(|j| -PI * (j * j) as f64 / n as f64).collect();
        let mask = n - 1;
        let f1: Vec<f64> = (0..grid.dim())
            .map(|j| {
                (0..grid.dofs())
                    .map(|d| chirp[(j >> grid.dof_low_qubit(d)) & mask])
                    .sum()
            })
            .collect();
        let f2: Vec<f64> = f1.iter().zip(&v).map(|(c, v)| c + v * grid.dt()).collect();
        let d1 = f1.iter().map(|&f| C64::from_polar(1.0, f)).collect();
        let d2 = f2.iter().map(|&f| C64::from_polar(1.0, f)).collect();
        let kinetic = (0..grid.dofs())
            .flat_map(|d| qft_circuit(QubitRange::new(grid.dof_low_qubit(d), grid.qubits_per_dof())))
            .collect();
        Ok(SplitStepPlan {
            grid,
            potential,
            chirp,
            v,
            f1,
            f2,
            d1,
            d2,
            kinetic,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    /// `−πs²/n` for `s = 0..n` on one degree.
    pub fn chirp(&self) -> &[f64] {
        &self.chirp
    }

    /// `V(j)` for every basis index.
    pub fn potential_values(&self) -> &[f64] {
        &self.v
    }

    /// Full first diagonal `F₁(j)`, summed over degrees.
    pub fn f1(&self) -> &[f64] {
        &self.f1
    }

    /// Full second diagonal `F₂(j) = F₁(j) + V(j)Δt`.
    pub fn f2(&self) -> &[f64] {
        &self.f2
    }

    /// Gate list of the per-degree QFTs.
    pub fn kinetic_circuit(&self) -> &[GateOp] {
        &self.kinetic
    }

    /// `e^{iV(j)Δt/2}`, the diagonal that turns step eigenvectors into real vectors.
    pub fn half_potential_phases(&self) -> Vec<C64> {
        self.v
            .iter()
            .map(|&v| C64::from_polar(1.0, 0.5 * v * self.grid.dt()))
            .collect()
    }

    /// Global phase picked up per step by a zero-energy state, `−Mπ/4`.
    pub fn reference_phase(&self) -> f64 {
        reference_phase(&self.grid)
    }

    pub(crate) fn step_slice(&self, amps: &mut [C64], tally: &mut GateTally) {
        amps.iter_mut().zip(&self.d1).for_each(|(a, d)| *a *= d);
        for g in &self.kinetic {
            g.apply_unchecked(amps, tally);
        }
        amps.iter_mut().zip(&self.d2).for_each(|(a, d)| *a *= d);
        tally.n_diagonal += 2;
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.n_qubits() != self.grid.total_qubits() {
            return Err(FluxError::Config(format!(
                "plan is for {} qubits but the register has {}",
                self.grid.total_qubits(),
                state.n_qubits()
            )));
        }
        Ok(())
    }
}

/// Quasi-energy offset per step: the chirp–DFT–chirp factor of each degree
/// carries the Gauss-sum phase `e^{−iπ/4}`.
pub fn reference_phase(grid: &GridSpec) -> f64 {
    -(grid.dofs() as f64) * PI / 4.0
}

/// Energy on the principal branch `[0, 2π/(t Δt))` for an accumulated pointer
/// phase `phase` after `t_units` steps per unit of conditional evolution.
pub fn quasi_energy(phase: f64, dt: f64, t_units: u32, reference: f64) -> f64 {
    let t = t_units as f64;
    (phase - t * reference).rem_euclid(2.0 * PI) / (t * dt)
}

/// Width of the principal energy branch, `2π/(t Δt)`.
pub fn energy_band(dt: f64, t_units: u32) -> f64 {
    2.0 * PI / (t_units as f64 * dt)
}

/// `l = log₂(2πΔt / (mΔx²))`, rejecting grids off the resonance condition.
pub fn required_qubits(dx: f64, dt: f64, mass: f64) -> Result<usize> {
    if !(dx > 0.0 && dt > 0.0 && mass > 0.0) {
        return Err(FluxError::Config("dx, dt and mass must be positive".into()));
    }
    let ratio = 2.0 * PI * dt / (mass * dx * dx);
    let l = ratio.log2().round();
    let exact = 2f64.powf(l);
    if l < 1.0 {
        return Err(FluxError::Config(format!(
            "2πΔt/(mΔx²) = {ratio:.6} gives fewer than one qubit per degree"
        )));
    }
    if ((ratio - exact) / exact).abs() > 1e-9 {
        let suggested = exact * mass * dx * dx / (2.0 * PI);
        return Err(FluxError::Config(format!(
            "2πΔt/(mΔx²) = {ratio:.9} is not a power of two; nearest consistent dt = {suggested:.12}"
        )));
    }
    Ok(l as usize)
}

/// Load explicit amplitudes, normalising (with a warning) if needed.
pub fn load_wavefunction(state: &mut StateVector, alpha: &[C64]) -> Result<()> {
    if alpha.len() != state.dim() {
        return Err(FluxError::Config(format!(
            "wavefunction has {} amplitudes for a register of {}",
            alpha.len(),
            state.dim()
        )));
    }
    if let Some((index, a)) = alpha.iter().enumerate().find(|(_, a)| !(a.re.is_finite() && a.im.is_finite())) {
        return Err(FluxError::NonFinite { index, value: a.norm() });
    }
    let norm2: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
    if norm2 == 0.0 {
        return Err(FluxError::Config("cannot load the zero vector".into()));
    }
    let scale = if (norm2 - 1.0).abs() > 1e-9 {
        log::warn!("wavefunction norm² = {norm2:.6}; normalising");
        1.0 / norm2.sqrt()
    } else {
        1.0
    };
    state
        .amplitudes_mut()
        .iter_mut()
        .zip(alpha)
        .for_each(|(s, a)| *s = a * scale);
    Ok(())
}

/// Normalised Gaussian `Π_k exp(−(q_k−c_k)²/(4σ_k²) + i p_k q_k)` on the grid.
pub fn gaussian_wavepacket(grid: &GridSpec, center: &[f64], sigma: &[f64], momentum: &[f64]) -> Result<Vec<C64>> {
    let m = grid.dofs();
    if center.len() != m || sigma.len() != m || momentum.len() != m {
        return Err(FluxError::Config(format!(
            "wavepacket center, sigma and momentum need {m} entries each"
        )));
    }
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(FluxError::Config("wavepacket sigma must be positive".into()));
    }
    let mut psi: Vec<C64> = (0..grid.dim())
        .map(|j| {
            let q = grid.position(j);
            let (mut re, mut ph) = (0.0, 0.0);
            for d in 0..m {
                re -= (q[d] - center[d]).powi(2) / (4.0 * sigma[d] * sigma[d]);
                ph += momentum[d] * q[d];
            }
            C64::from_polar(re.exp(), ph)
        })
        .collect();
    let n = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(FluxError::Config("wavepacket vanishes on the grid".into()));
    }
    psi.iter_mut().for_each(|a| *a /= n);
    Ok(psi)
}

/// One step `D(F₂) · QFT · D(F₁)`.
pub fn split_step(state: &mut StateVector, plan: &SplitStepPlan, tally: &mut GateTally) -> Result<()> {
    plan.check_state(state)?;
    plan.step_slice(state.amplitudes_mut(), tally);
    Ok(())
}

/// `n_steps` applications of [`split_step`].
pub fn propagate(state: &mut StateVector, plan: &SplitStepPlan, n_steps: u64, tally: &mut GateTally) -> Result<()> {
    plan.check_state(state)?;
    for _ in 0..n_steps {
        plan.step_slice(state.amplitudes_mut(), tally);
    }
    Ok(())
}

/// Step through the public gate interface rather than the cached tables; used
/// to cross-check the fast path.
pub fn split_step_by_gates(state: &mut StateVector, plan: &SplitStepPlan, tally: &mut GateTally) -> Result<()> {
    plan.check_state(state)?;
    let mut circuit = vec![GateOp::DiagonalPhase {
        tag: "F1".into(),
        phases: plan.f1.clone().into(),
    }];
    circuit.extend_from_slice(&plan.kinetic);
    circuit.push(GateOp::DiagonalPhase {
        tag: "F2".into(),
        phases: plan.f2.clone().into(),
    });
    run_circuit(&circuit, state.amplitudes_mut(), tally)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qreg::resonant_dt;

    fn grid(l: usize, m: usize) -> GridSpec {
        GridSpec::resonant(l, vec![1.0; m], vec![1.0; m]).unwrap()
    }

    #[test]
    fn required_qubits_examples() {
        let dt = 8.0 / (2.0 * PI);
        assert_eq!(required_qubits(1.0, dt, 1.0).unwrap(), 3);
        assert_eq!(required_qubits(0.5, 16.0 * 0.25 / (2.0 * PI), 1.0).unwrap(), 4);
        assert!(required_qubits(1.0, 1.0 / (2.0 * PI), 1.0).is_err());
        let msg = required_qubits(1.0, dt * 1.01, 1.0).unwrap_err().to_string();
        assert!(msg.contains("nearest consistent dt"), "{msg}");
    }

    #[test]
    fn plan_tables() {
        let g = grid(3, 1);
        let plan = SplitStepPlan::new(g.clone(), PotentialSpec::Harmonic { omega: vec![0.3], center: None }).unwrap();
        for j in 0..8 {
            let c = -PI * (j * j) as f64 / 8.0;
            assert!((plan.f1()[j] - c).abs() < 1e-15);
            let v = 0.5 * 0.09 * (j as f64 - 4.0).powi(2);
            assert!((plan.f2()[j] - c - v * g.dt()).abs() < 1e-12);
        }
        assert_eq!(g.dt(), resonant_dt(3, 1.0, 1.0));
    }

    #[test]
    fn load_examples() {
        let mut s = StateVector::new(3).unwrap();
        let mut e0 = vec![C64::new(0.0, 0.0); 8];
        e0[0] = C64::new(1.0, 0.0);
        load_wavefunction(&mut s, &e0).unwrap();
        assert_eq!(s, StateVector::new(3).unwrap());
        assert!(load_wavefunction(&mut s, &[C64::new(0.0, 0.0); 8]).is_err());
        load_wavefunction(&mut s, &[C64::new(2.0, 0.0); 8]).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
        let g = grid(6, 1);
        let psi = gaussian_wavepacket(&g, &[20.0], &[3.0], &[0.0]).unwrap();
        let mut s = StateVector::new(6).unwrap();
        load_wavefunction(&mut s, &psi).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fast_step_matches_gate_interface() {
        let g = grid(3, 2);
        let plan = SplitStepPlan::new(g, PotentialSpec::Harmonic { omega: vec![0.4], center: None }).unwrap();
        let psi = gaussian_wavepacket(plan.grid(), &[2.0, 5.0], &[1.5, 1.0], &[0.3, -0.2]).unwrap();
        let mut a = StateVector::from_amplitudes(psi).unwrap();
        let mut b = a.clone();
        let mut t = GateTally::default();
        split_step(&mut a, &plan, &mut t).unwrap();
        split_step_by_gates(&mut b, &plan, &mut t).unwrap();
        assert!(a.distance(&b) < 1e-13);
    }

    #[test]
    fn zero_steps_is_identity_and_mismatch_errors() {
        let plan = SplitStepPlan::new(grid(4, 1), PotentialSpec::Free).unwrap();
        let mut s = StateVector::from_real(&[0.25; 16]).unwrap();
        let orig = s.clone();
        let mut t = GateTally::default();
        propagate(&mut s, &plan, 0, &mut t).unwrap();
        assert_eq!(s, orig);
        let mut wrong = StateVector::new(3).unwrap();
        assert!(split_step(&mut wrong, &plan, &mut t).is_err());
    }

    #[test]
    fn potential_validation() {
        let g = grid(3, 1);
        let bad = PotentialSpec::Tabulated { values: vec![0.0; 5] };
        assert!(SplitStepPlan::new(g.clone(), bad).is_err());
        let bad = PotentialSpec::Eckart { v0: 1.0, width: 0.0, center: None, degree: 0, confinement: 0.0 };
        assert!(SplitStepPlan::new(g.clone(), bad).is_err());
        let bad = PotentialSpec::DoubleWell { a: 1.0, b: 1.0, center: None, degree: 2 };
        assert!(SplitStepPlan::new(g, bad).is_err());
    }

    #[test]
    fn potential_json_round_trip() {
        let p: PotentialSpec = serde_json::from_str(r#"{"kind":"eckart","v0":0.02,"width":8.0,"center":80.0,"confinement":0.006}"#).unwrap();
        assert_eq!(
            p,
            PotentialSpec::Eckart { v0: 0.02, width: 8.0, center: Some(80.0), degree: 0, confinement: 0.006 }
        );
        let back: PotentialSpec = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
