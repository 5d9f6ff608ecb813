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

//! Flux matrix elements, flux-flux correlation function, partition function
//! and rate constant from a spectrum `{E_n, a_j(n)}`.
//!
//! With ħ = 1 the correlation function in the energy eigenbasis reads
//!
//! ```text
//! C_f(t) = Σ_{n≠m} e^{−β(E_n+E_m)/2} cos((E_m−E_n)t) (E_n−E_m)² |O_nm|²,
//! O_nm   = Σ_j a_j(n) a_j(m) h_j,
//! ```
//!
//! and `k(T) = Q_r⁻¹ ∫₀^{T_max} C_f(t) dt`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::qreg::{GridSpec, C64};

/// Heaviside indicator `h[s(j)]` of the product side of a dividing surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DividingSurface {
    degree: usize,
    threshold: f64,
    h: Vec<u8>,
}

impl DividingSurface {
    /// `s(q) = q_d − q‡`; basis states with `q_d ≥ q‡` are on the product side.
    pub fn half_space(grid: &GridSpec, degree: usize, threshold: f64) -> Result<Self> {
        if degree >= grid.dofs() {
            return Err(FluxError::Config(format!(
                "dividing surface on degree {degree} but the grid has {}",
                grid.dofs()
            )));
        }
        let h = (0..grid.dim())
            .map(|j| (grid.position(j)[degree] >= threshold) as u8)
            .collect();
        let s = Self::from_values(h)?;
        Ok(DividingSurface { degree, threshold, ..s })
    }

    pub fn from_values(h: Vec<u8>) -> Result<Self> {
        if h.iter().any(|&x| x > 1) {
            return Err(FluxError::Config("dividing-surface values must be 0 or 1".into()));
        }
        let ones = h.iter().filter(|&&x| x == 1).count();
        if ones == 0 || ones == h.len() {
            return Err(FluxError::Config(
                "dividing surface leaves one side empty; the flux vanishes identically".into(),
            ));
        }
        Ok(DividingSurface {
            degree: 0,
            threshold: f64::NAN,
            h,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn values(&self) -> &[u8] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    Sampled,
    Oracle,
}

/// Energies, the surface overlap table `O_nm` and reactant populations.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInput {
    pub energies: Vec<f64>,
    pub overlap: DMatrix<f64>,
    pub reactant_weights: Vec<f64>,
    pub source: SpectrumSource,
}

impl SpectralInput {
    /// Build from real eigenvector amplitudes, one vector per level.
    pub fn from_real_amplitudes(
        energies: Vec<f64>,
        amps: &[Vec<f64>],
        surface: &DividingSurface,
        source: SpectrumSource,
    ) -> Result<Self> {
        if energies.len() != amps.len() {
            return Err(FluxError::Config(format!(
                "{} energies but {} amplitude tables",
                energies.len(),
                amps.len()
            )));
        }
        if let Some(a) = amps.iter().find(|a| a.len() != surface.len()) {
            return Err(FluxError::Config(format!(
                "amplitude table of length {} for a surface over {} points",
                a.len(),
                surface.len()
            )));
        }
        if let Some(e) = energies.iter().find(|e| !e.is_finite()) {
            return Err(FluxError::Config(format!("non-finite level energy {e}")));
        }
        let n = energies.len();
        let h = surface.values();
        let overlap = DMatrix::from_fn(n, n, |a, b| {
            amps[a]
                .iter()
                .zip(&amps[b])
                .zip(h)
                .filter(|(_, &hj)| hj == 1)
                .map(|((x, y), _)| x * y)
                .sum()
        });
        let reactant_weights = amps
            .iter()
            .map(|a| a.iter().zip(h).filter(|(_, &hj)| hj == 0).map(|(x, _)| x * x).sum())
            .collect();
        Ok(SpectralInput {
            energies,
            overlap,
            reactant_weights,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }
}

/// `⟨n|F|m⟩ = i (E_n − E_m) O_nm`.
pub fn flux_matrix_element(e_n: f64, e_m: f64, o_nm: C64) -> C64 {
    C64::new(0.0, e_n - e_m) * o_nm
}

/// Levels whose half Boltzmann factor `e^{−β(E_n − E_min)/2}` is at least `eps_b`.
pub fn retained_levels(energies: &[f64], beta: f64, eps_b: f64) -> Vec<usize> {
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    (0..energies.len())
        .filter(|&n| (-0.5 * beta * (energies[n] - e_min)).exp() >= eps_b)
        .collect()
}

/// `C_f(t)` on `t_grid` from the eigen-sum over Boltzmann-retained levels.
pub fn correlation_function(spec: &SpectralInput, beta: f64, t_grid: &[f64], eps_b: f64) -> Result<Vec<f64>> {
    if spec.is_empty() {
        return Err(FluxError::EmptySpectrum("no levels to sum over".into()));
    }
    if !(beta > 0.0) {
        return Err(FluxError::Config(format!("beta must be positive, got {beta}")));
    }
    let keep = retained_levels(&spec.energies, beta, eps_b);
    if keep.is_empty() {
        return Err(FluxError::EmptySpectrum("every level fell below the Boltzmann cutoff".into()));
    }
    // pair terms (n < m) once; the (m, n) partner supplies the conjugate
    let mut terms = Vec::new();
    for (ia, &n) in keep.iter().enumerate() {
        for &m in &keep[ia + 1..] {
            let (en, em) = (spec.energies[n], spec.energies[m]);
            let o = spec.overlap[(n, m)];
            let w = 2.0 * (-0.5 * beta * (en + em)).exp() * (en - em).powi(2) * o * o;
            terms.push((w, em - en));
        }
    }
    Ok(t_grid
        .iter()
        .map(|&t| terms.iter().map(|(w, de)| w * (de * t).cos()).sum())
        .collect())
}

/// `Q_r = Σ_n e^{−βE_n} w_n`.
pub fn partition_function(energies: &[f64], reactant_weights: &[f64], beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(FluxError::Config(format!("beta must be positive, got {beta}")));
    }
    if energies.len() != reactant_weights.len() {
        return Err(FluxError::Config("energies and reactant weights differ in length".into()));
    }
    Ok(energies
        .iter()
        .zip(reactant_weights)
        .map(|(e, w)| (-beta * e).exp() * w)
        .sum())
}

/// How the reactant partition function is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QrStrategy {
    #[default]
    /// Boltzmann trace projected on the reactant side, `Σ_n e^{−βE_n} ⟨n|1−h|n⟩`.
    ReactantProjected,
    Fixed { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub beta: f64,
    pub t_max: f64,
    /// Points of the uniform time grid on `[0, T_max]`, ends included.
    pub n_points: usize,
    pub eps_b: f64,
    pub qr: QrStrategy,
    /// Largest acceptable relative plateau spread.
    pub plateau_tolerance: f64,
}

impl RateParams {
    pub fn new(beta: f64, t_max: f64, n_points: usize) -> Self {
        RateParams {
            beta,
            t_max,
            n_points,
            eps_b: DEFAULT_EPS_B,
            qr: QrStrategy::ReactantProjected,
            plateau_tolerance: 0.05,
        }
    }
}

pub const DEFAULT_EPS_B: f64 = 1e-8;

/// Running integral sampled at `0.5, 0.75, 1.0 × T_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauDiagnostics {
    pub times: [f64; 3],
    pub values: [f64; 3],
    /// `(max − min) / |value at T_max|`.
    pub spread: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub beta: f64,
    pub t_max: f64,
    /// Imaginary shift of the complex time `τ = t − iβ/2`.
    pub tau_imag: f64,
    pub t: Vec<f64>,
    pub cf: Vec<f64>,
    #[serde(default)]
    pub cf_stderr: Option<Vec<f64>>,
    /// `Q_r⁻¹ ∫₀^t C_f`.
    pub running: Vec<f64>,
    pub qr: f64,
    pub k: f64,
    #[serde(default)]
    pub k_stderr: Option<f64>,
    pub plateau: PlateauDiagnostics,
    pub n_levels: usize,
    pub source: SpectrumSource,
    #[serde(default)]
    pub shots: Option<u64>,
}

pub fn time_grid(t_max: f64, n_points: usize) -> Vec<f64> {
    if n_points < 2 {
        return vec![0.0; n_points];
    }
    (0..n_points)
        .map(|i| t_max * i as f64 / (n_points - 1) as f64)
        .collect()
}

/// Trapezoid-rule cumulative integral, starting at 0.
pub fn running_integral(t: &[f64], c: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for i in 0..t.len() {
        if i > 0 {
            acc += 0.5 * (c[i] + c[i - 1]) * (t[i] - t[i - 1]);
        }
        out.push(acc);
    }
    out
}

fn interpolate(t: &[f64], y: &[f64], at: f64) -> f64 {
    let i = t.partition_point(|&x| x < at);
    if i == 0 {
        return y[0];
    }
    if i >= t.len() {
        return y[t.len() - 1];
    }
    let f = (at - t[i - 1]) / (t[i] - t[i - 1]);
    y[i - 1] + f * (y[i] - y[i - 1])
}

pub fn plateau(t: &[f64], running: &[f64], tolerance: f64) -> PlateauDiagnostics {
    let t_max = *t.last().unwrap_or(&0.0);
    let times = [0.5 * t_max, 0.75 * t_max, t_max];
    let values = times.map(|x| interpolate(t, running, x));
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if values[2] != 0.0 {
        (hi - lo) / values[2].abs()
    } else if hi == lo {
        0.0
    } else {
        f64::INFINITY
    };
    PlateauDiagnostics {
        times,
        values,
        spread,
        converged: spread <= tolerance,
    }
}

/// `k = Q_r⁻¹ ∫₀^{T_max} C_f dt` by the trapezoid rule, with plateau diagnostics.
pub fn rate_constant(spec: &SpectralInput, params: &RateParams) -> Result<RateResult> {
    if !(params.t_max > 0.0) {
        return Err(FluxError::Config(format!("T_max must be positive, got {}", params.t_max)));
    }
    if params.n_points < 2 {
        return Err(FluxError::Config("the time grid needs at least two points".into()));
    }
    let t = time_grid(params.t_max, params.n_points);
    let cf = correlation_function(spec, params.beta, &t, params.eps_b)?;
    let qr = match params.qr {
        QrStrategy::ReactantProjected => partition_function(&spec.energies, &spec.reactant_weights, params.beta)?,
        QrStrategy::Fixed { value } => value,
    };
    if !(qr > 0.0) || !qr.is_finite() {
        return Err(FluxError::Validation(format!("reactant partition function is {qr}")));
    }
    let running: Vec<f64> = running_integral(&t, &cf).into_iter().map(|x| x / qr).collect();
    let k = *running.last().unwrap();
    if !k.is_finite() {
        return Err(FluxError::Validation("rate constant is not finite".into()));
    }
    let plateau = plateau(&t, &running, params.plateau_tolerance);
    if !plateau.converged {
        log::warn!(
            "running rate integral has not reached a plateau: spread {:.3} > {:.3}",
            plateau.spread,
            params.plateau_tolerance
        );
    }
    Ok(RateResult {
        beta: params.beta,
        t_max: params.t_max,
        tau_imag: -0.5 * params.beta,
        t,
        cf,
        cf_stderr: None,
        running,
        qr,
        k,
        k_stderr: None,
        plateau,
        n_levels: retained_levels(&spec.energies, params.beta, params.eps_b).len(),
        source: spec.source,
        shots: None,
    })
}
