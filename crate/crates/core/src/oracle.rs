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

//! Dense-matrix ground truth for every stage of the pipeline.
//!
//! Eigenphases are reported for `U v = e^{iθ} v` with `θ ∈ [0, 2π)`; the
//! matching energies are `(θ − γ) mod 2π / Δt` with `γ` the reference phase
//! of the step (see [`crate::propagator::reference_phase`]).

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{FluxError, Result};
use crate::propagator::{quasi_energy, SplitStepPlan};
use crate::qreg::{StateVector, C64};
use crate::rate::{
    rate_constant, retained_levels, DividingSurface, RateParams, RateResult, SpectralInput, SpectrumSource,
};

/// Largest register the dense routines accept.
pub const DENSE_CAP_QUBITS: usize = 12;

/// Phases closer than this are one degenerate cluster.
pub const DEGENERACY_TOL: f64 = 1e-9;

const MIX: f64 = 0.577_215_664_901_532_9;
const MIX2: f64 = 1.324_717_957_244_746;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseUnitary {
    m: DMatrix<C64>,
}

impl DenseUnitary {
    /// Wrap a square matrix, checking `U†U = I` to `tol`.
    pub fn new(m: DMatrix<C64>, tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(FluxError::Config("unitary must be square".into()));
        }
        let u = DenseUnitary { m };
        let err = u.unitarity_error();
        if err > tol {
            return Err(FluxError::Invariant(format!("matrix is not unitary: |U†U − I| = {err:.3e}")));
        }
        Ok(u)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    /// Largest entry of `U†U − I`.
    pub fn unitarity_error(&self) -> f64 {
        let p = cmul(&self.m.adjoint(), &self.m);
        max_dev_from_identity(&p)
    }

    pub fn adjoint(&self) -> DenseUnitary {
        DenseUnitary { m: self.m.adjoint() }
    }

    pub fn mul(&self, other: &DenseUnitary) -> DenseUnitary {
        DenseUnitary { m: cmul(&self.m, &other.m) }
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.dim() != self.dim() {
            return Err(FluxError::Config(format!(
                "matrix of dimension {} applied to a state of dimension {}",
                self.dim(),
                state.dim()
            )));
        }
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        StateVector::from_amplitudes((&self.m * v).as_slice().to_vec())
    }

    /// Largest entrywise distance to `other` after removing the best global phase.
    pub fn distance_up_to_phase(&self, other: &DenseUnitary) -> f64 {
        let ov: C64 = self.m.iter().zip(other.m.iter()).map(|(a, b)| a.conj() * b).sum();
        let ph = if ov.norm() > 0.0 { ov / ov.norm() } else { C64::new(1.0, 0.0) };
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a * ph - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &DenseUnitary) -> f64 {
        (&self.m - &other.m).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

fn max_dev_from_identity(p: &DMatrix<C64>) -> f64 {
    let mut err: f64 = 0.0;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let want = if i == j { 1.0 } else { 0.0 };
            err = err.max((p[(i, j)] - C64::new(want, 0.0)).norm());
        }
    }
    err
}

/// Complex product through four real products, which use the blocked kernel.
pub(crate) fn cmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ai) = (a.map(|x| x.re), a.map(|x| x.im));
    let (br, bi) = (b.map(|x| x.re), b.map(|x| x.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, C64::new)
}

fn check_cap(n_qubits: usize) -> Result<()> {
    if n_qubits > DENSE_CAP_QUBITS {
        return Err(FluxError::ResourceCap(format!(
            "dense oracle limited to {DENSE_CAP_QUBITS} qubits, asked for {n_qubits}"
        )));
    }
    Ok(())
}

/// `(j', j) ↦ e^{2πi jj'/n}/√n`.
pub fn dft_matrix(n: usize) -> DenseUnitary {
    let s = 1.0 / (n as f64).sqrt();
    DenseUnitary {
        m: DMatrix::from_fn(n, n, |r, c| C64::from_polar(s, 2.0 * PI * ((r * c) % n) as f64 / n as f64)),
    }
}

/// Matrix of a linear map on `n_qubits`, one column per basis state.
pub fn matrix_of<F>(n_qubits: usize, mut op: F) -> Result<DenseUnitary>
where
    F: FnMut(&mut StateVector) -> Result<()>,
{
    check_cap(n_qubits)?;
    let n = 1usize << n_qubits;
    let mut m = DMatrix::zeros(n, n);
    for c in 0..n {
        let mut s = StateVector::basis(n_qubits, c)?;
        op(&mut s)?;
        m.set_column(c, &nalgebra::DVector::from_column_slice(s.amplitudes()));
    }
    Ok(DenseUnitary { m })
}

/// `D(F₂) · (⊗_d DFT) · D(F₁)` built entrywise.
pub fn dense_step_unitary(plan: &SplitStepPlan) -> Result<DenseUnitary> {
    let g = plan.grid();
    check_cap(g.total_qubits())?;
    let n = g.points_per_dof();
    let mask = n - 1;
    let dft = dft_matrix(n);
    let (f1, f2) = (plan.f1(), plan.f2());
    let m = DMatrix::from_fn(g.dim(), g.dim(), |r, c| {
        let mut k = C64::new(1.0, 0.0);
        for d in 0..g.dofs() {
            let sh = g.dof_low_qubit(d);
            k *= dft.m[((r >> sh) & mask, (c >> sh) & mask)];
        }
        C64::from_polar(1.0, f2[r]) * k * C64::from_polar(1.0, f1[c])
    });
    Ok(DenseUnitary { m })
}

/// Adjoint of [`dense_step_unitary`].
pub fn inverse_step(plan: &SplitStepPlan) -> Result<DenseUnitary> {
    Ok(dense_step_unitary(plan)?.adjoint())
}

/// Eigendecomposition of a unitary, `U v_n = e^{iθ_n} v_n`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// `θ_n ∈ [0, 2π)`.
    pub phases: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub vectors: DMatrix<C64>,
    /// Size of the degenerate cluster each level belongs to.
    pub multiplicity: Vec<usize>,
    /// Real vectors `r_n` with `v_n = frame ∘ r_n`, when the step comes from a
    /// real symmetric problem.
    pub real_vectors: Option<DMatrix<f64>>,
    pub frame: Option<Vec<C64>>,
    /// Energies on the principal branch, present for step eigensystems.
    pub energies: Option<Vec<f64>>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn vector(&self, n: usize) -> StateVector {
        StateVector::from_amplitudes(self.vectors.column(n).iter().cloned().collect()).expect("power-of-two dimension")
    }

    /// `r_n` as a plain vector (requires a real frame).
    pub fn real_vector(&self, n: usize) -> Option<Vec<f64>> {
        self.real_vectors.as_ref().map(|r| r.column(n).iter().cloned().collect())
    }

    /// `ξ_n = ⟨v_n|ψ⟩`.
    pub fn coefficients(&self, psi: &StateVector) -> Vec<C64> {
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        (self.vectors.adjoint() * v).iter().cloned().collect()
    }

    pub fn populations(&self, psi: &StateVector) -> Vec<f64> {
        self.coefficients(psi).iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn energies(&self) -> &[f64] {
        self.energies.as_deref().unwrap_or(&self.phases)
    }

    /// Largest `|U v_n − e^{iθ_n} v_n|` over all levels.
    pub fn residual(&self, u: &DenseUnitary) -> f64 {
        let uv = cmul(u.matrix(), &self.vectors);
        let mut worst: f64 = 0.0;
        for n in 0..self.len() {
            let lam = C64::from_polar(1.0, self.phases[n]);
            for j in 0..self.vectors.nrows() {
                worst = worst.max((uv[(j, n)] - lam * self.vectors[(j, n)]).norm());
            }
        }
        worst
    }

    /// Largest entry of `V†V − I`.
    pub fn orthonormality_error(&self) -> f64 {
        max_dev_from_identity(&cmul(&self.vectors.adjoint(), &self.vectors))
    }

    fn permute(&mut self, order: &[usize]) {
        self.phases = order.iter().map(|&i| self.phases[i]).collect();
        self.vectors = self.vectors.select_columns(order);
        if let Some(r) = &self.real_vectors {
            self.real_vectors = Some(r.select_columns(order));
        }
        if let Some(e) = &self.energies {
            self.energies = Some(order.iter().map(|&i| e[i]).collect());
        }
        self.multiplicity = order.iter().map(|&i| self.multiplicity[i]).collect();
    }
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn multiplicities(phases: &[f64]) -> Vec<usize> {
    phases
        .iter()
        .map(|&p| phases.iter().filter(|&&q| circular_gap(p, q) < DEGENERACY_TOL).count())
        .collect()
}

/// Runs of sorted eigenvalue indices closer than `tol`.
fn clusters(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some(c) if (values[i] - values[*c.last().unwrap()]).abs() < tol => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out.into_iter().filter(|c| c.len() > 1).collect()
}

/// General unitary: diagonalise the Hermitian combination
/// `(U+U†)/2 + c (U−U†)/(2i)`, whose eigenvectors are those of `U`.
pub fn eigensystem(u: &DenseUnitary) -> Result<EigenSystem> {
    let err = u.unitarity_error();
    if err > 1e-8 {
        return Err(FluxError::Invariant(format!("eigensystem needs a unitary, |U†U − I| = {err:.3e}")));
    }
    let n = u.dim();
    let ud = u.m.adjoint();
    let herm = |c: f64| -> DMatrix<C64> {
        let h1 = (&u.m + &ud) * C64::new(0.5, 0.0);
        let h2 = (&u.m - &ud) * C64::new(0.0, -0.5);
        h1 + h2 * C64::new(c, 0.0)
    };
    let se = SymmetricEigen::new(herm(MIX));
    let mut vectors = se.eigenvectors;
    for c in clusters(se.eigenvalues.as_slice(), 1e-7) {
        let vc = vectors.select_columns(&c);
        let small = cmul(&cmul(&vc.adjoint(), &herm(MIX2)), &vc);
        let inner = SymmetricEigen::new(small);
        let rotated = cmul(&vc, &inner.eigenvectors);
        for (k, &col) in c.iter().enumerate() {
            vectors.set_column(col, &rotated.column(k));
        }
    }
    let uv = cmul(&u.m, &vectors);
    let phases: Vec<f64> = (0..n)
        .map(|k| {
            let lam: C64 = vectors.column(k).iter().zip(uv.column(k).iter()).map(|(a, b)| a.conj() * b).sum();
            lam.arg().rem_euclid(2.0 * PI)
        })
        .collect();
    let mut es = EigenSystem {
        multiplicity: multiplicities(&phases),
        phases,
        vectors,
        real_vectors: None,
        frame: None,
        energies: None,
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| es.phases[a].total_cmp(&es.phases[b]));
    es.permute(&order);
    Ok(es)
}

/// Eigensystem of the split step in its real frame.
///
/// With `D = e^{iVΔt/2}` the matrix `S = D⁻¹ U D` is complex symmetric and
/// unitary, so its real and imaginary parts are commuting real symmetric
/// matrices with common real eigenvectors `r_n`. Then `v_n = D r_n`. Levels are
/// sorted by energy and each `r_n` has its largest entry positive.
pub fn step_eigensystem(plan: &SplitStepPlan) -> Result<EigenSystem> {
    let u = dense_step_unitary(plan)?;
    let n = u.dim();
    let frame = plan.half_potential_phases();
    let s = DMatrix::from_fn(n, n, |r, c| frame[r].conj() * u.m[(r, c)] * frame[c]);
    let a = s.map(|x| x.re);
    let b = s.map(|x| x.im);
    let a = (&a + a.transpose()) * 0.5;
    let b = (&b + b.transpose()) * 0.5;
    let se = SymmetricEigen::new(&a + &b * MIX);
    let mut r = se.eigenvectors;
    for c in clusters(se.eigenvalues.as_slice(), 1e-7) {
        let rc = r.select_columns(&c);
        let small = rc.transpose() * (&a + &b * MIX2) * &rc;
        let inner = SymmetricEigen::new((&small + small.transpose()) * 0.5);
        let rotated = &rc * inner.eigenvectors;
        for (k, &col) in c.iter().enumerate() {
            r.set_column(col, &rotated.column(k));
        }
    }
    for k in 0..n {
        let mut col = r.column_mut(k);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    let ar = &a * &r;
    let br = &b * &r;
    let phases: Vec<f64> = (0..n)
        .map(|k| {
            let re = r.column(k).dot(&ar.column(k));
            let im = r.column(k).dot(&br.column(k));
            im.atan2(re).rem_euclid(2.0 * PI)
        })
        .collect();
    let dt = plan.grid().dt();
    let gamma = plan.reference_phase();
    let energies: Vec<f64> = phases.iter().map(|&p| quasi_energy(p, dt, 1, gamma)).collect();
    let vectors = DMatrix::from_fn(n, n, |j, k| frame[j] * r[(j, k)]);
    let mut es = EigenSystem {
        multiplicity: multiplicities(&phases),
        phases,
        vectors,
        real_vectors: Some(r),
        frame: Some(frame),
        energies: Some(energies),
    };
    let e = es.energies.clone().unwrap();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| e[x].total_cmp(&e[y]));
    es.permute(&order);
    Ok(es)
}

/// Which levels enter the oracle's correlation function, before the
/// Boltzmann cutoff.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelWindow {
    All,
    /// Levels holding at least `min_population` of `state`.
    Populated { state: StateVector, min_population: f64 },
    Below { energy: f64 },
}

impl LevelWindow {
    pub fn select(&self, eig: &EigenSystem) -> Vec<usize> {
        match self {
            LevelWindow::All => (0..eig.len()).collect(),
            LevelWindow::Populated { state, min_population } => eig
                .populations(state)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p >= *min_population)
                .map(|(n, _)| n)
                .collect(),
            LevelWindow::Below { energy } => eig
                .energies()
                .iter()
                .enumerate()
                .filter(|(_, &e)| e <= *energy)
                .map(|(n, _)| n)
                .collect(),
        }
    }
}

/// Exact spectral input restricted to `levels`.
pub fn oracle_spectral_input(eig: &EigenSystem, levels: &[usize], surface: &DividingSurface) -> Result<SpectralInput> {
    let r = eig
        .real_vectors
        .as_ref()
        .ok_or_else(|| FluxError::Config("oracle spectral input needs a real-frame eigensystem".into()))?;
    let energies = levels.iter().map(|&n| eig.energies()[n]).collect();
    let amps: Vec<Vec<f64>> = levels.iter().map(|&n| r.column(n).iter().cloned().collect()).collect();
    SpectralInput::from_real_amplitudes(energies, &amps, surface, SpectrumSource::Oracle)
}

#[derive(Debug, Clone)]
pub struct DirectRate {
    /// Eigen-sum evaluation.
    pub rate: RateResult,
    /// `Tr[F e^{iHτ*} F e^{−iHτ}]` on the same grid.
    pub trace_cf: Vec<f64>,
    /// `max_t |trace − eigen-sum| / max_t |eigen-sum|`.
    pub max_relative_deviation: f64,
    /// Level indices (into the eigensystem) that were summed.
    pub levels: Vec<usize>,
    pub eigensystem: EigenSystem,
}

/// Relative agreement required between trace and eigen-sum.
pub const SELF_CHECK_TOL: f64 = 1e-8;

/// Exact correlation function and rate by two independent routes.
///
/// `H = Σ_n E_n |n⟩⟨n|` over all levels and `F = i[H, h]`. The thermal factors
/// `e^{−βH/2}` are restricted to the window levels that survive the Boltzmann
/// cutoff, which is exactly the set the eigen-sum runs over.
pub fn direct_correlation_and_rate(
    plan: &SplitStepPlan,
    surface: &DividingSurface,
    window: &LevelWindow,
    params: &RateParams,
) -> Result<DirectRate> {
    let eig = step_eigensystem(plan)?;
    let candidates = window.select(&eig);
    if candidates.is_empty() {
        return Err(FluxError::EmptySpectrum("no level inside the oracle window".into()));
    }
    let e_all = eig.energies().to_vec();
    let cand_e: Vec<f64> = candidates.iter().map(|&n| e_all[n]).collect();
    let levels: Vec<usize> = retained_levels(&cand_e, params.beta, params.eps_b)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    let spec = oracle_spectral_input(&eig, &levels, surface)?;
    let rate = rate_constant(&spec, params)?;
    let trace_cf = trace_correlation(&eig, &levels, surface, params.beta, &rate.t);
    let scale = rate.cf.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let dev = trace_cf
        .iter()
        .zip(&rate.cf)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let rel = if scale > 0.0 { dev / scale } else { dev };
    if rel > SELF_CHECK_TOL {
        return Err(FluxError::Validation(format!(
            "trace and eigen-sum correlation functions differ by {rel:.3e} (relative)"
        )));
    }
    Ok(DirectRate {
        rate,
        trace_cf,
        max_relative_deviation: rel,
        levels,
        eigensystem: eig,
    })
}

/// `Tr[F A(t) F B(t)]` with `A = Σ e^{iE t − βE/2}|n⟩⟨n|`, `B = Σ e^{−iE t − βE/2}|n⟩⟨n|`.
pub fn trace_correlation(eig: &EigenSystem, levels: &[usize], surface: &DividingSurface, beta: f64, t: &[f64]) -> Vec<f64> {
    let n = eig.vectors.nrows();
    let e = eig.energies();
    let v = &eig.vectors;
    let diag = DMatrix::from_fn(n, n, |r, c| if r == c { C64::new(e[r], 0.0) } else { C64::new(0.0, 0.0) });
    let h_eff = cmul(&cmul(v, &diag), &v.adjoint());
    let h = surface.values();
    let flux = DMatrix::from_fn(n, n, |j, k| C64::new(0.0, 1.0) * h_eff[(j, k)] * (h[k] as f64 - h[j] as f64));
    let vr = v.select_columns(levels);
    let e_min = levels.iter().map(|&l| e[l]).fold(f64::INFINITY, f64::min);
    t.iter()
        .map(|&ti| {
            let scaled = |sign: f64| {
                let mut w = vr.clone();
                for (k, &l) in levels.iter().enumerate() {
                    let f = C64::from_polar((-0.5 * beta * (e[l] - e_min)).exp(), sign * e[l] * ti);
                    for x in w.column_mut(k).iter_mut() {
                        *x *= f;
                    }
                }
                cmul(&w, &vr.adjoint())
            };
            let fa = cmul(&flux, &scaled(1.0));
            let fb = cmul(&flux, &scaled(-1.0));
            let mut tr = C64::new(0.0, 0.0);
            for j in 0..n {
                for k in 0..n {
                    tr += fa[(j, k)] * fb[(k, j)];
                }
            }
            tr.re * (-beta * e_min).exp()
        })
        .collect()
}

/// Eigenphases and energies as CSV: `n,phase,energy,multiplicity`.
pub fn write_eigenvalues_csv(eig: &EigenSystem, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "n,phase,energy,multiplicity")?;
    for n in 0..eig.len() {
        writeln!(f, "{},{:.17e},{:.17e},{}", n, eig.phases[n], eig.energies()[n], eig.multiplicity[n])?;
    }
    Ok(())
}

/// Real-frame eigenvectors as CSV, one row per basis index, one column per level.
pub fn write_eigenvectors_csv(eig: &EigenSystem, levels: &[usize], path: &Path) -> Result<()> {
    let r = eig
        .real_vectors
        .as_ref()
        .ok_or_else(|| FluxError::Config("no real-frame eigenvectors to write".into()))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = levels.iter().map(|n| format!("a{n}")).collect();
    writeln!(f, "j,{}", header.join(","))?;
    for j in 0..r.nrows() {
        let row: Vec<String> = levels.iter().map(|&n| format!("{:.17e}", r[(j, n)])).collect();
        writeln!(f, "{},{}", j, row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::PotentialSpec;
    use crate::qreg::GridSpec;

    fn plan(l: usize, p: PotentialSpec) -> SplitStepPlan {
        SplitStepPlan::new(GridSpec::resonant(l, vec![1.0], vec![1.0]).unwrap(), p).unwrap()
    }

    #[test]
    fn dft_examples() {
        let h = dft_matrix(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (r, c, v) in [(0, 0, s), (0, 1, s), (1, 0, s), (1, 1, -s)] {
            assert!((h.matrix()[(r, c)] - C64::new(v, 0.0)).norm() < 1e-15);
        }
        assert!((dft_matrix(4).matrix()[(1, 1)] - C64::new(0.0, 0.5)).norm() < 1e-15);
        assert!(dft_matrix(16).unitarity_error() < 1e-12);
    }

    #[test]
    fn one_qubit_step_by_hand() {
        let p = plan(1, PotentialSpec::Tabulated { values: vec![0.3, -0.2] });
        let u = dense_step_unitary(&p).unwrap();
        let dt = p.grid().dt();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // F₁ = (0, −π/2), F₂ = F₁ + VΔt
        let f1 = [0.0, -PI / 2.0];
        let f2 = [0.3 * dt, -PI / 2.0 - 0.2 * dt];
        let h = [[s, s], [s, -s]];
        for r in 0..2 {
            for c in 0..2 {
                let want = C64::from_polar(h[r][c], f2[r] + f1[c]);
                assert!((u.matrix()[(r, c)] - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn inverse_step_is_adjoint() {
        let p = plan(5, PotentialSpec::Harmonic { omega: vec![0.2], center: None });
        let u = dense_step_unitary(&p).unwrap();
        let ui = inverse_step(&p).unwrap();
        assert!(u.unitarity_error() < 1e-12);
        let prod = ui.mul(&u);
        assert!(max_dev_from_identity(prod.matrix()) < 1e-12);
    }

    #[test]
    fn eigensystem_of_identity_and_diagonal() {
        let id = DenseUnitary::new(DMatrix::identity(8, 8), 1e-12).unwrap();
        let e = eigensystem(&id).unwrap();
        assert!(e.phases.iter().all(|&p| p.min(2.0 * PI - p) < 1e-12));
        assert!(e.multiplicity.iter().all(|&m| m == 8));
        let ph = [0.3, 2.0, 5.5, 1.1];
        let d = DMatrix::from_fn(4, 4, |r, c| if r == c { C64::from_polar(1.0, ph[r]) } else { C64::new(0.0, 0.0) });
        let e = eigensystem(&DenseUnitary::new(d, 1e-12).unwrap()).unwrap();
        let mut want = ph.to_vec();
        want.sort_by(f64::total_cmp);
        for (a, b) in e.phases.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let bad = DMatrix::from_element(2, 2, C64::new(1.0, 0.0));
        assert!(DenseUnitary::new(bad, 1e-10).is_err());
    }

    #[test]
    fn step_eigensystem_is_consistent() {
        let p = plan(6, PotentialSpec::Harmonic { omega: vec![0.15], center: None });
        let u = dense_step_unitary(&p).unwrap();
        let e = step_eigensystem(&p).unwrap();
        assert!(e.residual(&u) < 1e-9);
        assert!(e.orthonormality_error() < 1e-10);
        let g = eigensystem(&u).unwrap();
        assert!(g.residual(&u) < 1e-9);
        let mut a = e.phases.clone();
        a.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&g.phases) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_cap_enforced() {
        let g = GridSpec::resonant(13, vec![1.0], vec![1.0]).unwrap();
        let p = SplitStepPlan::new(g, PotentialSpec::Free).unwrap();
        assert!(matches!(dense_step_unitary(&p), Err(FluxError::ResourceCap(_))));
    }
}
