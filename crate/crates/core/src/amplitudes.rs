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

//! Signed real amplitudes from Born statistics.
//!
//! Besides the bare position histogram, one histogram is taken after a
//! Hadamard on each qubit `q`. For indices `i < k = i | 2^q` that setting
//! yields `P_i = (a_i + a_k)²/2` and `P_k = (a_i − a_k)²/2`, so
//! `sign(a_i a_k) = sign(P_i − P_k)`. Relative signs are chained along a
//! maximum-significance spanning tree of the hypercube.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::gates::{apply_diagonal_phase, apply_hadamard, GateTally};
use crate::pointer::SpectrumEstimate;
use crate::propagator::SplitStepPlan;
use crate::qreg::{StateVector, C64};
use crate::sampling::{child_seed, Categorical};

/// Smallest significance (in standard errors) that fixes a relative sign.
pub const SIGN_SIGMA: f64 = 3.0;

/// Non-tree edges at least this significant must agree with the tree.
pub const CONFLICT_SIGMA: f64 = 5.0;

const EXACT_TOL: f64 = 1e-12;

/// Frequency tables from the `ν + 1` measurement settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignProtocolRecord {
    pub n_qubits: usize,
    /// `None` for exact probabilities.
    pub shots_per_setting: Option<u64>,
    pub basis: Vec<f64>,
    /// `hadamard[q]`: frequencies after a Hadamard on qubit `q`.
    pub hadamard: Vec<Vec<f64>>,
}

impl SignProtocolRecord {
    /// Exact probabilities of every setting for `state`.
    pub fn exact(state: &StateVector) -> Result<Self> {
        let mut hadamard = Vec::with_capacity(state.n_qubits());
        for q in 0..state.n_qubits() {
            hadamard.push(hadamard_setting(state, q)?.probabilities());
        }
        Ok(SignProtocolRecord {
            n_qubits: state.n_qubits(),
            shots_per_setting: None,
            basis: state.probabilities(),
            hadamard,
        })
    }

    /// Probabilities every setting would show for the real vector `a`, each
    /// setting normalised; used for parametric resampling.
    pub fn model(a: &[f64], shots_per_setting: Option<u64>) -> Result<Self> {
        let n = a.len();
        if !n.is_power_of_two() || n < 2 {
            return Err(FluxError::Config(format!("amplitude table of length {n} is not a register")));
        }
        let n_qubits = n.trailing_zeros() as usize;
        let norm = |v: Vec<f64>| -> Vec<f64> {
            let s: f64 = v.iter().sum();
            if s > 0.0 {
                v.iter().map(|x| x / s).collect()
            } else {
                v
            }
        };
        let basis = norm(a.iter().map(|x| x * x).collect());
        let hadamard = (0..n_qubits)
            .map(|q| {
                let m = 1usize << q;
                norm((0..n)
                    .map(|j| {
                        let (i, k) = (j & !m, j | m);
                        let v = if j & m == 0 { a[i] + a[k] } else { a[i] - a[k] };
                        0.5 * v * v
                    })
                    .collect())
            })
            .collect();
        Ok(SignProtocolRecord {
            n_qubits,
            shots_per_setting,
            basis,
            hadamard,
        })
    }

    fn check(&self) -> Result<()> {
        let n = 1usize << self.n_qubits;
        if self.basis.len() != n || self.hadamard.len() != self.n_qubits || self.hadamard.iter().any(|h| h.len() != n) {
            return Err(FluxError::Config(format!(
                "sign record needs {} settings of {} outcomes",
                self.n_qubits + 1,
                n
            )));
        }
        if self.shots_per_setting == Some(0) {
            return Err(FluxError::Config("sign record has zero shots per setting".into()));
        }
        Ok(())
    }

    /// Multinomial resample of every setting.
    pub fn resample(&self, seed: u64) -> SignProtocolRecord {
        let Some(s) = self.shots_per_setting else {
            return self.clone();
        };
        let draw = |p: &Vec<f64>, stream: u64| -> Vec<f64> {
            match Categorical::new(p) {
                Ok(c) => c.histogram(s, seed, stream).iter().map(|&x| x as f64 / s as f64).collect(),
                Err(_) => p.clone(),
            }
        };
        SignProtocolRecord {
            n_qubits: self.n_qubits,
            shots_per_setting: self.shots_per_setting,
            basis: draw(&self.basis, 0),
            hadamard: self.hadamard.iter().enumerate().map(|(q, h)| draw(h, q as u64 + 1)).collect(),
        }
    }
}

fn hadamard_setting(state: &StateVector, q: usize) -> Result<StateVector> {
    let mut s = state.clone();
    apply_hadamard(&mut s, q, &mut GateTally::default())?;
    Ok(s)
}

/// Measure every setting `shots_per_setting` times on fresh preparations.
pub fn collect_sign_data<F>(prepare: F, shots_per_setting: u64, rng_seed: u64) -> Result<SignProtocolRecord>
where
    F: Fn() -> Result<StateVector>,
{
    if shots_per_setting == 0 {
        return Err(FluxError::Config("sign protocol needs at least one shot per setting".into()));
    }
    let freq = |state: &StateVector, stream: u64| -> Result<Vec<f64>> {
        state.check_normalized(1e-9)?;
        let counts = Categorical::new(&state.probabilities())?.histogram(shots_per_setting, rng_seed, stream);
        Ok(counts.iter().map(|&c| c as f64 / shots_per_setting as f64).collect())
    };
    let s0 = prepare()?;
    let n_qubits = s0.n_qubits();
    let basis = freq(&s0, 0)?;
    let mut hadamard = Vec::with_capacity(n_qubits);
    for q in 0..n_qubits {
        let s = hadamard_setting(&prepare()?, q)?;
        hadamard.push(freq(&s, q as u64 + 1)?);
    }
    Ok(SignProtocolRecord {
        n_qubits,
        shots_per_setting: Some(shots_per_setting),
        basis,
        hadamard,
    })
}

/// Real amplitudes with signs where the data fixes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedAmplitudeTable {
    /// Signed amplitude, or 0 where the sign is undetermined.
    pub a: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub stderr: Vec<f64>,
    pub determined: Vec<bool>,
    /// Determined entries whose sign rests on pooled evidence below
    /// [`SIGN_SIGMA`] rather than a single significant edge.
    #[serde(default)]
    pub inferred: Vec<bool>,
    /// Index fixed to a positive sign.
    pub anchor: usize,
}

impl SignedAmplitudeTable {
    pub fn n_undetermined(&self) -> usize {
        self.determined.iter().filter(|d| !**d).count()
    }

    /// Signed amplitudes with undetermined entries taken as positive magnitudes.
    pub fn model_vector(&self) -> Vec<f64> {
        (0..self.a.len())
            .map(|j| if self.determined[j] { self.a[j] } else { self.magnitude[j] })
            .collect()
    }

    /// Probability carried by undetermined entries.
    pub fn undetermined_weight(&self) -> f64 {
        self.magnitude
            .iter()
            .zip(&self.determined)
            .filter(|(_, d)| !**d)
            .map(|(m, _)| m * m)
            .sum()
    }
}

struct Edge {
    i: usize,
    k: usize,
    z: f64,
    sign: f64,
}

fn edges(record: &SignProtocolRecord) -> Vec<Edge> {
    let n = 1usize << record.n_qubits;
    let mut out = Vec::with_capacity(n * record.n_qubits / 2);
    for (q, h) in record.hadamard.iter().enumerate() {
        let m = 1usize << q;
        for i in (0..n).filter(|i| i & m == 0) {
            let k = i | m;
            let d = h[i] - h[k];
            let z = match record.shots_per_setting {
                None => {
                    if d.abs() > EXACT_TOL {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                }
                Some(s) => {
                    let var = ((h[i] + h[k] - d * d).max(0.0)) / s as f64;
                    if var > 0.0 {
                        d.abs() / var.sqrt()
                    } else if d != 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                }
            };
            out.push(Edge { i, k, z, sign: d.signum() });
        }
    }
    out
}

fn find(parent: &mut [usize], mut u: usize) -> usize {
    while parent[u] != u {
        parent[u] = parent[parent[u]];
        u = parent[u];
    }
    u
}

/// Magnitudes from the bare histogram, relative signs from the Hadamard settings.
///
/// Signs propagate along a maximum-significance spanning forest of hypercube
/// edges with `z ≥ SIGN_SIGMA`; entries outside the anchor's tree stay
/// undetermined.
pub fn solve_signs(record: &SignProtocolRecord) -> Result<SignedAmplitudeTable> {
    solve_signs_pooled(record, None)
}

/// As [`solve_signs`], then joins the remaining trees to the anchor's one by
/// one while the pooled significance of all edges between two trees,
/// `|Σ ±z| / √(edges)`, reaches `pool_sigma`. Joined entries are marked
/// `inferred`.
pub fn solve_signs_pooled(record: &SignProtocolRecord, pool_sigma: Option<f64>) -> Result<SignedAmplitudeTable> {
    record.check()?;
    let n = record.basis.len();
    let magnitude: Vec<f64> = record.basis.iter().map(|p| p.max(0.0).sqrt()).collect();
    let stderr: Vec<f64> = match record.shots_per_setting {
        None => vec![0.0; n],
        Some(s) => record
            .basis
            .iter()
            .map(|&p| ((1.0 - p).max(0.0) / (4.0 * s as f64)).sqrt().max(0.5 / s as f64))
            .collect(),
    };
    let mut es = edges(record);
    // strongest first; ties by index for determinism
    es.sort_by(|a, b| b.z.total_cmp(&a.z).then(a.i.cmp(&b.i)).then(a.k.cmp(&b.k)));
    let mut parent: Vec<usize> = (0..n).collect();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut in_tree = vec![false; es.len()];
    for (idx, e) in es.iter().enumerate() {
        if e.z < SIGN_SIGMA {
            break;
        }
        let (ri, rk) = (find(&mut parent, e.i), find(&mut parent, e.k));
        if ri != rk {
            parent[ri] = rk;
            adj[e.i].push((e.k, e.sign));
            adj[e.k].push((e.i, e.sign));
            in_tree[idx] = true;
        }
    }
    let anchor = (0..n).max_by(|&a, &b| magnitude[a].total_cmp(&magnitude[b]).then(b.cmp(&a))).unwrap_or(0);
    // Relative signs inside every tree, each rooted at its first member
    // (the anchor for its own tree).
    let mut sign = vec![0.0f64; n];
    for root in std::iter::once(anchor).chain(0..n) {
        if sign[root] != 0.0 {
            continue;
        }
        sign[root] = 1.0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, s) in &adj[u] {
                if sign[v] == 0.0 {
                    sign[v] = sign[u] * s;
                    queue.push_back(v);
                }
            }
        }
    }
    let home = find(&mut parent, anchor);
    let strict: Vec<bool> = (0..n).map(|j| find(&mut parent, j) == home).collect();
    let mut conflicts = 0;
    let mut worst: Option<&Edge> = None;
    for (idx, e) in es.iter().enumerate() {
        let strong = match record.shots_per_setting {
            None => e.z.is_infinite(),
            Some(_) => e.z >= CONFLICT_SIGMA,
        };
        if in_tree[idx] || !strong || !strict[e.i] || !strict[e.k] {
            continue;
        }
        if sign[e.i] * sign[e.k] != e.sign {
            conflicts += 1;
            if worst.is_none_or(|w| e.z > w.z) {
                worst = Some(e);
            }
        }
    }
    if let Some(w) = worst {
        return Err(FluxError::SignInconsistency {
            conflicts,
            i: w.i,
            k: w.k,
            sigma: w.z,
        });
    }
    let mut determined = strict.clone();
    if let Some(pool) = pool_sigma {
        pool_trees(&es, &mut parent, &mut sign, home, pool);
        let home = find(&mut parent, anchor);
        for (j, d) in determined.iter_mut().enumerate() {
            *d = find(&mut parent, j) == home;
        }
    }
    let inferred: Vec<bool> = determined.iter().zip(&strict).map(|(&d, &s)| d && !s).collect();
    let a = (0..n).map(|j| if determined[j] { magnitude[j] * sign[j] } else { 0.0 }).collect();
    Ok(SignedAmplitudeTable {
        a,
        magnitude,
        stderr,
        determined,
        inferred,
        anchor,
    })
}

/// Grow the anchor's tree by whole trees, most significant link first.
fn pool_trees(es: &[Edge], parent: &mut [usize], sign: &mut [f64], anchor_root: usize, pool_sigma: f64) {
    let n = sign.len();
    let mut home = anchor_root;
    loop {
        // (evidence, edges) from the anchor's tree to each other tree
        let mut link: Vec<(f64, usize)> = vec![(0.0, 0); n];
        for e in es {
            let (ri, rk) = (find(parent, e.i), find(parent, e.k));
            let other = match (ri == home, rk == home) {
                (true, false) => rk,
                (false, true) => ri,
                _ => continue,
            };
            let z = e.z.min(1e6);
            link[other].0 += e.sign * sign[e.i] * sign[e.k] * z;
            link[other].1 += 1;
        }
        let best = (0..n)
            .filter(|&r| link[r].1 > 0)
            .map(|r| (r, link[r].0.abs() / (link[r].1 as f64).sqrt()))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        let Some((r, z)) = best else { break };
        if z < pool_sigma {
            break;
        }
        if link[r].0 < 0.0 {
            for j in 0..n {
                if find(parent, j) == r {
                    sign[j] = -sign[j];
                }
            }
        }
        parent[r] = home;
        home = find(parent, home);
    }
}

/// Weighted Gauss-Newton fit of real amplitudes to all `ν + 1` settings at once.
///
/// The bare histogram fixes `a_j²`, every Hadamard setting also fixes
/// `(a_i ± a_k)²/2`, so magnitudes gain from all settings rather than one.
/// Starts from a sign-solved table; entries whose sign stayed undetermined are
/// fitted but reported as 0, as in [`solve_signs`].
pub fn refine_amplitudes(table: &SignedAmplitudeTable, record: &SignProtocolRecord, iterations: usize) -> Result<SignedAmplitudeTable> {
    record.check()?;
    let Some(shots) = record.shots_per_setting else {
        return Ok(table.clone());
    };
    let n = record.basis.len();
    let floor = 0.5 / shots as f64;
    let weight = |p: f64| 1.0 / p.max(floor);
    let mut a: Vec<f64> = (0..n)
        .map(|j| if table.determined[j] { table.a[j] } else { table.magnitude[j] })
        .collect();
    let mut normal = DMatrix::<f64>::zeros(n, n);
    for _ in 0..iterations.max(1) {
        normal.fill(0.0);
        let mut rhs = DVector::<f64>::zeros(n);
        for j in 0..n {
            let w = weight(a[j] * a[j]);
            let g = 2.0 * a[j];
            normal[(j, j)] += w * g * g;
            rhs[j] += w * g * (record.basis[j] - a[j] * a[j]);
        }
        for (q, h) in record.hadamard.iter().enumerate() {
            let m = 1usize << q;
            for i in (0..n).filter(|i| i & m == 0) {
                let k = i | m;
                let (s, d) = (a[i] + a[k], a[i] - a[k]);
                // P_i = s²/2: gradient (s, s); P_k = d²/2: gradient (d, −d)
                for (obs, pred, gi, gk) in [(h[i], 0.5 * s * s, s, s), (h[k], 0.5 * d * d, d, -d)] {
                    let w = weight(pred);
                    let r = obs - pred;
                    normal[(i, i)] += w * gi * gi;
                    normal[(k, k)] += w * gk * gk;
                    normal[(i, k)] += w * gi * gk;
                    normal[(k, i)] += w * gi * gk;
                    rhs[i] += w * gi * r;
                    rhs[k] += w * gk * r;
                }
            }
        }
        for j in 0..n {
            normal[(j, j)] += 1e-12;
        }
        let step = match normal.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => break,
        };
        a.iter_mut().zip(step.iter()).for_each(|(x, d)| *x += d);
    }
    if a[table.anchor] < 0.0 {
        a.iter_mut().for_each(|x| *x = -*x);
    }
    let stderr = match normal.cholesky() {
        Some(c) => {
            let inv = c.inverse();
            (0..n).map(|j| (inv[(j, j)].max(0.0) / shots as f64).sqrt()).collect()
        }
        None => table.stderr.clone(),
    };
    let magnitude = a.iter().map(|x| x.abs()).collect();
    let signed = a
        .iter()
        .zip(&table.determined)
        .map(|(x, &d)| if d { *x } else { 0.0 })
        .collect();
    Ok(SignedAmplitudeTable {
        a: signed,
        magnitude,
        stderr,
        determined: table.determined.clone(),
        inferred: table.inferred.clone(),
        anchor: table.anchor,
    })
}

/// Largest `|Im|` after rotating the state's largest entry onto the real axis.
pub fn imaginary_residual(state: &StateVector) -> f64 {
    let amps = state.amplitudes();
    let big = amps.iter().cloned().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
    if big.norm() == 0.0 {
        return 0.0;
    }
    let rot = big.conj() / big.norm();
    amps.iter().map(|a| (a * rot).im.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeOptions {
    pub shots_per_setting: u64,
    /// Levels seen fewer times than this in the spectrum run are flagged.
    pub min_level_shots: u64,
    /// Gauss-Newton iterations of [`refine_amplitudes`]; 0 keeps the bare-histogram magnitudes.
    #[serde(default)]
    pub refine_iterations: usize,
    /// Pooled significance for joining weakly linked trees, see
    /// [`solve_signs_pooled`]; `None` keeps only single-edge signs.
    #[serde(default)]
    pub pool_sigma: Option<f64>,
}

/// Signed amplitudes of one spectral level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAmplitudes {
    pub level: usize,
    pub bin: usize,
    pub low_statistics: bool,
    pub record: Option<SignProtocolRecord>,
    pub table: Option<SignedAmplitudeTable>,
    /// How far the prepared state is from real, after global-phase alignment.
    pub imaginary_residual: f64,
    /// Expected preparations per kept shot when post-selecting on the bin.
    pub postselection_factor: f64,
}

/// Apply the real-frame rotation `e^{−iVΔt/2}` to a collapsed state.
pub fn to_real_frame(state: &StateVector, plan: &SplitStepPlan) -> Result<StateVector> {
    let dt = plan.grid().dt();
    let v = plan.potential_values();
    let mut s = state.clone();
    apply_diagonal_phase(&mut s, |j| -0.5 * v[j] * dt, &mut GateTally::default())?;
    Ok(s)
}

/// Run the sign protocol on the post-selected collapsed state of every level.
pub fn estimate_eigenstate_amplitudes(
    spectrum: &SpectrumEstimate,
    plan: &SplitStepPlan,
    opts: &AmplitudeOptions,
    rng_seed: u64,
) -> Result<Vec<LevelAmplitudes>> {
    let shots = vec![opts.shots_per_setting; spectrum.levels.len()];
    estimate_amplitudes_with_allocation(spectrum, plan, opts, &shots, rng_seed)
}

/// As [`estimate_eigenstate_amplitudes`] with `shots[n]` shots per setting for
/// level `n`; levels given zero shots get no table.
pub fn estimate_amplitudes_with_allocation(
    spectrum: &SpectrumEstimate,
    plan: &SplitStepPlan,
    opts: &AmplitudeOptions,
    shots: &[u64],
    rng_seed: u64,
) -> Result<Vec<LevelAmplitudes>> {
    if shots.len() != spectrum.levels.len() {
        return Err(FluxError::Config(format!(
            "{} shot counts for {} levels",
            shots.len(),
            spectrum.levels.len()
        )));
    }
    let mut out = Vec::with_capacity(spectrum.levels.len());
    for (n, level) in spectrum.levels.iter().enumerate() {
        let low = level.shots < opts.min_level_shots;
        let bin_weight = spectrum.histogram.get(level.bin).copied().unwrap_or(0) as f64 / spectrum.n_shots.max(1) as f64;
        let factor = if bin_weight > 0.0 { 1.0 / bin_weight } else { f64::INFINITY };
        let Some(collapsed) = level.collapsed.as_ref().filter(|_| level.shots > 0 && shots[n] > 0) else {
            out.push(LevelAmplitudes {
                level: n,
                bin: level.bin,
                low_statistics: level.shots == 0 || low,
                record: None,
                table: None,
                imaginary_residual: f64::NAN,
                postselection_factor: factor,
            });
            continue;
        };
        let prepared = to_real_frame(collapsed, plan)?;
        let record = collect_sign_data(|| Ok(prepared.clone()), shots[n], child_seed(rng_seed, n as u64))?;
        let mut table = solve_signs_pooled(&record, opts.pool_sigma)?;
        if opts.refine_iterations > 0 {
            table = refine_amplitudes(&table, &record, opts.refine_iterations)?;
        }
        out.push(LevelAmplitudes {
            level: n,
            bin: level.bin,
            low_statistics: low,
            imaginary_residual: imaginary_residual(&prepared),
            record: Some(record),
            table: Some(table),
            postselection_factor: factor,
        });
    }
    Ok(out)
}

/// `ψ_j = Σ_n ξ_n a_j(n)` for complex coefficients and real amplitude tables.
pub fn reconstruct(xi: &[C64], tables: &[Vec<f64>], frame: Option<&[C64]>) -> Vec<C64> {
    let n = tables.first().map_or(0, |t| t.len());
    (0..n)
        .map(|j| {
            let s: C64 = xi.iter().zip(tables).map(|(x, t)| x * t[j]).sum();
            frame.map_or(s, |f| s * f[j])
        })
        .collect()
}
