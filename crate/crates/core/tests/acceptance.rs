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

//! Acceptance run: criteria 1–9, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the report is always printed. Exits
//! nonzero when any criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fluxq::amplitudes::{
    collect_sign_data, estimate_eigenstate_amplitudes, reconstruct, refine_amplitudes, solve_signs, solve_signs_pooled,
    SignProtocolRecord,
};
use fluxq::cli::{run_config, validate_config, Mode, Prepared, RunConfig};
use fluxq::gates::{qft, GateTally, QubitRange};
use fluxq::oracle::{dense_step_unitary, direct_correlation_and_rate, matrix_of, step_eigensystem, LevelWindow};
use fluxq::pipeline::run_sampled_rate;
use fluxq::pointer::estimate_spectrum;
use fluxq::propagator::{gaussian_wavepacket, propagate, split_step_by_gates, PotentialSpec, SplitStepPlan};
use fluxq::rate::{rate_constant, RateParams, SpectralInput, SpectrumSource};
use fluxq::{GridSpec, StateVector, C64};

type Res<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> Res<RunConfig> {
    Ok(RunConfig::from_json(&fs::read_to_string(configs_dir().join(name))?)?)
}

fn prepare(name: &str, mode: Mode) -> Res<Prepared> {
    validate_config(&load(name)?, mode).map_err(|e| format!("{e:?}").into())
}

fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Largest entry difference after rotating `b` onto `a` at the largest entry of `a`.
fn diff_up_to_phase(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let (idx, _) = a.iter().enumerate().fold((0, 0.0), |acc, (i, x)| if x.norm() > acc.1 { (i, x.norm()) } else { acc });
    let rot = a.as_slice()[idx] / b.as_slice()[idx];
    let rot = rot / rot.norm();
    a.iter().zip(b.iter()).map(|(x, y)| (x - y * rot).norm()).fold(0.0, f64::max)
}

fn plain_dft(n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |r, c| C64::from_polar(1.0 / (n as f64).sqrt(), 2.0 * PI * (r * c) as f64 / n as f64))
}

// 1 ------------------------------------------------------------------------

fn qft_correctness() -> Res<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut counts_ok = true;
    for n in 1..=8usize {
        let mut tally = GateTally::default();
        let m = matrix_of(n, |s| {
            let mut t = GateTally::default();
            qft(s, QubitRange::all(n), &mut t)?;
            tally = t;
            Ok(())
        })?;
        worst = worst.max(max_abs_diff(m.matrix(), &plain_dft(1 << n)));
        counts_ok &= tally.n_single as usize == n && tally.n_two as usize == n * (n - 1) / 2;
    }
    Ok((
        worst <= 1e-10 && counts_ok,
        format!("max |QFT − DFT| = {worst:.2e} over 1–8 qubits; gate counts n H + n(n−1)/2 CP: {counts_ok}"),
    ))
}

// 2 ------------------------------------------------------------------------

/// `e^{iF₂} (⊗ DFT) e^{iF₁}` from the chirp and potential formulas directly.
fn textbook_step(plan: &SplitStepPlan) -> DMatrix<C64> {
    let g = plan.grid();
    let n = g.points_per_dof();
    let dft = plain_dft(n);
    let digit = |j: usize, d: usize| (j >> g.dof_low_qubit(d)) & (n - 1);
    let f1 = |j: usize| -> f64 { (0..g.dofs()).map(|d| -PI * (digit(j, d) * digit(j, d)) as f64 / n as f64).sum() };
    let pot = plan.potential();
    DMatrix::from_fn(g.dim(), g.dim(), |r, c| {
        let k: C64 = (0..g.dofs()).map(|d| dft[(digit(r, d), digit(c, d))]).product();
        C64::from_polar(1.0, f1(r) + pot.value(g, r) * g.dt()) * k * C64::from_polar(1.0, f1(c))
    })
}

fn split_step_equivalence() -> Res<(bool, String)> {
    let eckart = |c: f64, conf: f64| PotentialSpec::Eckart {
        v0: 0.02,
        width: 4.0,
        center: Some(c),
        degree: 0,
        confinement: conf,
    };
    let cases: Vec<(&str, usize, usize, PotentialSpec)> = vec![
        ("free l=3", 3, 1, PotentialSpec::Free),
        ("free l=8", 8, 1, PotentialSpec::Free),
        ("free 2×4", 4, 2, PotentialSpec::Free),
        ("harmonic l=6", 6, 1, PotentialSpec::Harmonic { omega: vec![0.05], center: None }),
        ("harmonic l=8", 8, 1, PotentialSpec::Harmonic { omega: vec![0.02], center: None }),
        ("harmonic 2×4", 4, 2, PotentialSpec::Harmonic { omega: vec![0.1, 0.07], center: None }),
        ("eckart l=5", 5, 1, eckart(12.0, 0.0)),
        ("eckart l=8", 8, 1, eckart(80.0, 0.006)),
    ];
    let mut worst_oracle: f64 = 0.0;
    let mut worst_textbook: f64 = 0.0;
    for (_, l, m, pot) in cases {
        let grid = GridSpec::resonant(l, vec![1.0; m], vec![1.0; m])?;
        let plan = SplitStepPlan::new(grid, pot)?;
        let gates = matrix_of(plan.grid().total_qubits(), |s| split_step_by_gates(s, &plan, &mut GateTally::default()))?;
        let dense = dense_step_unitary(&plan)?;
        worst_oracle = worst_oracle.max(diff_up_to_phase(dense.matrix(), gates.matrix()));
        worst_textbook = worst_textbook.max(diff_up_to_phase(&textbook_step(&plan), gates.matrix()));
    }
    let worst = worst_oracle.max(worst_textbook);
    Ok((
        worst <= 1e-10,
        format!("gates vs dense_step_unitary {worst_oracle:.2e}, vs entrywise formula {worst_textbook:.2e} (free/harmonic/Eckart, ν ≤ 8)"),
    ))
}

// 3 ------------------------------------------------------------------------

fn unitarity_endurance() -> Res<(bool, String)> {
    let grid = GridSpec::resonant(12, vec![1.0], vec![1.0])?;
    let alpha = gaussian_wavepacket(&grid, &[1500.0], &[40.0], &[0.3])?;
    let plan = SplitStepPlan::new(grid, PotentialSpec::Harmonic { omega: vec![0.003], center: None })?;
    let mut s = StateVector::from_amplitudes(alpha)?;
    let mut worst: f64 = (s.norm_sqr() - 1.0).abs();
    for _ in 0..10 {
        propagate(&mut s, &plan, 1000, &mut GateTally::default())?;
        worst = worst.max((s.norm_sqr() - 1.0).abs());
    }
    Ok((worst <= 1e-9, format!("max |‖ψ‖² − 1| = {worst:.2e} over 10^4 steps at ν = 12")))
}

// 4 ------------------------------------------------------------------------

/// Probability of pointer value `x` for eigenphase `θ`: a Fejér kernel.
fn fejer(theta: f64, x: usize, k: usize, x0: usize, t_units: u32) -> f64 {
    let p = (1usize << k) as f64;
    let d = (t_units as f64 * theta - 2.0 * PI * (x as f64 - x0 as f64) / p).rem_euclid(2.0 * PI);
    let s = (d / 2.0).sin();
    if s.abs() < 1e-12 {
        return 1.0;
    }
    ((p * d / 2.0).sin() / (p * s)).powi(2)
}

fn phase_estimation() -> Res<(bool, String)> {
    let p = prepare("harmonic.json", Mode::Spectrum)?;
    let cfg = p.pointer.ok_or("pointer missing")?;
    let init = p.initial.as_ref().ok_or("initial state missing")?;
    let (nu, k) = (p.derived.nu, cfg.k);
    let shots = p.config.sampling.spectrum_shots;
    let pmin = p.config.sampling.min_population;
    if (nu, k, shots) != (6, 8, 10_000) {
        return Err(format!("harmonic config is ν={nu}, K={k}, {shots} shots").into());
    }
    let peaks = p.pipeline_options(RateParams::new(1.0, 1.0, 2)).peaks;
    let spectrum = estimate_spectrum(init, &p.plan, &cfg, shots, p.config.sampling.seed, &peaks, &mut GateTally::default())?;

    let eig = step_eigensystem(&p.plan)?;
    let pops: Vec<f64> = (0..eig.len())
        .map(|n| {
            let v = eig.vector(n);
            v.amplitudes().iter().zip(init.amplitudes()).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr()
        })
        .collect();
    let bin = 2.0 * PI / (1usize << k) as f64;
    let (mut worst_bins, mut worst_z, mut checked): (f64, f64, usize) = (0.0, 0.0, 0);
    let mut missing = 0;
    for n in (0..eig.len()).filter(|&n| pops[n] >= pmin) {
        checked += 1;
        let target = (cfg.t_units as f64 * eig.phases[n]).rem_euclid(2.0 * PI);
        let Some((dist, level)) = spectrum
            .levels
            .iter()
            .map(|l| {
                let d = (l.phase - target).rem_euclid(2.0 * PI);
                (d.min(2.0 * PI - d) / bin, l)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
        else {
            missing += 1;
            continue;
        };
        worst_bins = worst_bins.max(dist);
        let r = peaks.sum_radius as isize;
        let np = 1isize << k;
        let expected: f64 = (-r..=r)
            .map(|o| {
                let x = (level.bin as isize + o).rem_euclid(np) as usize;
                (0..eig.len()).map(|m| pops[m] * fejer(eig.phases[m], x, k, cfg.x0, cfg.t_units)).sum::<f64>()
            })
            .sum();
        let sigma = (expected * (1.0 - expected) / shots as f64).sqrt();
        worst_z = worst_z.max((level.weight - expected).abs() / sigma);
    }
    Ok((
        missing == 0 && worst_bins <= 2.0 && worst_z <= 3.0 && checked > 0,
        format!("{checked} levels with population ≥ {pmin}: worst phase offset {worst_bins:.2} bins, worst weight {worst_z:.2}σ, missing {missing}"),
    ))
}

// 5 ------------------------------------------------------------------------

fn random_real_state(rng: &mut ChaCha8Rng, nu: usize) -> Vec<f64> {
    loop {
        let mut a: Vec<f64> = (0..1usize << nu)
            .map(|_| {
                let m: f64 = rng.gen_range(0.05..1.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        a.iter_mut().for_each(|x| *x /= norm);
        if a.iter().all(|x| x.abs() >= 0.05) {
            return a;
        }
    }
}

/// Bit flipped by the Hadamard setting `q`, found from the exact probabilities.
fn setting_masks(a: &[f64], exact: &SignProtocolRecord) -> Res<Vec<usize>> {
    let n = a.len();
    let nu = n.trailing_zeros() as usize;
    let mut masks = Vec::new();
    for h in &exact.hadamard {
        let found = (0..nu).map(|b| 1usize << b).find(|&m| {
            (0..n).all(|i| {
                let (lo, hi) = (i & !m, i | m);
                let p = if i & m == 0 { (a[lo] + a[hi]).powi(2) } else { (a[lo] - a[hi]).powi(2) } / 2.0;
                (p - h[i]).abs() < 1e-12
            })
        });
        masks.push(found.ok_or("no qubit matches a Hadamard setting")?);
    }
    Ok(masks)
}

fn sign_extraction() -> Res<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shots = 100_000u64;
    let (mut exact_fail, mut wrong, mut missed, mut signs) = (0, 0, 0, 0);
    let mut worst_exact: f64 = 0.0;
    for case in 0..100 {
        let nu = 1 + case % 4;
        let a = random_real_state(&mut rng, nu);
        let state = StateVector::from_real(&a)?;
        let exact = SignProtocolRecord::exact(&state)?;
        let t = solve_signs(&exact)?;
        let g = a[t.anchor].signum();
        let err = a.iter().zip(&t.a).map(|(x, y)| (g * x - y).abs()).fold(0.0, f64::max);
        worst_exact = worst_exact.max(err);
        if err > 1e-10 || t.n_undetermined() > 0 {
            exact_fail += 1;
        }

        let masks = setting_masks(&a, &exact)?;
        let rec = collect_sign_data(|| Ok(state.clone()), shots, 1000 + case as u64)?;
        let t = solve_signs(&rec)?;
        // entries joined to the anchor through edges of observed significance ≥ 3
        let n = a.len();
        let mut reach = vec![false; n];
        reach[t.anchor] = true;
        let mut stack = vec![t.anchor];
        while let Some(i) = stack.pop() {
            for (q, &m) in masks.iter().enumerate() {
                let k = i ^ m;
                let (lo, hi) = (i & !m, i | m);
                let f = &rec.hadamard[q];
                let d = f[lo] - f[hi];
                let var = (f[lo] + f[hi] - d * d).max(0.0) / shots as f64;
                let z = if var > 0.0 { d.abs() / var.sqrt() } else { f64::INFINITY };
                if z >= 3.0 && !reach[k] {
                    reach[k] = true;
                    stack.push(k);
                }
            }
        }
        let g = a[t.anchor].signum();
        for j in 0..n {
            if t.determined[j] {
                signs += 1;
                if t.a[j].signum() != g * a[j].signum() {
                    wrong += 1;
                }
            } else if reach[j] {
                missed += 1;
            }
        }
    }
    Ok((
        exact_fail == 0 && wrong == 0 && missed == 0,
        format!(
            "exact: {exact_fail}/100 failures (max error {worst_exact:.1e}); 10^5 shots: {signs} signs, {wrong} wrong, {missed} significant but unresolved"
        ),
    ))
}

// 6, 7 -------------------------------------------------------------------------

struct EckartRun {
    self_check: f64,
    n_points: usize,
    frac_within: f64,
    total_shots: u64,
    k_sampled: f64,
    k_stderr: f64,
    k_oracle: f64,
    spread_sampled: f64,
    spread_oracle: f64,
}

/// `Σ_{nm} e^{−β(E_n+E_m)/2} (E_n−E_m)² O_nm² cos((E_n−E_m)t)` and `Q_r`.
fn eigen_sum(energies: &[f64], vecs: &[Vec<f64>], h: &[u8], beta: f64, t: &[f64]) -> (Vec<f64>, f64) {
    let n = energies.len();
    let o = DMatrix::from_fn(n, n, |a, b| (0..h.len()).filter(|&j| h[j] == 1).map(|j| vecs[a][j] * vecs[b][j]).sum::<f64>());
    let cf = t
        .iter()
        .map(|&ti| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let w = energies[a] - energies[b];
                    s += (-0.5 * beta * (energies[a] + energies[b])).exp() * w * w * o[(a, b)].powi(2) * (w * ti).cos();
                }
            }
            s
        })
        .collect();
    let qr = (0..n)
        .map(|a| (-beta * energies[a]).exp() * (0..h.len()).filter(|&j| h[j] == 0).map(|j| vecs[a][j].powi(2)).sum::<f64>())
        .sum();
    (cf, qr)
}

fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2).zip(y.windows(2)).map(|(t, y)| 0.5 * (y[0] + y[1]) * (t[1] - t[0])).sum()
}

fn spread(t: &[f64], y: &[f64]) -> f64 {
    let at = |x: f64| {
        let i = t.partition_point(|&s| s < x).clamp(1, t.len() - 1);
        let f = (x - t[i - 1]) / (t[i] - t[i - 1]);
        y[i - 1] + f * (y[i] - y[i - 1])
    };
    let tm = *t.last().unwrap();
    let v = [at(0.5 * tm), at(0.75 * tm), at(tm)];
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    (hi - lo) / v[2].abs()
}

fn eckart_run() -> Res<EckartRun> {
    let p = prepare("eckart.json", Mode::Rate)?;
    let params = p.rate.ok_or("thermal section missing")?;
    let surface = p.surface.as_ref().ok_or("surface missing")?;
    let init = p.initial.as_ref().ok_or("initial state missing")?;
    let pointer = p.pointer.ok_or("pointer missing")?;
    let window = LevelWindow::Populated {
        state: init.clone(),
        min_population: p.config.sampling.min_population,
    };
    let dr = direct_correlation_and_rate(&p.plan, surface, &window, &params)?;

    let e: Vec<f64> = dr.levels.iter().map(|&n| dr.eigensystem.energies()[n]).collect();
    let vecs: Vec<Vec<f64>> = dr
        .levels
        .iter()
        .map(|&n| dr.eigensystem.real_vector(n).ok_or("no real frame"))
        .collect::<std::result::Result<_, _>>()?;
    let t = &dr.rate.t;
    let (cf, qr) = eigen_sum(&e, &vecs, surface.values(), params.beta, t);
    let scale = cf.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let rel = |other: &[f64]| cf.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    let self_check = rel(&dr.rate.cf).max(rel(&dr.trace_cf));
    let k_oracle = trapezoid(t, &cf) / qr;
    let running: Vec<f64> = (0..t.len()).map(|i| trapezoid(&t[..=i], &cf[..=i]) / qr).collect();
    if (k_oracle - dr.rate.k).abs() > 1e-8 * k_oracle.abs() {
        return Err(format!("oracle rate {} differs from the test's {}", dr.rate.k, k_oracle).into());
    }

    let opts = p.pipeline_options(params);
    let sampled = run_sampled_rate(&p.plan, init, surface, &pointer, &opts, p.config.sampling.seed)?;
    let se = sampled.rate.cf_stderr.as_ref().ok_or("no bootstrap errors")?;
    let within = (0..t.len())
        .filter(|&i| (sampled.rate.cf[i] - cf[i]).abs() <= 3.0 * se[i])
        .count();
    Ok(EckartRun {
        self_check,
        n_points: t.len(),
        frac_within: within as f64 / t.len() as f64,
        total_shots: sampled.total_shots,
        k_sampled: sampled.rate.k,
        k_stderr: sampled.rate.k_stderr.unwrap_or(f64::NAN),
        k_oracle,
        spread_sampled: sampled.rate.plateau.spread,
        spread_oracle: spread(t, &running),
    })
}

fn correlation_equivalence(r: &EckartRun) -> (bool, String) {
    (
        r.self_check <= 1e-8 && r.n_points >= 100 && r.frac_within >= 0.95 && r.total_shots <= 100_000,
        format!(
            "trace vs eigen-sum {:.1e} (relative, {} points); sampled within 3σ at {:.0}% of points, {} shots",
            r.self_check,
            r.n_points,
            100.0 * r.frac_within,
            r.total_shots
        ),
    )
}

fn two_level_closed_form() -> Res<f64> {
    // E = 0, 1; off-diagonal surface overlap √c; closed form running
    // integral 2c e^{−β/2} sin t / Q_r with Q_r = 1.
    let (c, beta, t_max): (f64, f64, f64) = (0.3, 1.7, 2.0 * PI);
    let spec = SpectralInput {
        energies: vec![0.0, 1.0],
        overlap: DMatrix::from_row_slice(2, 2, &[0.5, c.sqrt(), c.sqrt(), 0.5]),
        reactant_weights: vec![1.0, 0.0],
        source: SpectrumSource::Oracle,
    };
    let amp = 2.0 * c * (-0.5 * beta).exp();
    let mut worst: f64 = 0.0;
    // continuum closed form on a fine grid
    let fine = rate_constant(&spec, &RateParams::new(beta, t_max, 400_001))?;
    for (t, r) in fine.t.iter().zip(&fine.running) {
        worst = worst.max((r - amp * t.sin()).abs());
    }
    // exact trapezoid sum on a coarse grid: (h/2) cot(h/2) sin t
    let coarse = rate_constant(&spec, &RateParams::new(beta, t_max, 41))?;
    let h = coarse.t[1];
    let g = 0.5 * h / (0.5 * h).tan();
    for (t, r) in coarse.t.iter().zip(&coarse.running) {
        worst = worst.max((r - amp * g * t.sin()).abs());
    }
    Ok(worst)
}

fn end_to_end_rate(r: &EckartRun) -> Res<(bool, String)> {
    let rel = (r.k_sampled - r.k_oracle).abs() / r.k_oracle.abs();
    let closed = two_level_closed_form()?;
    Ok((
        rel <= 0.10 && r.spread_sampled < 0.05 && closed <= 1e-10,
        format!(
            "k sampled {:.4e} ± {:.1e} vs oracle {:.4e} ({:+.1}%); plateau spread sampled {:.3}, oracle {:.3}; two-level {:.1e}",
            r.k_sampled,
            r.k_stderr,
            r.k_oracle,
            100.0 * (r.k_sampled / r.k_oracle - 1.0),
            r.spread_sampled,
            r.spread_oracle,
            closed
        ),
    ))
}

// 8 ------------------------------------------------------------------------

fn project(v: &[C64], psi: &[C64]) -> C64 {
    v.iter().zip(psi).map(|(a, b)| a.conj() * b).sum()
}

fn closure() -> Res<(bool, String)> {
    let mut p = prepare("harmonic.json", Mode::Rate)?;
    let init = p.initial.clone().ok_or("initial state missing")?;
    let eig = step_eigensystem(&p.plan)?;
    let frame = p.plan.half_potential_phases();
    let tables: Vec<Vec<f64>> = (0..eig.len()).map(|n| eig.real_vector(n).ok_or("no real frame")).collect::<std::result::Result<_, _>>()?;
    let xi0: Vec<C64> = (0..eig.len()).map(|n| project(eig.vector(n).amplitudes(), init.amplitudes())).collect();
    let mut worst_oracle: f64 = 0.0;
    let mut psi = init.clone();
    let mut done = 0;
    for steps in [0u64, 1, 7, 50, 400] {
        propagate(&mut psi, &p.plan, steps - done, &mut GateTally::default())?;
        done = steps;
        let xi: Vec<C64> = xi0.iter().zip(&eig.phases).map(|(x, th)| x * C64::from_polar(1.0, th * steps as f64)).collect();
        let rec = reconstruct(&xi, &tables, Some(&frame));
        let err = rec.iter().zip(psi.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        worst_oracle = worst_oracle.max(err);
    }

    // Sampled tables at t = 0: ξ_n is the projection of the known initial
    // state on the sampled vector, so only the amplitude tables are random.
    p.config.sampling.shots_per_setting = 10_000;
    p.config.sampling.pool_sigma = Some(1.0);
    let opts = p.pipeline_options(p.rate.ok_or("thermal section missing")?);
    let pointer = p.pointer.ok_or("pointer missing")?;
    let seed = p.config.sampling.seed;
    let spectrum = estimate_spectrum(&init, &p.plan, &pointer, opts.spectrum_shots, seed, &opts.peaks, &mut GateTally::default())?;
    let amps = estimate_eigenstate_amplitudes(&spectrum, &p.plan, &opts.amplitudes, seed + 1)?;
    let tables_s: Vec<_> = amps.iter().filter_map(|a| a.table.clone()).collect();
    let expand = |vecs: &[Vec<f64>]| -> Vec<C64> {
        let xi: Vec<C64> = vecs
            .iter()
            .map(|r| r.iter().zip(&frame).zip(init.amplitudes()).map(|((a, f), b)| a * f.conj() * b).sum())
            .collect();
        reconstruct(&xi, vecs, Some(&frame))
    };
    let sampled_vecs: Vec<Vec<f64>> = tables_s.iter().map(|t| t.a.clone()).collect();
    let psi_s = expand(&sampled_vecs);

    // oracle truncation to the levels the sampled vectors resolve
    let mut matched: Vec<usize> = sampled_vecs
        .iter()
        .map(|a| {
            (0..eig.len())
                .max_by(|&x, &y| {
                    let o = |n: usize| tables[n].iter().zip(a).map(|(u, v)| u * v).sum::<f64>().abs();
                    o(x).total_cmp(&o(y))
                })
                .unwrap()
        })
        .collect();
    matched.sort_unstable();
    matched.dedup();
    let oracle_vecs: Vec<Vec<f64>> = matched.iter().map(|&n| tables[n].clone()).collect();
    let psi_o = expand(&oracle_vecs);
    let dist = |x: &[C64], y: &[C64]| x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let err = dist(&psi_s, &psi_o);

    let n_boot = 30;
    let mut var = 0.0;
    for b in 0..n_boot {
        let mut vecs = Vec::new();
        for (l, t) in tables_s.iter().enumerate() {
            let model = SignProtocolRecord::model(&t.model_vector(), Some(opts.amplitudes.shots_per_setting))?;
            let rec = model.resample(7000 + (b * 100 + l) as u64);
            let tb = refine_amplitudes(&solve_signs_pooled(&rec, opts.amplitudes.pool_sigma)?, &rec, opts.amplitudes.refine_iterations)?;
            vecs.push(tb.a);
        }
        var += dist(&expand(&vecs), &psi_s).powi(2) / n_boot as f64;
    }
    let sigma = var.sqrt();
    Ok((
        worst_oracle <= 1e-10 && err <= 3.0 * sigma,
        format!(
            "oracle max |Σ ξ a − ψ| = {worst_oracle:.1e} over 5 times; sampled ({} levels) ‖Δψ‖ = {err:.2e} vs bootstrap σ = {sigma:.2e}",
            tables_s.len()
        ),
    ))
}

// 9 ------------------------------------------------------------------------

fn read_artifacts(dir: &Path) -> Res<Vec<(String, Vec<u8>)>> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = fs::read(&path)?;
        if name == "manifest.json" {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes)?;
            let m = v.as_object_mut().ok_or("manifest is not an object")?;
            m.remove("wall_time_s");
            m.remove("workers");
            bytes = serde_json::to_vec(&v)?;
        }
        files.push((name, bytes));
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Res<(bool, String)> {
    let root = tempfile::tempdir()?;
    let mut compared = 0;
    let mut differing = Vec::new();
    for (cfg, mode) in [
        ("harmonic.json", Mode::Propagate),
        ("harmonic.json", Mode::Spectrum),
        ("harmonic.json", Mode::Rate),
        ("double_well.json", Mode::Rate),
    ] {
        let config = load(cfg)?;
        let mut runs = Vec::new();
        for (i, workers) in [1usize, 1, 3].into_iter().enumerate() {
            let out = root.path().join(format!("{cfg}-{mode:?}-{i}"));
            let s = run_config(&config, mode, &out, Some(workers), Instant::now());
            if s.exit_code != 0 {
                return Err(format!("{cfg} {mode:?} exited {}", s.exit_code).into());
            }
            runs.push(read_artifacts(&out)?);
        }
        for other in &runs[1..] {
            compared += runs[0].len();
            if runs[0].len() != other.len() {
                differing.push(format!("{cfg} {mode:?}: file sets differ"));
            }
            for ((n, a), (_, b)) in runs[0].iter().zip(other) {
                if a != b {
                    differing.push(format!("{cfg} {mode:?}: {n}"));
                }
            }
        }
    }
    Ok((
        differing.is_empty(),
        format!(
            "{compared} artifact comparisons over repeated runs and 1 vs 3 workers (manifest without wall time and worker count); differing: {differing:?}"
        ),
    ))
}

// ---------------------------------------------------------------------------

fn report(n: usize, name: &str, limit: Duration, start: Instant, outcome: Res<(bool, String)>) -> bool {
    let secs = start.elapsed();
    let (ok, detail) = match outcome {
        Ok((ok, d)) => (ok && secs < limit, d),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "criterion {n} {name}: {} [{:.1} s of {} s] {detail}",
        if ok { "PASS" } else { "FAIL" },
        secs.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

fn main() {
    let mut all = true;
    let s = Instant::now();
    all &= report(1, "qft", Duration::from_secs(10), s, qft_correctness());
    let s = Instant::now();
    all &= report(2, "split-step", Duration::from_secs(30), s, split_step_equivalence());
    let s = Instant::now();
    all &= report(3, "unitarity", Duration::from_secs(120), s, unitarity_endurance());
    let s = Instant::now();
    all &= report(4, "phase-estimation", Duration::from_secs(300), s, phase_estimation());
    let s = Instant::now();
    all &= report(5, "signs", Duration::from_secs(120), s, sign_extraction());

    let s = Instant::now();
    let run = eckart_run();
    let shared = s.elapsed();
    match run {
        Ok(r) => {
            all &= report(6, "correlation", Duration::from_secs(900), s, Ok(correlation_equivalence(&r)));
            let s7 = Instant::now() - shared;
            all &= report(7, "rate", Duration::from_secs(1200), s7, end_to_end_rate(&r));
        }
        Err(e) => {
            let msg = e.to_string();
            all &= report(6, "correlation", Duration::from_secs(900), s, Err(msg.clone().into()));
            all &= report(7, "rate", Duration::from_secs(1200), s, Err(msg.into()));
        }
    }

    let s = Instant::now();
    all &= report(8, "closure", Duration::from_secs(300), s, closure());
    let s = Instant::now();
    all &= report(9, "determinism", Duration::from_secs(600), s, determinism());

    if !all {
        println!("acceptance: FAILED");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
