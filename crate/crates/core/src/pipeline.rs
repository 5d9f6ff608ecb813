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

//! The sampled route end to end: spectrum from the pointer, signed amplitudes
//! from the Hadamard protocol, then correlation function and rate, with
//! bootstrap standard errors.

use serde::{Deserialize, Serialize};

use crate::amplitudes::{
    estimate_amplitudes_with_allocation, refine_amplitudes, solve_signs_pooled, AmplitudeOptions, LevelAmplitudes,
    SignProtocolRecord,
};
use crate::error::{FluxError, Result};
use crate::gates::GateTally;
use crate::pointer::{estimate_spectrum, refine_peak, PeakOptions, PointerConfig, SpectrumEstimate};
use crate::propagator::SplitStepPlan;
use crate::qreg::StateVector;
use crate::rate::{
    correlation_function, partition_function, rate_constant, retained_levels, running_integral, DividingSurface, QrStrategy, RateParams,
    RateResult, SpectralInput, SpectrumSource,
};
use crate::sampling::{child_seed, resample_counts};

/// How sign-protocol shots are shared between levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShotAllocation {
    /// Every level gets the same shots per setting.
    #[default]
    Uniform,
    /// Shots proportional to `e^{−β(E_n − E_0)/2}`, the weight with which a
    /// level's amplitudes enter the correlation function, but at least
    /// `min_per_setting`. Levels outside the Boltzmann window get none.
    Boltzmann { min_per_setting: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub spectrum_shots: u64,
    pub amplitudes: AmplitudeOptions,
    /// When set, shots per sign setting are derived from this total after the
    /// spectrum run: `(budget − spectrum_shots) / (levels · (ν + 1))`.
    #[serde(default)]
    pub shot_budget: Option<u64>,
    #[serde(default)]
    pub allocation: ShotAllocation,
    pub peaks: PeakOptions,
    /// Bootstrap replicates for standard errors; 0 disables them.
    pub bootstrap: usize,
    pub rate: RateParams,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub spectrum: SpectrumEstimate,
    pub amplitudes: Vec<LevelAmplitudes>,
    pub input: SpectralInput,
    pub rate: RateResult,
    /// Sign-protocol shots per setting for each spectral level.
    pub shots_per_setting: Vec<u64>,
    /// Spectrum shots plus every recorded sign-protocol shot.
    pub total_shots: u64,
    /// Expected preparations including post-selection on energy bins.
    pub expected_preparations: f64,
    /// Replicates dropped because their sign data became inconsistent.
    pub bootstrap_failures: usize,
    pub tally: GateTally,
}

struct Usable {
    bins: Vec<usize>,
    energies: Vec<f64>,
    amps: Vec<Vec<f64>>,
    models: Vec<SignProtocolRecord>,
}

fn usable_levels(spectrum: &SpectrumEstimate, amps: &[LevelAmplitudes], shots: &[u64]) -> Result<Usable> {
    let mut u = Usable {
        bins: Vec::new(),
        energies: Vec::new(),
        amps: Vec::new(),
        models: Vec::new(),
    };
    for la in amps {
        if let Some(t) = &la.table {
            u.bins.push(la.bin);
            u.energies.push(spectrum.levels[la.level].energy);
            u.amps.push(t.a.clone());
            u.models.push(SignProtocolRecord::model(&t.model_vector(), Some(shots[la.level]))?);
        }
    }
    Ok(u)
}

/// Spectrum, amplitudes and rate from sampled measurements.
pub fn run_sampled_rate(
    plan: &SplitStepPlan,
    initial: &StateVector,
    surface: &DividingSurface,
    pointer: &PointerConfig,
    opts: &PipelineOptions,
    seed: u64,
) -> Result<PipelineResult> {
    let mut tally = GateTally::default();
    let spectrum = estimate_spectrum(
        initial,
        plan,
        pointer,
        opts.spectrum_shots,
        child_seed(seed, 1),
        &opts.peaks,
        &mut tally,
    )?;
    log::info!("spectrum: {} levels from {} shots", spectrum.levels.len(), spectrum.n_shots);
    if spectrum.levels.is_empty() {
        return Err(FluxError::EmptySpectrum("no histogram peak passed the weight threshold".into()));
    }
    let settings = plan.grid().total_qubits() as u64 + 1;
    let energies: Vec<f64> = spectrum.levels.iter().map(|l| l.energy).collect();
    let shots = allocate_shots(opts, &energies, settings)?;
    log::info!("sign protocol: shots per setting {:?}", shots);
    let amplitudes =
        estimate_amplitudes_with_allocation(&spectrum, plan, &opts.amplitudes, &shots, child_seed(seed, 2))?;
    let u = usable_levels(&spectrum, &amplitudes, &shots)?;
    if u.energies.is_empty() {
        return Err(FluxError::EmptySpectrum("no level has amplitude data".into()));
    }
    let input = SpectralInput::from_real_amplitudes(u.energies.clone(), &u.amps, surface, SpectrumSource::Sampled)?;
    let mut rate = rate_constant(&input, &opts.rate)?;
    let sign_shots: u64 = amplitudes
        .iter()
        .filter(|a| a.table.is_some())
        .map(|a| settings * shots[a.level])
        .sum();
    let total_shots = opts.spectrum_shots + sign_shots;
    let expected_preparations = opts.spectrum_shots as f64
        + amplitudes
            .iter()
            .filter(|a| a.table.is_some())
            .map(|a| a.postselection_factor * (settings * shots[a.level]) as f64)
            .sum::<f64>();
    rate.shots = Some(total_shots);

    let mut failures = 0;
    if opts.bootstrap > 1 {
        let mut cfs: Vec<Vec<f64>> = Vec::new();
        let mut ks: Vec<f64> = Vec::new();
        for b in 0..opts.bootstrap {
            let bseed = child_seed(seed, 1000 + b as u64);
            match replicate(&spectrum, &u, surface, &opts.rate, &rate.t, bseed, &opts.amplitudes) {
                Ok((cf, k)) => {
                    cfs.push(cf);
                    ks.push(k);
                }
                Err(FluxError::SignInconsistency { .. }) => failures += 1,
                Err(e) => return Err(e),
            }
        }
        if ks.len() > 1 {
            rate.cf_stderr = Some((0..rate.t.len()).map(|i| std_dev(cfs.iter().map(|c| c[i]))).collect());
            rate.k_stderr = Some(std_dev(ks.iter().cloned()));
        }
    }
    Ok(PipelineResult {
        spectrum,
        amplitudes,
        input,
        rate,
        shots_per_setting: shots,
        total_shots,
        expected_preparations,
        bootstrap_failures: failures,
        tally,
    })
}

/// Shots per setting for each level, total within the budget when one is set.
pub fn allocate_shots(opts: &PipelineOptions, energies: &[f64], settings: u64) -> Result<Vec<u64>> {
    let n = energies.len() as u64;
    let available = match opts.shot_budget {
        Some(b) => b.saturating_sub(opts.spectrum_shots) / settings,
        None => opts.amplitudes.shots_per_setting * n,
    };
    let short = |need: u64| {
        FluxError::Config(format!(
            "shot budget leaves {available} shots per setting after {} spectrum shots; {need} are needed",
            opts.spectrum_shots
        ))
    };
    match opts.allocation {
        ShotAllocation::Uniform => {
            let per = available / n.max(1);
            if per == 0 {
                return Err(short(n));
            }
            Ok(vec![per; energies.len()])
        }
        ShotAllocation::Boltzmann { min_per_setting } => {
            let keep = retained_levels(energies, opts.rate.beta, opts.rate.eps_b);
            let floor = min_per_setting.max(1);
            if floor * keep.len() as u64 > available {
                return Err(short(floor * keep.len() as u64));
            }
            let e0 = keep.iter().map(|&i| energies[i]).fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = keep.iter().map(|&i| (-0.5 * opts.rate.beta * (energies[i] - e0)).exp()).collect();
            // Levels whose share falls under the floor are pinned to it and the
            // rest is shared again among the others.
            let mut pinned = vec![false; keep.len()];
            loop {
                let free = available - floor * pinned.iter().filter(|&&p| p).count() as u64;
                let wsum: f64 = w.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(x, _)| x).sum();
                let mut changed = false;
                for (i, x) in w.iter().enumerate() {
                    if !pinned[i] && (free as f64 * x / wsum) < floor as f64 {
                        pinned[i] = true;
                        changed = true;
                    }
                }
                if !changed {
                    let mut out = vec![0; energies.len()];
                    for (i, &lvl) in keep.iter().enumerate() {
                        out[lvl] = if pinned[i] { floor } else { (free as f64 * w[i] / wsum).floor() as u64 };
                    }
                    return Ok(out);
                }
            }
        }
    }
}

fn std_dev<I: Iterator<Item = f64> + Clone>(xs: I) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// One parametric bootstrap replicate: the spectrum histogram is resampled,
/// sign data are redrawn from the fitted amplitudes, and everything downstream
/// is recomputed.
fn replicate(
    spectrum: &SpectrumEstimate,
    u: &Usable,
    surface: &DividingSurface,
    params: &RateParams,
    t: &[f64],
    seed: u64,
    amp: &AmplitudeOptions,
) -> Result<(Vec<f64>, f64)> {
    let counts = resample_counts(&spectrum.histogram, seed, 0);
    let energies: Vec<f64> = u
        .bins
        .iter()
        .map(|&b| spectrum.energy_of_phase(spectrum.phase_of_bin(refine_peak(&counts, b))))
        .collect();
    let mut amps = Vec::with_capacity(u.models.len());
    for (n, m) in u.models.iter().enumerate() {
        let rs = m.resample(child_seed(seed, n as u64 + 1));
        let mut t = solve_signs_pooled(&rs, amp.pool_sigma)?;
        if amp.refine_iterations > 0 {
            t = refine_amplitudes(&t, &rs, amp.refine_iterations)?;
        }
        amps.push(t.a);
    }
    let input = SpectralInput::from_real_amplitudes(energies, &amps, surface, SpectrumSource::Sampled)?;
    let cf = correlation_function(&input, params.beta, t, params.eps_b)?;
    let qr = match params.qr {
        QrStrategy::ReactantProjected => partition_function(&input.energies, &input.reactant_weights, params.beta)?,
        QrStrategy::Fixed { value } => value,
    };
    let k = running_integral(t, &cf).last().copied().unwrap_or(0.0) / qr;
    Ok((cf, k))
}
