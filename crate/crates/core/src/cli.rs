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

//! Batch front end: JSON run configuration in, CSV/JSON artifacts out.
//!
//! Every run writes `manifest.json` to the output directory. Failures also
//! write `error.json`; its `exit_code` matches the process status.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::amplitudes::{reconstruct, AmplitudeOptions};
use crate::error::{FluxError, Result};
use crate::gates::{qft, GateTally, QubitRange};
use crate::oracle::{
    dense_step_unitary, dft_matrix, direct_correlation_and_rate, matrix_of, step_eigensystem, write_eigenvalues_csv,
    write_eigenvectors_csv, EigenSystem, LevelWindow, DENSE_CAP_QUBITS, SELF_CHECK_TOL,
};
use crate::pipeline::{run_sampled_rate, PipelineOptions, ShotAllocation};
use crate::pointer::{estimate_spectrum, pointer_kernel, PeakOptions, PointerConfig, SpectrumEstimate};
use crate::propagator::{
    energy_band, gaussian_wavepacket, load_wavefunction, propagate, required_qubits, split_step, split_step_by_gates,
    PotentialSpec, SplitStepPlan,
};
use crate::qreg::{GridSpec, StateVector, C64};
use crate::rate::{DividingSurface, QrStrategy, RateParams, RateResult, DEFAULT_EPS_B};

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Propagate,
    Spectrum,
    Rate,
    Validate,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Propagate => "propagate",
            Mode::Spectrum => "spectrum",
            Mode::Rate => "rate",
            Mode::Validate => "validate",
        }
    }
}

/// `fluxq <mode> --config path [--seed n] [--workers k] [--out dir]`
#[derive(Debug, Clone, Parser)]
#[command(name = "fluxq", version, about = "Gate-level simulation of a quantum thermal-rate algorithm")]
pub struct CliArgs {
    #[arg(value_enum)]
    pub mode: Mode,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `sampling.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for shot sampling; defaults to the available cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Qubits per degree `l`; derived from `dt` when absent.
    #[serde(default)]
    pub qubits_per_dof: Option<usize>,
    pub dx: Vec<f64>,
    #[serde(default)]
    pub mass: Option<Vec<f64>>,
    /// Derived from the resonance condition when absent.
    #[serde(default)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Gaussian {
        center: Vec<f64>,
        sigma: Vec<f64>,
        #[serde(default)]
        momentum: Option<Vec<f64>>,
    },
    /// Equal amplitude on every grid point.
    Uniform,
    Basis { index: usize },
    Tabulated {
        re: Vec<f64>,
        #[serde(default)]
        im: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    #[serde(default)]
    pub degree: usize,
    /// Products are the points with coordinate at or beyond this value.
    pub threshold: f64,
}

fn default_shots_per_setting() -> u64 {
    1000
}
fn default_min_population() -> f64 {
    0.01
}
fn default_min_level_shots() -> u64 {
    10
}
fn default_refine() -> usize {
    4
}
fn default_suppress() -> usize {
    4
}
fn default_sum_radius() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub spectrum_shots: u64,
    #[serde(default = "default_shots_per_setting")]
    pub shots_per_setting: u64,
    /// Total shots for spectrum plus sign protocol; overrides `shots_per_setting`.
    #[serde(default)]
    pub shot_budget: Option<u64>,
    #[serde(default)]
    pub allocation: ShotAllocation,
    #[serde(default)]
    pub bootstrap: usize,
    /// Smallest histogram weight accepted as a level.
    #[serde(default = "default_min_population")]
    pub min_population: f64,
    #[serde(default = "default_min_level_shots")]
    pub min_level_shots: u64,
    #[serde(default = "default_refine")]
    pub refine_iterations: usize,
    /// Pooled significance for joining weakly linked sign trees.
    #[serde(default)]
    pub pool_sigma: Option<f64>,
    #[serde(default = "default_suppress")]
    pub suppress_radius: usize,
    #[serde(default = "default_sum_radius")]
    pub sum_radius: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        serde_json::from_value(json!({})).expect("all sampling fields have defaults")
    }
}

fn default_eps_b() -> f64 {
    DEFAULT_EPS_B
}
fn default_n_points() -> usize {
    100
}
fn default_plateau_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    #[serde(default)]
    pub beta: Option<f64>,
    /// `k_B T`; used when `beta` is absent.
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_eps_b")]
    pub eps_b: f64,
    #[serde(default)]
    pub t_max: Option<f64>,
    /// `T_max` in units of the time step; used when `t_max` is absent.
    #[serde(default)]
    pub t_max_steps: Option<f64>,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default)]
    pub qr: QrStrategy,
    #[serde(default = "default_plateau_tolerance")]
    pub plateau_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagateConfig {
    pub n_steps: u64,
    /// Steps between density snapshots; defaults to `n_steps`.
    #[serde(default)]
    pub snapshot_every: Option<u64>,
}

fn default_endurance() -> u64 {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    /// Split steps in the norm-preservation check.
    #[serde(default = "default_endurance")]
    pub endurance_steps: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            endurance_steps: default_endurance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must agree with the command-line mode when present.
    #[serde(default)]
    pub mode: Option<Mode>,
    pub grid: GridConfig,
    #[serde(default = "free")]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub initial_state: Option<InitialState>,
    #[serde(default)]
    pub surface: Option<SurfaceConfig>,
    #[serde(default)]
    pub pointer: Option<PointerConfig>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub thermal: Option<ThermalConfig>,
    #[serde(default)]
    pub propagate: Option<PropagateConfig>,
    #[serde(default)]
    pub validate: ValidateConfig,
    /// Rate mode also evaluates the dense-matrix rate for comparison.
    #[serde(default)]
    pub compare_oracle: bool,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

fn free() -> PotentialSpec {
    PotentialSpec::Free
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| FluxError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Quantities derived during validation, echoed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    /// Total qubits `ν = l·M`.
    pub nu: usize,
    pub dofs: usize,
    pub qubits_per_dof: usize,
    /// Hilbert space dimension `N = 2^ν`.
    pub dim: usize,
    pub dt: f64,
    pub pointer_bins: Option<usize>,
    /// Width `2π/(t Δt)` of the unaliased energy branch.
    pub energy_band: Option<f64>,
    /// Energy per pointer bin.
    pub energy_resolution: Option<f64>,
    pub beta: Option<f64>,
    pub t_max: Option<f64>,
    pub warnings: Vec<String>,
}

/// A configuration that passed validation, with everything built.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mode: Mode,
    pub config: RunConfig,
    pub derived: Derived,
    pub plan: SplitStepPlan,
    pub initial: Option<StateVector>,
    pub surface: Option<DividingSurface>,
    pub pointer: Option<PointerConfig>,
    pub rate: Option<RateParams>,
}

impl Prepared {
    fn initial(&self) -> Result<&StateVector> {
        self.initial
            .as_ref()
            .ok_or_else(|| FluxError::Config("initial_state is required".into()))
    }

    fn peak_options(&self) -> PeakOptions {
        PeakOptions {
            min_weight: self.config.sampling.min_population,
            suppress_radius: self.config.sampling.suppress_radius,
            sum_radius: self.config.sampling.sum_radius,
        }
    }
}

fn build_initial(init: &InitialState, grid: &GridSpec) -> Result<StateVector> {
    let nu = grid.total_qubits();
    match init {
        InitialState::Gaussian { center, sigma, momentum } => {
            let p = momentum.clone().unwrap_or_else(|| vec![0.0; grid.dofs()]);
            StateVector::from_amplitudes(gaussian_wavepacket(grid, center, sigma, &p)?)
        }
        InitialState::Uniform => {
            let a = 1.0 / (grid.dim() as f64).sqrt();
            StateVector::from_amplitudes(vec![C64::new(a, 0.0); grid.dim()])
        }
        InitialState::Basis { index } => StateVector::basis(nu, *index),
        InitialState::Tabulated { re, im } => {
            if let Some(im) = im {
                if im.len() != re.len() {
                    return Err(FluxError::Config(format!(
                        "initial_state.re has {} entries but im has {}",
                        re.len(),
                        im.len()
                    )));
                }
            }
            let alpha: Vec<C64> = re
                .iter()
                .enumerate()
                .map(|(j, &r)| C64::new(r, im.as_ref().map_or(0.0, |v| v[j])))
                .collect();
            let mut s = StateVector::new(nu)?;
            load_wavefunction(&mut s, &alpha)?;
            Ok(s)
        }
    }
}

fn build_grid(g: &GridConfig, errs: &mut Vec<FluxError>) -> Option<GridSpec> {
    let mass = g.mass.clone().unwrap_or_else(|| vec![1.0; g.dx.len()]);
    let l = match (g.qubits_per_dof, g.dt) {
        (Some(l), _) => l,
        (None, Some(dt)) => match g.dx.first().zip(mass.first()) {
            Some((&dx, &m)) => match required_qubits(dx, dt, m) {
                Ok(l) => l,
                Err(e) => {
                    errs.push(e);
                    return None;
                }
            },
            None => {
                errs.push(FluxError::Config("grid.dx needs at least one entry".into()));
                return None;
            }
        },
        (None, None) => {
            errs.push(FluxError::Config("grid needs qubits_per_dof or dt".into()));
            return None;
        }
    };
    let dt = match g.dt {
        Some(dt) => dt,
        None => match g.dx.first().zip(mass.first()) {
            Some((&dx, &m)) => crate::qreg::resonant_dt(l, dx, m),
            None => {
                errs.push(FluxError::Config("grid.dx needs at least one entry".into()));
                return None;
            }
        },
    };
    let found = GridSpec::check(l, &g.dx, dt, &mass);
    if found.is_empty() {
        GridSpec::new(l, g.dx.clone(), dt, mass).ok()
    } else {
        errs.extend(found);
        None
    }
}

/// Grid and split-step plan alone, for callers that only propagate.
pub fn build_plan(config: &RunConfig) -> std::result::Result<SplitStepPlan, Vec<FluxError>> {
    let mut errs = Vec::new();
    let grid = build_grid(&config.grid, &mut errs).ok_or(errs)?;
    SplitStepPlan::new(grid, config.potential.clone()).map_err(|e| vec![e])
}

/// Check a configuration for `mode` and build everything it needs.
///
/// All problems are collected rather than stopping at the first.
pub fn validate_config(config: &RunConfig, mode: Mode) -> std::result::Result<Prepared, Vec<FluxError>> {
    let mut errs = Vec::new();
    let mut warnings = Vec::new();
    if let Some(m) = config.mode {
        if m != mode {
            errs.push(FluxError::Config(format!(
                "config is for mode {} but {} was requested",
                m.name(),
                mode.name()
            )));
        }
    }
    let grid = build_grid(&config.grid, &mut errs);
    let plan = grid.as_ref().and_then(|g| match SplitStepPlan::new(g.clone(), config.potential.clone()) {
        Ok(p) => Some(p),
        Err(e) => {
            errs.push(e);
            None
        }
    });
    let initial = match (&config.initial_state, &grid) {
        (Some(init), Some(g)) => match build_initial(init, g) {
            Ok(s) => Some(s),
            Err(e) => {
                errs.push(e);
                None
            }
        },
        _ => None,
    };
    if config.initial_state.is_none() && mode != Mode::Validate {
        errs.push(FluxError::Config(format!("mode {} needs initial_state", mode.name())));
    }
    let surface = match (&config.surface, &grid) {
        (Some(s), Some(g)) => match DividingSurface::half_space(g, s.degree, s.threshold) {
            Ok(d) => Some(d),
            Err(e) => {
                errs.push(e);
                None
            }
        },
        _ => None,
    };
    let pointer = config.pointer.and_then(|p| match p.check() {
        Ok(()) => Some(p),
        Err(e) => {
            errs.push(e);
            None
        }
    });

    let s = &config.sampling;
    if !(s.min_population > 0.0 && s.min_population < 1.0) {
        errs.push(FluxError::Config(format!(
            "sampling.min_population must lie in (0, 1), got {}",
            s.min_population
        )));
    }
    let needs_pointer = matches!(mode, Mode::Spectrum | Mode::Rate);
    if needs_pointer {
        if config.pointer.is_none() {
            errs.push(FluxError::Config(format!("mode {} needs a pointer section", mode.name())));
        }
        if s.spectrum_shots == 0 {
            errs.push(FluxError::Config("sampling.spectrum_shots must be positive".into()));
        }
    }

    let mut beta = None;
    let mut t_max = None;
    if let Some(th) = &config.thermal {
        beta = match (th.beta, th.temperature) {
            (Some(b), _) => Some(b),
            (None, Some(t)) if t > 0.0 => Some(1.0 / t),
            (None, Some(t)) => {
                errs.push(FluxError::Config(format!("thermal.temperature must be positive, got {t}")));
                None
            }
            (None, None) => None,
        };
        if let Some(b) = beta {
            if !(b > 0.0) || !b.is_finite() {
                errs.push(FluxError::Config(format!("thermal.beta must be positive, got {b}")));
            }
        }
        t_max = th.t_max.or_else(|| th.t_max_steps.zip(grid.as_ref()).map(|(n, g)| n * g.dt()));
        if th.n_points < 2 {
            errs.push(FluxError::Config("thermal.n_points must be at least 2".into()));
        }
        if !(th.eps_b > 0.0 && th.eps_b < 1.0) {
            errs.push(FluxError::Config(format!("thermal.eps_b must lie in (0, 1), got {}", th.eps_b)));
        }
    }
    if mode == Mode::Rate {
        match &config.thermal {
            None => errs.push(FluxError::Config("rate mode needs a thermal section with beta or temperature".into())),
            Some(_) => {
                if beta.is_none() {
                    errs.push(FluxError::Config("rate mode needs thermal.beta or thermal.temperature".into()));
                }
                if t_max.is_none() {
                    errs.push(FluxError::Config("rate mode needs thermal.t_max or thermal.t_max_steps".into()));
                }
            }
        }
        if config.surface.is_none() {
            errs.push(FluxError::Config("rate mode needs a surface section".into()));
        }
        if s.shot_budget.is_none() && s.shots_per_setting == 0 {
            errs.push(FluxError::Config("sampling.shots_per_setting must be positive".into()));
        }
        if let Some(b) = s.shot_budget {
            if b <= s.spectrum_shots {
                errs.push(FluxError::Config(format!(
                    "sampling.shot_budget {b} leaves nothing after {} spectrum shots",
                    s.spectrum_shots
                )));
            }
        }
    }
    if let Some(t) = t_max {
        if !(t > 0.0) {
            errs.push(FluxError::Config(format!("T_max must be positive, got {t}")));
        }
    }
    if mode == Mode::Propagate {
        match config.propagate {
            None => errs.push(FluxError::Config("propagate mode needs a propagate section".into())),
            Some(p) => {
                if p.snapshot_every == Some(0) {
                    errs.push(FluxError::Config("propagate.snapshot_every must be positive".into()));
                }
            }
        }
    }
    if let Some(g) = &grid {
        if mode == Mode::Validate && g.total_qubits() > DENSE_CAP_QUBITS {
            errs.push(FluxError::ResourceCap(format!(
                "validate builds dense {0}×{0} matrices; {1} qubits exceed the cap of {DENSE_CAP_QUBITS}",
                g.dim(),
                g.total_qubits()
            )));
        }
        if mode == Mode::Rate && config.compare_oracle && g.total_qubits() > DENSE_CAP_QUBITS {
            errs.push(FluxError::ResourceCap(format!(
                "compare_oracle needs a dense step matrix; {} qubits exceed the cap of {DENSE_CAP_QUBITS}",
                g.total_qubits()
            )));
        }
    }

    let band = pointer.zip(grid.as_ref()).map(|(p, g)| energy_band(g.dt(), p.t_units));
    if let (Some(band), Some(b)) = (band, beta) {
        // Levels one full band apart must not both carry Boltzmann weight.
        let cutoff = -config.thermal.map_or(DEFAULT_EPS_B, |t| t.eps_b).ln();
        if b * band < cutoff {
            let w = format!(
                "β·band = {:.3} < ln(1/ε_B) = {cutoff:.3}: Boltzmann factors do not vanish across one \
                 quasi-energy branch, aliased levels may be weighted wrongly",
                b * band
            );
            warnings.push(w);
        }
    }

    if !errs.is_empty() {
        return Err(errs);
    }
    let grid = grid.expect("grid is valid when no errors were found");
    let plan = plan.expect("plan is valid when no errors were found");
    let derived = Derived {
        nu: grid.total_qubits(),
        dofs: grid.dofs(),
        qubits_per_dof: grid.qubits_per_dof(),
        dim: grid.dim(),
        dt: grid.dt(),
        pointer_bins: pointer.map(|p| p.n_values()),
        energy_band: band,
        energy_resolution: band.zip(pointer).map(|(b, p)| b / p.n_values() as f64),
        beta,
        t_max,
        warnings,
    };
    let rate = config.thermal.and_then(|th| {
        Some(RateParams {
            beta: beta?,
            t_max: t_max?,
            n_points: th.n_points,
            eps_b: th.eps_b,
            qr: th.qr,
            plateau_tolerance: th.plateau_tolerance,
        })
    });
    Ok(Prepared {
        mode,
        config: config.clone(),
        derived,
        plan,
        initial,
        surface,
        pointer,
        rate,
    })
}

/// What a successful or failed run left behind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub exit_code: i32,
    pub artifacts: Vec<String>,
    pub errors: Vec<ErrorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl From<&FluxError> for ErrorRecord {
    fn from(e: &FluxError) -> Self {
        ErrorRecord {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

/// Highest-priority exit code among a set of errors: resource caps win over
/// configuration errors, which win over validation failures.
pub fn exit_code_for(errs: &[FluxError]) -> i32 {
    let codes: Vec<i32> = errs.iter().map(|e| e.exit_code()).collect();
    if codes.contains(&4) {
        4
    } else if codes.contains(&2) {
        2
    } else if codes.is_empty() {
        0
    } else {
        3
    }
}

struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(p, text)?;
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
        let p = self.path(name);
        let mut f = std::io::BufWriter::new(fs::File::create(p)?);
        writeln!(f, "{header}")?;
        for r in rows {
            writeln!(f, "{r}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Run a mode from already-parsed arguments; returns the process exit code.
pub fn run(args: &CliArgs) -> i32 {
    let start = Instant::now();
    let loaded = RunConfig::load(&args.config);
    let out_dir = args
        .out
        .clone()
        .or_else(|| loaded.as_ref().ok().and_then(|c| c.output.as_ref().map(|o| o.dir.clone())))
        .unwrap_or_else(|| PathBuf::from("out"));
    let summary = match loaded {
        Ok(mut config) => {
            if let Some(seed) = args.seed {
                config.sampling.seed = seed;
            }
            config.output = Some(OutputConfig { dir: out_dir.clone() });
            run_config(&config, args.mode, &out_dir, args.workers, start)
        }
        Err(e) => {
            log::error!("{e}");
            let errs = vec![e];
            finish_with_errors(&out_dir, args.mode, None, None, Vec::new(), &errs, args.workers, start)
        }
    };
    summary.exit_code
}

#[allow(clippy::too_many_arguments)]
fn finish_with_errors(
    out: &Path,
    mode: Mode,
    config: Option<&RunConfig>,
    derived: Option<&Derived>,
    artifacts: Vec<String>,
    errs: &[FluxError],
    workers: Option<usize>,
    start: Instant,
) -> RunSummary {
    let code = exit_code_for(errs);
    let records: Vec<ErrorRecord> = errs.iter().map(ErrorRecord::from).collect();
    for e in errs {
        log::error!("{e}");
    }
    let body = json!({ "status": "error", "mode": mode.name(), "exit_code": code, "errors": records });
    let mut names = artifacts;
    if fs::create_dir_all(out).is_ok() {
        let mut a = Artifacts {
            dir: out.to_path_buf(),
            names: Vec::new(),
        };
        if a.json("error.json", &body).is_ok() {
            names.extend(a.names);
        }
        let _ = write_manifest(out, mode, config, derived, &names, code, workers, start);
    }
    eprintln!("{body}");
    RunSummary {
        exit_code: code,
        artifacts: names,
        errors: records,
    }
}

#[allow(clippy::too_many_arguments)]
fn write_manifest(
    out: &Path,
    mode: Mode,
    config: Option<&RunConfig>,
    derived: Option<&Derived>,
    artifacts: &[String],
    exit_code: i32,
    workers: Option<usize>,
    start: Instant,
) -> Result<()> {
    let manifest = json!({
        "tool": "fluxq",
        "versions": {
            "fluxq": env!("CARGO_PKG_VERSION"),
            "manifest_format": MANIFEST_FORMAT,
        },
        "mode": mode.name(),
        "seed": config.map(|c| c.sampling.seed),
        "workers": workers.unwrap_or_else(rayon::current_num_threads),
        "config": config,
        "derived": derived,
        "artifacts": artifacts,
        "exit_code": exit_code,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text)?;
    Ok(())
}

/// Validate, execute and write artifacts for one configuration.
pub fn run_config(config: &RunConfig, mode: Mode, out: &Path, workers: Option<usize>, start: Instant) -> RunSummary {
    let prepared = match validate_config(config, mode) {
        Ok(p) => p,
        Err(errs) => return finish_with_errors(out, mode, Some(config), None, Vec::new(), &errs, workers, start),
    };
    for w in &prepared.derived.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "{}: ν = {}, N = {}, dt = {:.6e}",
        mode.name(),
        prepared.derived.nu,
        prepared.derived.dim,
        prepared.derived.dt
    );
    if let Err(e) = fs::create_dir_all(out) {
        let errs = vec![FluxError::Io(e)];
        return finish_with_errors(out, mode, Some(config), Some(&prepared.derived), Vec::new(), &errs, workers, start);
    }
    let mut artifacts = Artifacts {
        dir: out.to_path_buf(),
        names: Vec::new(),
    };
    let outcome = match workers {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
            Ok(pool) => pool.install(|| execute(&prepared, &mut artifacts)),
            Err(e) => Err(FluxError::ResourceCap(format!("cannot start {k} workers: {e}"))),
        },
        None => execute(&prepared, &mut artifacts),
    };
    match outcome {
        Ok(()) => {
            let code = 0;
            if let Err(e) = write_manifest(
                out,
                mode,
                Some(config),
                Some(&prepared.derived),
                &artifacts.names,
                code,
                workers,
                start,
            ) {
                return finish_with_errors(out, mode, Some(config), Some(&prepared.derived), artifacts.names, &[e], workers, start);
            }
            log::info!("done in {:.2} s; artifacts in {}", start.elapsed().as_secs_f64(), out.display());
            RunSummary {
                exit_code: code,
                artifacts: artifacts.names,
                errors: Vec::new(),
            }
        }
        Err(e) => finish_with_errors(out, mode, Some(config), Some(&prepared.derived), artifacts.names, &[e], workers, start),
    }
}

fn execute(p: &Prepared, a: &mut Artifacts) -> Result<()> {
    match p.mode {
        Mode::Propagate => run_propagate(p, a),
        Mode::Spectrum => run_spectrum(p, a).map(|_| ()),
        Mode::Rate => run_rate(p, a),
        Mode::Validate => run_validate(p, a),
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

fn run_propagate(p: &Prepared, a: &mut Artifacts) -> Result<()> {
    let cfg = p.config.propagate.expect("checked during validation");
    let every = cfg.snapshot_every.unwrap_or(cfg.n_steps.max(1));
    let mut state = p.initial()?.clone();
    let dt = p.plan.grid().dt();
    let mut tally = GateTally::default();
    let mut snapshots = vec![(0u64, state.probabilities())];
    let mut norms = vec![(0u64, state.norm_sqr())];
    let mut done = 0;
    while done < cfg.n_steps {
        let n = every.min(cfg.n_steps - done);
        propagate(&mut state, &p.plan, n, &mut tally)?;
        done += n;
        snapshots.push((done, state.probabilities()));
        norms.push((done, state.norm_sqr()));
        log::debug!("step {done}/{}", cfg.n_steps);
    }
    a.csv(
        "density.csv",
        "step,t,index,probability",
        snapshots.iter().flat_map(|(s, probs)| {
            let t = *s as f64 * dt;
            probs.iter().enumerate().map(move |(j, pr)| format!("{s},{},{j},{}", fmt(t), fmt(*pr)))
        }),
    )?;
    let worst = norms.iter().map(|(_, n)| (n - 1.0).abs()).fold(0.0, f64::max);
    a.json(
        "propagate.json",
        &json!({
            "n_steps": cfg.n_steps,
            "snapshot_every": every,
            "dt": dt,
            "norms": norms.iter().map(|(s, n)| json!({"step": s, "norm_sqr": n})).collect::<Vec<_>>(),
            "max_norm_deviation": worst,
            "tally": tally,
        }),
    )?;
    Ok(())
}

fn write_histogram(spectrum: &SpectrumEstimate, a: &mut Artifacts) -> Result<()> {
    a.csv(
        "histogram.csv",
        "bin,phase,energy,weight,shots",
        spectrum
            .bins
            .iter()
            .map(|b| format!("{},{},{},{},{}", b.bin, fmt(b.phase), fmt(b.energy), fmt(b.weight), b.shots)),
    )
}

fn run_spectrum(p: &Prepared, a: &mut Artifacts) -> Result<SpectrumEstimate> {
    let mut tally = GateTally::default();
    let spectrum = estimate_spectrum(
        p.initial()?,
        &p.plan,
        &p.pointer.expect("checked during validation"),
        p.config.sampling.spectrum_shots,
        p.config.sampling.seed,
        &p.peak_options(),
        &mut tally,
    )?;
    log::info!("{} levels detected", spectrum.levels.len());
    a.json("spectrum.json", &json!({ "spectrum": spectrum, "tally": tally }))?;
    write_histogram(&spectrum, a)?;
    Ok(spectrum)
}

impl Prepared {
    /// Options for [`run_sampled_rate`] drawn from the sampling section.
    pub fn pipeline_options(&self, rate: RateParams) -> PipelineOptions {
        pipeline_options(self, rate)
    }
}

fn pipeline_options(p: &Prepared, rate: RateParams) -> PipelineOptions {
    let s = &p.config.sampling;
    PipelineOptions {
        spectrum_shots: s.spectrum_shots,
        amplitudes: AmplitudeOptions {
            shots_per_setting: s.shots_per_setting,
            min_level_shots: s.min_level_shots,
            refine_iterations: s.refine_iterations,
            pool_sigma: s.pool_sigma,
        },
        shot_budget: s.shot_budget,
        allocation: s.allocation,
        peaks: p.peak_options(),
        bootstrap: s.bootstrap,
        rate,
    }
}

fn write_cf(rate: &RateResult, name: &str, a: &mut Artifacts) -> Result<()> {
    a.csv(
        name,
        "t,C_f,stderr",
        rate.t.iter().enumerate().map(|(i, t)| {
            let se = rate.cf_stderr.as_ref().map_or(String::new(), |s| fmt(s[i]));
            format!("{},{},{se}", fmt(*t), fmt(rate.cf[i]))
        }),
    )
}

fn run_rate(p: &Prepared, a: &mut Artifacts) -> Result<()> {
    let params = p.rate.expect("checked during validation");
    let surface = p.surface.as_ref().expect("checked during validation");
    let pointer = p.pointer.expect("checked during validation");
    let result = run_sampled_rate(
        &p.plan,
        p.initial()?,
        surface,
        &pointer,
        &pipeline_options(p, params),
        p.config.sampling.seed,
    )?;
    if !result.rate.plateau.converged {
        log::warn!(
            "running integral has not reached a plateau: spread {:.3} > {:.3}",
            result.rate.plateau.spread,
            params.plateau_tolerance
        );
    }
    log::info!(
        "k = {:.6e}{} from {} levels, {} shots",
        result.rate.k,
        result.rate.k_stderr.map_or(String::new(), |s| format!(" ± {s:.2e}")),
        result.input.len(),
        result.total_shots
    );
    let oracle = if p.config.compare_oracle {
        let window = LevelWindow::Populated {
            state: p.initial()?.clone(),
            min_population: p.config.sampling.min_population,
        };
        let d = direct_correlation_and_rate(&p.plan, surface, &window, &params)?;
        write_cf(&d.rate, "cf_oracle.csv", a)?;
        Some(json!({
            "k": d.rate.k,
            "plateau": d.rate.plateau,
            "n_levels": d.levels.len(),
            "trace_deviation": d.max_relative_deviation,
            "relative_error": result.rate.k / d.rate.k - 1.0,
        }))
    } else {
        None
    };
    let levels: Vec<Value> = result
        .amplitudes
        .iter()
        .map(|la| {
            let lv = &result.spectrum.levels[la.level];
            json!({
                "bin": lv.bin,
                "energy": lv.energy,
                "weight": lv.weight,
                "shots_per_setting": result.shots_per_setting[la.level],
                "used": la.table.is_some(),
                "low_statistics": la.low_statistics,
                "undetermined_signs": la.table.as_ref().map(|t| t.n_undetermined()),
            })
        })
        .collect();
    a.json(
        "rate.json",
        &json!({
            "rate": result.rate,
            "levels": levels,
            "total_shots": result.total_shots,
            "expected_preparations": result.expected_preparations,
            "bootstrap_failures": result.bootstrap_failures,
            "tally": result.tally,
            "oracle": oracle,
        }),
    )?;
    write_cf(&result.rate, "cf.csv", a)?;
    write_histogram(&result.spectrum, a)?;
    Ok(())
}

/// One entry of the validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` when the check does not apply to this configuration.
    pub passed: Option<bool>,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64, detail: String) -> Check {
        Check {
            name: name.into(),
            passed: Some(value <= tolerance),
            value,
            tolerance,
            detail,
        }
    }

    fn skipped(name: &str, why: &str) -> Check {
        Check {
            name: name.into(),
            passed: None,
            value: f64::NAN,
            tolerance: f64::NAN,
            detail: why.into(),
        }
    }
}

/// Gate-assembled QFT against the DFT matrix on `n` qubits, plus gate counts.
pub fn check_qft(n: usize) -> Result<Check> {
    let mut tally = GateTally::default();
    let m = matrix_of(n, |s| {
        let mut t = GateTally::default();
        qft(s, QubitRange::all(n), &mut t)?;
        if tally.n_single == 0 {
            tally = t;
        }
        Ok(())
    })?;
    let dist = m.distance(&dft_matrix(1 << n));
    let counts_ok = tally.n_two as usize == n * (n - 1) / 2 && tally.n_single as usize == n;
    let mut c = Check::new(
        "qft_matches_dft",
        dist,
        1e-10,
        format!("{n} qubits: {} Hadamards, {} controlled phases", tally.n_single, tally.n_two),
    );
    c.passed = Some(dist <= 1e-10 && counts_ok);
    Ok(c)
}

/// Largest `|E_peak − E_n|` in bins, over oracle levels above `min_population`,
/// and largest window-weight deviation in binomial standard deviations.
pub fn check_phase_estimation(
    eig: &EigenSystem,
    initial: &StateVector,
    spectrum: &SpectrumEstimate,
    cfg: &PointerConfig,
    opts: &PeakOptions,
    min_population: f64,
) -> (Check, Check) {
    let pops = eig.populations(initial);
    let res = cfg.resolution();
    let s = spectrum.n_shots as f64;
    let mut worst_bins: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    let mut missing = Vec::new();
    for (n, &pop) in pops.iter().enumerate() {
        if pop < min_population {
            continue;
        }
        let target = (cfg.t_units as f64 * eig.phases[n]).rem_euclid(2.0 * PI);
        let nearest = spectrum
            .levels
            .iter()
            .map(|l| {
                let d = (l.phase - target).rem_euclid(2.0 * PI);
                (d.min(2.0 * PI - d) / res, l)
            })
            .min_by(|x, y| x.0.total_cmp(&y.0));
        let Some((bins, level)) = nearest else {
            missing.push(n);
            continue;
        };
        worst_bins = worst_bins.max(bins);
        let p = cfg.n_values() as isize;
        let r = opts.sum_radius as isize;
        let expected: f64 = (-r..=r)
            .map(|o| {
                let x = (level.bin as isize + o).rem_euclid(p) as usize;
                pops.iter()
                    .enumerate()
                    .map(|(m, &q)| q * pointer_kernel(eig.phases[m], x, cfg).norm_sqr())
                    .sum::<f64>()
            })
            .sum();
        let sigma = (expected * (1.0 - expected) / s).sqrt();
        let z = if sigma > 0.0 { (level.weight - expected).abs() / sigma } else { 0.0 };
        worst_sigma = worst_sigma.max(z);
    }
    let mut a = Check::new(
        "peak_phases_within_two_bins",
        worst_bins,
        2.0,
        format!("levels with population ≥ {min_population}; missing: {missing:?}"),
    );
    if !missing.is_empty() {
        a.passed = Some(false);
    }
    let b = Check::new(
        "peak_weights_within_3_sigma",
        worst_sigma,
        3.0,
        "window weight against the pointer kernel summed over oracle populations".into(),
    );
    (a, b)
}

fn run_validate(p: &Prepared, a: &mut Artifacts) -> Result<()> {
    let nu = p.derived.nu;
    let mut checks = Vec::new();
    log::info!("checking QFT and split step against dense matrices");
    checks.push(check_qft(p.derived.qubits_per_dof.min(8))?);

    let dense = dense_step_unitary(&p.plan)?;
    let by_gates = matrix_of(nu, |s| split_step_by_gates(s, &p.plan, &mut GateTally::default()))?;
    checks.push(Check::new(
        "gate_split_step_matches_dense",
        by_gates.distance_up_to_phase(&dense),
        1e-10,
        "largest entry difference after global-phase alignment".into(),
    ));
    let fast = matrix_of(nu, |s| split_step(s, &p.plan, &mut GateTally::default()))?;
    checks.push(Check::new(
        "split_step_matches_dense",
        fast.distance_up_to_phase(&dense),
        1e-10,
        "largest entry difference after global-phase alignment".into(),
    ));

    let steps = p.config.validate.endurance_steps;
    let probe = match &p.initial {
        Some(s) => s.clone(),
        None => StateVector::basis(nu, 0)?,
    };
    let mut s = probe.clone();
    propagate(&mut s, &p.plan, steps, &mut GateTally::default())?;
    checks.push(Check::new(
        "norm_preserved",
        (s.norm_sqr() - 1.0).abs(),
        1e-9,
        format!("{steps} split steps"),
    ));

    log::info!("diagonalising the step unitary");
    let eig = step_eigensystem(&p.plan)?;
    checks.push(Check::new(
        "eigen_residual",
        eig.residual(&dense).max(eig.orthonormality_error()),
        1e-9,
        "max of |Uv − e^{iθ}v| and |V†V − I|".into(),
    ));
    match (&eig.real_vectors, &eig.frame) {
        (Some(r), frame) => {
            let xi = eig.coefficients(&probe);
            let tables: Vec<Vec<f64>> = (0..eig.len()).map(|n| r.column(n).iter().cloned().collect()).collect();
            let psi = reconstruct(&xi, &tables, frame.as_deref());
            let err = psi
                .iter()
                .zip(probe.amplitudes())
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            checks.push(Check::new(
                "expansion_closure",
                err,
                1e-10,
                "Σ_n ξ_n a_j(n) against ψ_j".into(),
            ));
        }
        (None, _) => checks.push(Check::skipped("expansion_closure", "no real eigenvector frame")),
    }

    match (&p.pointer, &p.initial) {
        (Some(cfg), Some(init)) if p.config.sampling.spectrum_shots > 0 => {
            log::info!("phase estimation with {} shots", p.config.sampling.spectrum_shots);
            let opts = p.peak_options();
            let spectrum = estimate_spectrum(
                init,
                &p.plan,
                cfg,
                p.config.sampling.spectrum_shots,
                p.config.sampling.seed,
                &opts,
                &mut GateTally::default(),
            )?;
            let (x, y) = check_phase_estimation(&eig, init, &spectrum, cfg, &opts, p.config.sampling.min_population);
            checks.push(x);
            checks.push(y);
        }
        _ => checks.push(Check::skipped(
            "phase_estimation",
            "needs pointer, initial_state and sampling.spectrum_shots",
        )),
    }

    let mut levels = Vec::new();
    match (&p.surface, &p.rate) {
        (Some(surface), Some(params)) => {
            let window = match &p.initial {
                Some(init) => LevelWindow::Populated {
                    state: init.clone(),
                    min_population: p.config.sampling.min_population,
                },
                None => LevelWindow::All,
            };
            match direct_correlation_and_rate(&p.plan, surface, &window, params) {
                Ok(d) => {
                    checks.push(Check::new(
                        "correlation_trace_matches_eigen_sum",
                        d.max_relative_deviation,
                        SELF_CHECK_TOL,
                        format!("{} levels, {} time points", d.levels.len(), d.rate.t.len()),
                    ));
                    levels = d.levels.clone();
                    write_cf(&d.rate, "cf_oracle.csv", a)?;
                }
                Err(FluxError::Validation(m)) => checks.push(Check {
                    name: "correlation_trace_matches_eigen_sum".into(),
                    passed: Some(false),
                    value: f64::NAN,
                    tolerance: SELF_CHECK_TOL,
                    detail: m,
                }),
                Err(e) => return Err(e),
            }
        }
        _ => checks.push(Check::skipped(
            "correlation_trace_matches_eigen_sum",
            "needs surface and thermal sections",
        )),
    }

    write_eigenvalues_csv(&eig, &a.path("eigenvalues.csv"))?;
    if eig.real_vectors.is_some() {
        if levels.is_empty() {
            levels = (0..eig.len()).collect();
        }
        write_eigenvectors_csv(&eig, &levels, &a.path("eigenvectors.csv"))?;
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.passed == Some(false))
        .map(|c| c.name.as_str())
        .collect();
    for c in &checks {
        let status = match c.passed {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "skip",
        };
        log::info!("{status:4} {} = {:.3e} (tolerance {:.1e})", c.name, c.value, c.tolerance);
    }
    a.json(
        "validate.json",
        &json!({ "passed": failed.is_empty(), "checks": checks }),
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(FluxError::Validation(format!("failed checks: {}", failed.join(", "))))
    }
}
