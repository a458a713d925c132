//! Synthetic experimental traces: cavity photon number versus aperture
//! position or atom-cavity detuning.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aperture::{point_spread_function, ApertureSampler, BeamModel, Kernel2D, NanoholeArray};
use crate::config::config_hash;
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::modegeom::{peak_coupling, AtomSpecies, CavityParams, ModeGeometry};
use crate::qdynamics::transit::amplitude_at;
use crate::qdynamics::{
    effective_interaction_time, micromaser_steady_state_for, trajectory_ensemble, InjectionModel, PathSampler,
    RabiAngles, SimRng, TrajectoryConfig, TransitProfile, LINEAR_REGIME_LIMIT,
};
use crate::seed::derive_seed;

/// Mirror geometry from which the mode is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorSpec {
    pub mirror_curvature: f64,
    pub mirror_spacing: f64,
    pub wavelength: f64,
}

impl ResonatorSpec {
    pub fn nominal() -> Self {
        Self { mirror_curvature: 0.10, mirror_spacing: 1.09e-3, wavelength: 791.1e-9 }
    }

    pub fn geometry(&self) -> Result<ModeGeometry> {
        ModeGeometry::symmetric(self.mirror_curvature, self.mirror_spacing, self.wavelength)
    }
}

/// Photon-counting noise on the cavity output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub detection_efficiency: f64,
    /// Integration time per scan point; `None` disables noise.
    pub dwell_time: Option<f64>,
    /// Constant additive background in photon-number units.
    pub background: f64,
}

impl NoiseModel {
    pub fn off() -> Self {
        Self { detection_efficiency: 0.1, dwell_time: None, background: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0) {
            return Err(Error::InvalidInput("detection efficiency must lie in (0, 1]".into()));
        }
        if let Some(t) = self.dwell_time {
            ensure_positive(t, "dwell time")?;
        }
        if !(self.background >= 0.0 && self.background.is_finite()) {
            return Err(Error::InvalidInput("background must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Counting standard error of a mean photon number `n` (background
    /// included) measured over the dwell time.
    pub fn stderr(&self, n: f64, kappa: f64) -> f64 {
        match self.dwell_time {
            Some(t) => (n.max(0.0) / (self.detection_efficiency * kappa * t)).sqrt(),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySettings {
    /// Simulated time per trajectory, s.
    pub duration: f64,
    pub ensemble: usize,
    pub max_atoms: usize,
    pub window_half_widths: f64,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self { duration: 1e-3, ensemble: 4, max_atoms: 12, window_half_widths: 3.0 }
    }
}

/// Everything needed to synthesize a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub resonator: ResonatorSpec,
    pub species: AtomSpecies,
    pub cavity: CavityParams,
    /// Vacuum rms amplitude at the mode center, V/m.
    pub vacuum_amplitude: f64,
    pub array: NanoholeArray,
    pub beam: BeamModel,
    pub excited_fraction: f64,
    pub noise: NoiseModel,
    /// PSF cell size, m.
    pub psf_spacing: f64,
    /// Histogram bins for the distribution of transit angles.
    pub angle_bins: usize,
    /// Atom paths summed in a detuning scan.
    pub detuning_paths: usize,
    pub trajectory: TrajectorySettings,
}

impl ExperimentConfig {
    pub fn nominal() -> Self {
        let resonator = ResonatorSpec::nominal();
        Self {
            resonator,
            species: AtomSpecies::barium138(),
            cavity: CavityParams::nominal(),
            vacuum_amplitude: 97.0,
            array: NanoholeArray::nominal(resonator.wavelength),
            beam: BeamModel::nominal(),
            excited_fraction: 1.0,
            noise: NoiseModel::off(),
            psf_spacing: 170e-9 / 8.0,
            angle_bins: 2000,
            detuning_paths: 256,
            trajectory: TrajectorySettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resonator.geometry()?;
        self.species.validate()?;
        self.cavity.validate(self.resonator.mirror_spacing)?;
        ensure_positive(self.vacuum_amplitude, "vacuum amplitude")?;
        self.array.validate()?;
        self.beam.validate()?;
        self.noise.validate()?;
        if !(self.excited_fraction > 0.0 && self.excited_fraction <= 1.0) {
            return Err(Error::InvalidInput("excited fraction must lie in (0, 1]".into()));
        }
        if self.angle_bins < 10 || self.detuning_paths == 0 {
            return Err(Error::InvalidInput("angle_bins must be ≥ 10 and detuning_paths ≥ 1".into()));
        }
        let t = &self.trajectory;
        ensure_positive(t.duration, "trajectory duration")?;
        if t.ensemble == 0 {
            return Err(Error::InvalidInput("trajectory ensemble must be non-empty".into()));
        }
        self.injection()?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<ModeGeometry> {
        self.resonator.geometry()
    }

    pub fn peak_coupling(&self) -> f64 {
        peak_coupling(&self.species, self.vacuum_amplitude)
    }

    /// `√π w0 / v` at the mean velocity.
    pub fn transit_time(&self) -> Result<f64> {
        effective_interaction_time(self.geometry()?.waist, self.beam.mean_velocity)
    }

    pub fn injection(&self) -> Result<InjectionModel> {
        let tau = self.transit_time()?;
        let mean = self.beam.total_rate(&self.array) * tau;
        InjectionModel::new(mean, tau, self.excited_fraction)
    }

    /// Sets the per-hole flux so that `⟨N⟩` equals `mean_atom_number`.
    pub fn with_mean_atom_number(mut self, mean_atom_number: f64) -> Result<Self> {
        let tau = self.transit_time()?;
        self.beam.flux_per_hole = mean_atom_number / tau / self.array.hole_count() as f64;
        Ok(self)
    }

    pub fn psf(&self) -> Result<Kernel2D> {
        point_spread_function(&self.array, &self.beam, self.array.flight_distance(), self.psf_spacing)
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanAxis {
    Z,
    X,
    Detuning,
}

impl ScanAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScanAxis::Z => "z",
            ScanAxis::X => "x",
            ScanAxis::Detuning => "detuning",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "z" => Some(ScanAxis::Z),
            "x" => Some(ScanAxis::X),
            "detuning" => Some(ScanAxis::Detuning),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    SteadyState,
    Trajectory,
}

impl Engine {
    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::SteadyState => "steady_state",
            Engine::Trajectory => "trajectory",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMetadata {
    pub mean_atom_number: f64,
    pub seed: u64,
    pub config_hash: String,
    pub engine: Engine,
    /// Array origin `(x, z)` for the coordinate not being scanned.
    pub fixed_position: [f64; 2],
    pub mean_velocity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanTrace {
    pub axis: ScanAxis,
    pub coordinates: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub metadata: TraceMetadata,
}

impl ScanTrace {
    pub fn validate(&self) -> Result<()> {
        let n = self.coordinates.len();
        if n == 0 || self.values.len() != n || self.stderr.len() != n {
            return Err(Error::InvalidInput("trace columns must be non-empty and equal length".into()));
        }
        ensure_finite(&self.coordinates, "trace coordinates")?;
        ensure_finite(&self.values, "trace values")?;
        ensure_finite(&self.stderr, "trace stderr")?;
        if !strictly_monotone(&self.coordinates) {
            return Err(Error::InvalidInput("trace coordinates must be strictly monotone".into()));
        }
        if let Some((i, v)) = self.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeInput { index: i, value: *v });
        }
        if self.stderr.iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidInput("stderr must be non-negative".into()));
        }
        Ok(())
    }
}

pub(crate) fn strictly_monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

/// Probability-weighted transit angles for atoms through the array at its
/// current origin, averaged over the PSF of every hole.
pub fn transit_angles(cfg: &ExperimentConfig, array: &NanoholeArray, psf: &Kernel2D) -> Result<RabiAngles> {
    let geom = cfg.geometry()?;
    let tau = cfg.transit_time()?;
    let theta0 = cfg.peak_coupling() * tau;
    let k = 2.0 * PI / geom.wavelength;
    let w2 = geom.waist * geom.waist;
    let n = psf.size();
    let gx: Vec<Vec<f64>> = array
        .row_positions()
        .iter()
        .map(|x| (0..n).map(|a| (-(x + psf.offset(a)).powi(2) / w2).exp()).collect())
        .collect();
    // Columns a whole number of half-wavelengths apart see the same
    // standing wave; they are merged with a multiplicity.
    let mut cz: Vec<(Vec<f64>, f64)> = Vec::new();
    for z in array.column_positions() {
        let col: Vec<f64> = (0..n).map(|b| (k * (z + psf.offset(b))).cos().abs()).collect();
        match cz.iter_mut().find(|g| g.0.iter().zip(&col).all(|(a, b)| (a - b).abs() <= 1e-12)) {
            Some(g) => g.1 += 1.0,
            None => cz.push((col, 1.0)),
        }
    }
    let cells: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| (a, b, psf.at(a, b)))
        .filter(|c| c.2 > 0.0)
        .collect();
    let (speeds, speed_weights) = velocity_nodes(cfg.beam.velocity_spread);
    let max_scale = speeds.iter().fold(0.0f64, |m, s| m.max(1.0 / s));
    let max_angle = theta0 * max_scale;
    let bins = cfg.angle_bins;
    let mut weight = vec![0.0; bins];
    let mut moment = vec![0.0; bins];
    let hole_weight = 1.0 / array.hole_count() as f64;
    for (speed, sw) in speeds.iter().zip(&speed_weights) {
        let scale = theta0 / speed;
        for gx_row in &gx {
            for (cz_col, multiplicity) in &cz {
                for &(a, b, p) in &cells {
                    let angle = scale * gx_row[a] * cz_col[b];
                    let w = sw * hole_weight * multiplicity * p;
                    let idx = ((angle / max_angle * bins as f64) as usize).min(bins - 1);
                    weight[idx] += w;
                    moment[idx] += w * angle;
                }
            }
        }
    }
    let (angles, weights): (Vec<f64>, Vec<f64>) =
        weight.iter().zip(&moment).filter(|(w, _)| **w > 0.0).map(|(w, m)| (m / w, *w)).unzip();
    RabiAngles::new(angles, weights)
}

/// Relative speeds and weights for a Gaussian speed distribution
/// (7-point Gauss-Hermite rule); a single node when the spread is zero.
fn velocity_nodes(spread: f64) -> (Vec<f64>, Vec<f64>) {
    if spread == 0.0 {
        return (vec![1.0], vec![1.0]);
    }
    const NODES: [f64; 7] = [-3.750_439_717_725_742, -2.366_759_410_734_541, -1.154_405_394_739_968, 0.0, 1.154_405_394_739_968, 2.366_759_410_734_541, 3.750_439_717_725_742];
    const WEIGHTS: [f64; 7] = [
        5.482_688_559_722_18e-4,
        3.075_712_396_758_65e-2,
        0.240_123_178_605_013,
        0.457_142_857_142_857,
        0.240_123_178_605_013,
        3.075_712_396_758_65e-2,
        5.482_688_559_722_18e-4,
    ];
    let speeds = NODES.iter().map(|x| (1.0 + spread * x).max(0.05)).collect();
    (speeds, WEIGHTS.to_vec())
}

/// Noise-free `(⟨n⟩, p(0), stderr)` for the array placed at `array`.
fn point_value(
    cfg: &ExperimentConfig,
    array: &NanoholeArray,
    psf: &Kernel2D,
    engine: Engine,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let inj = cfg.injection()?;
    match engine {
        Engine::SteadyState => {
            let angles = transit_angles(cfg, array, psf)?;
            let d = micromaser_steady_state_for(&inj, cfg.cavity.kappa, &angles, 32)?;
            Ok((d.mean(), d.vacuum_probability(), 0.0))
        }
        Engine::Trajectory => {
            let tcfg = trajectory_config(cfg)?;
            let sampler = ApertureSampler::new(*array, cfg.beam)?;
            let t = &cfg.trajectory;
            let res = trajectory_ensemble(&tcfg, &sampler, t.duration, t.ensemble, seed)?;
            Ok((res.mean_photon, res.vacuum_probability, res.stderr))
        }
    }
}

/// Trajectory engine settings matching `cfg`.
pub fn trajectory_config(cfg: &ExperimentConfig) -> Result<TrajectoryConfig> {
    let mut t = TrajectoryConfig::new(
        cfg.geometry()?,
        cfg.peak_coupling(),
        cfg.cavity.kappa,
        cfg.species.gamma,
        cfg.injection()?,
    );
    t.max_atoms = cfg.trajectory.max_atoms;
    t.window_half_widths = cfg.trajectory.window_half_widths;
    Ok(t)
}

/// Adds counting noise and background to a clean value.
fn observe(cfg: &ExperimentConfig, clean: f64, engine_stderr: f64, seed: u64, index: usize) -> (f64, f64) {
    let signal = clean + cfg.noise.background;
    let counting = cfg.noise.stderr(signal, cfg.cavity.kappa);
    let stderr = counting.hypot(engine_stderr);
    if counting == 0.0 {
        return (signal, stderr);
    }
    let mut rng = SimRng::seed_from_u64(derive_seed(seed ^ 0x6E6F_6973_6500_0000, index as u64));
    let z: f64 = StandardNormal.sample(&mut rng);
    ((signal + counting * z).max(0.0), stderr)
}

/// Mean photon number versus array position along `axis` (`Z` or `X`),
/// with the other coordinate held at the configured origin.
pub fn simulate_position_scan(
    cfg: &ExperimentConfig,
    axis: ScanAxis,
    positions: &[f64],
    engine: Engine,
    seed: u64,
) -> Result<ScanTrace> {
    cfg.validate()?;
    if axis == ScanAxis::Detuning {
        return Err(Error::InvalidInput("position scans run along z or x".into()));
    }
    if positions.is_empty() || !strictly_monotone(positions) {
        return Err(Error::InvalidInput("positions must be non-empty and strictly monotone".into()));
    }
    ensure_finite(positions, "positions")?;
    let psf = cfg.psf()?;
    let origin = cfg.array.origin;
    let points: Vec<(f64, f64)> = positions
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let array = match axis {
                ScanAxis::Z => cfg.array.with_origin(origin[0], p),
                _ => cfg.array.with_origin(p, origin[1]),
            };
            let (n, _, err) = point_value(cfg, &array, &psf, engine, derive_seed(seed, i as u64))?;
            Ok(observe(cfg, n, err, seed, i))
        })
        .collect::<Result<_>>()?;
    let (values, stderr) = points.into_iter().unzip();
    Ok(ScanTrace {
        axis,
        coordinates: positions.to_vec(),
        values,
        stderr,
        metadata: metadata(cfg, engine, seed)?,
    })
}

fn metadata(cfg: &ExperimentConfig, engine: Engine, seed: u64) -> Result<TraceMetadata> {
    Ok(TraceMetadata {
        mean_atom_number: cfg.injection()?.mean_atom_number,
        seed,
        config_hash: cfg.hash(),
        engine,
        fixed_position: cfg.array.origin,
        mean_velocity: cfg.beam.mean_velocity,
    })
}

/// Steady-state `⟨n⟩` and `p(0)` with the array at its configured origin.
pub fn steady_state_at_origin(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let psf = cfg.psf()?;
    let (n, p0, _) = point_value(cfg, &cfg.array, &psf, Engine::SteadyState, 0)?;
    Ok((n, p0))
}

/// Transit-time broadened response versus detuning (rad/s) at the
/// configured array position. The linear-regime shape `Σ|A(Δ)|²` over
/// sampled atom paths is scaled to the steady-state `⟨n⟩` at `Δ = 0`.
pub fn simulate_detuning_scan(cfg: &ExperimentConfig, detunings: &[f64], seed: u64) -> Result<ScanTrace> {
    cfg.validate()?;
    if detunings.is_empty() || !strictly_monotone(detunings) {
        return Err(Error::InvalidInput("detunings must be non-empty and strictly monotone".into()));
    }
    ensure_finite(detunings, "detunings")?;
    let geom = cfg.geometry()?;
    let g0 = cfg.peak_coupling();
    let sampler = ApertureSampler::new(cfg.array, cfg.beam)?;
    let mut rng = SimRng::seed_from_u64(derive_seed(seed, u64::MAX));
    let profiles: Vec<TransitProfile> = (0..cfg.detuning_paths)
        .map(|_| {
            let path = sampler.sample_path(&mut rng);
            TransitProfile::along_path(g0, &geom, &path, 4.0, 64)
        })
        .collect::<Result<_>>()?;
    // Linear regime is judged on the strongest possible transit.
    let axial = TransitProfile::gaussian(g0, &geom, cfg.beam.mean_velocity)?;
    let angle = 2.0 * axial.peak_coupling * axial.effective_time;
    if angle > LINEAR_REGIME_LIMIT {
        return Err(Error::LinearRegimeViolation { angle, limit: LINEAR_REGIME_LIMIT });
    }
    let power = |delta: f64| profiles.iter().map(|p| amplitude_at(p, delta).norm_sqr()).sum::<f64>();
    let reference = power(0.0);
    let (n0, _) = steady_state_at_origin(cfg)?;
    let points: Vec<(f64, f64)> = detunings
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            let clean = if reference > 0.0 { n0 * power(d) / reference } else { 0.0 };
            observe(cfg, clean, 0.0, seed, i)
        })
        .collect();
    let (values, stderr) = points.into_iter().unzip();
    Ok(ScanTrace {
        axis: ScanAxis::Detuning,
        coordinates: detunings.to_vec(),
        values,
        stderr,
        metadata: metadata(cfg, Engine::SteadyState, seed)?,
    })
}

/// `count` points evenly spaced over `[start, end]`.
pub fn linspace(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count).map(|i| start + (end - start) * i as f64 / (count - 1) as f64).collect(),
    }
}
