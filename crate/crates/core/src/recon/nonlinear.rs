//! Calibration of the vacuum amplitude from node-to-antinode traces taken
//! at several atom numbers, using the pumped-cavity steady state as model.
//!
//! In the linear regime `⟨n⟩` depends on the amplitude and the atom number
//! only through `⟨N⟩ E0²`, so the two separate only when some trace reaches
//! gain saturation. The fit reports that separation through the relative
//! uncertainty of `E0` and flags the result as degenerate when it is poor.
//! Traces without uncertainties are weighted as if each point had an error
//! of 1% of the largest value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lsq::{levenberg_marquardt, FitResult, LmOptions, LmProblem};
use crate::beamsim::{transit_angles, ExperimentConfig, ScanAxis, ScanTrace};
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::qdynamics::{micromaser_steady_state_for, InjectionModel, RabiAngles};

/// One trace versus relative intensity `[E(z)/E(0)]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterTrace {
    pub label: String,
    pub relative_intensity: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Transit angles at each point for the reference amplitude.
    pub angles: Vec<RabiAngles>,
    /// Starting value for this trace's `⟨N⟩`.
    pub initial_mean_atom_number: f64,
}

impl MasterTrace {
    /// Point atoms: a single angle `θ_ref √s` per point.
    pub fn point_atoms(
        label: &str,
        relative_intensity: Vec<f64>,
        values: Vec<f64>,
        stderr: Vec<f64>,
        reference_angle: f64,
        initial_mean_atom_number: f64,
    ) -> Self {
        let angles = relative_intensity.iter().map(|s| RabiAngles::single(reference_angle * s.max(0.0).sqrt())).collect();
        Self { label: label.into(), relative_intensity, values, stderr, angles, initial_mean_atom_number }
    }

    /// Builds the fit input from a z-scan taken with the array at
    /// `trace.metadata.fixed_position[0]`, using the PSF-averaged angle
    /// tables of `cfg` at its configured amplitude.
    pub fn from_scan(cfg: &ExperimentConfig, trace: &ScanTrace) -> Result<Self> {
        if trace.axis != ScanAxis::Z {
            return Err(Error::InvalidInput("calibration traces must be z-scans".into()));
        }
        trace.validate()?;
        let psf = cfg.psf()?;
        let k = 2.0 * std::f64::consts::PI / cfg.resonator.wavelength;
        let x = trace.metadata.fixed_position[0];
        let angles = trace
            .coordinates
            .par_iter()
            .map(|z| transit_angles(cfg, &cfg.array.with_origin(x, *z), &psf))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            label: format!("{:.4}", trace.metadata.mean_atom_number),
            relative_intensity: trace.coordinates.iter().map(|z| (k * z).cos().powi(2)).collect(),
            values: trace.values.clone(),
            stderr: trace.stderr.clone(),
            angles,
            initial_mean_atom_number: trace.metadata.mean_atom_number,
        })
    }

    fn validate(&self) -> Result<()> {
        let n = self.values.len();
        if n == 0 || self.relative_intensity.len() != n || self.stderr.len() != n || self.angles.len() != n {
            return Err(Error::InvalidInput(format!("trace {} has mismatched column lengths", self.label)));
        }
        ensure_finite(&self.values, "trace values")?;
        ensure_finite(&self.stderr, "trace stderr")?;
        ensure_finite(&self.relative_intensity, "relative intensity")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterModel {
    pub kappa: f64,
    pub transit_time: f64,
    /// Amplitude (V/m) at which the trace angle tables were computed.
    pub reference_amplitude: f64,
    pub excited_fraction: f64,
    /// Fixed photon-number calibration; fitted when `None`.
    pub calibration: Option<f64>,
}

impl MasterModel {
    /// Fixed unit calibration at the amplitude of `cfg`.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            kappa: cfg.cavity.kappa,
            transit_time: cfg.transit_time()?,
            reference_amplitude: cfg.vacuum_amplitude,
            excited_fraction: cfg.excited_fraction,
            calibration: Some(1.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterFitOptions {
    pub initial_amplitude: f64,
    /// Relative 1σ uncertainty of `E0` above which the data are declared
    /// unable to separate amplitude from atom number.
    pub degeneracy_threshold: f64,
}

impl MasterFitOptions {
    pub fn new(initial_amplitude: f64) -> Self {
        Self { initial_amplitude, degeneracy_threshold: DEGENERACY_THRESHOLD }
    }
}

/// Relative `σ(E0)/E0` beyond which the fit is flagged as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterFit {
    pub result: FitResult,
    pub degenerate: bool,
    pub relative_amplitude_sigma: f64,
}

impl MasterFit {
    pub fn amplitude(&self) -> f64 {
        self.result.values[0]
    }
}

/// Steady-state `⟨n⟩` for one point.
fn model_point(model: &MasterModel, angles: &RabiAngles, scale: f64, mean_atoms: f64) -> Result<f64> {
    let inj = InjectionModel::new(mean_atoms, model.transit_time, model.excited_fraction)?;
    let d = micromaser_steady_state_for(&inj, model.kappa, &angles.scaled(scale), 32)?;
    Ok(d.mean())
}

pub fn fit_nonlinear_master(traces: &[MasterTrace], model: &MasterModel, opts: &MasterFitOptions) -> Result<MasterFit> {
    if traces.is_empty() {
        return Err(Error::InvalidInput("at least one trace is required".into()));
    }
    for t in traces {
        t.validate()?;
    }
    ensure_positive(model.kappa, "kappa")?;
    ensure_positive(model.transit_time, "transit time")?;
    ensure_positive(model.reference_amplitude, "reference amplitude")?;
    ensure_positive(opts.initial_amplitude, "initial amplitude")?;

    let y_max = traces.iter().flat_map(|t| t.values.iter()).cloned().fold(0.0, f64::max);
    let floor = 0.01 * y_max.max(f64::MIN_POSITIVE);
    let all_weighted = traces.iter().all(|t| t.stderr.iter().all(|s| *s > 0.0));
    // Flattened (trace, point, weight) list.
    let points: Vec<(usize, usize, f64)> = traces
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| {
            t.stderr.iter().enumerate().map(move |(k, s)| (ti, k, if *s > 0.0 { *s } else { floor }))
        })
        .collect();
    let fit_calibration = model.calibration.is_none();
    let offset = if fit_calibration { 2 } else { 1 };
    let m = traces.len();

    let failed = std::sync::atomic::AtomicBool::new(false);
    let residuals = |p: &[f64]| -> Vec<f64> {
        let scale = p[0];
        let calibration = if fit_calibration { p[1] } else { model.calibration.unwrap() };
        points
            .par_iter()
            .map(|&(ti, k, s)| {
                let t = &traces[ti];
                match model_point(model, &t.angles[k], scale, p[offset + ti]) {
                    Ok(n) => (calibration * n - t.values[k]) / s,
                    Err(_) => {
                        failed.store(true, std::sync::atomic::Ordering::Relaxed);
                        1e6
                    }
                }
            })
            .collect()
    };
    let mut start = vec![opts.initial_amplitude / model.reference_amplitude];
    let mut lower = vec![1e-3];
    let mut upper = vec![10.0];
    if fit_calibration {
        start.push(1.0);
        lower.push(1e-6);
        upper.push(1e6);
    }
    for t in traces {
        start.push(t.initial_mean_atom_number.clamp(1e-3, 10.0));
        lower.push(1e-6);
        upper.push(10.0);
    }
    let problem = LmProblem::new(&residuals).with_bounds(lower, upper);
    let sol = levenberg_marquardt(&problem, &start, &LmOptions { max_iterations: 200, ..LmOptions::default() });
    if failed.load(std::sync::atomic::Ordering::Relaxed) && sol.cost >= 1e10 {
        return Err(Error::InvalidInput("steady-state model failed at the fitted parameters".into()));
    }

    let fisher = sol.fisher_inverse();
    let cov = if all_weighted { fisher.clone() } else { sol.covariance() };
    let sig = |i: usize| cov.as_ref().map_or(f64::INFINITY, |c| c[(i, i)].max(0.0).sqrt());
    let relative_amplitude_sigma = fisher
        .as_ref()
        .map_or(f64::INFINITY, |c| c[(0, 0)].max(0.0).sqrt() / sol.params[0]);
    let degenerate = !(relative_amplitude_sigma <= opts.degeneracy_threshold);

    let mut names = vec!["vacuum_amplitude".to_string()];
    let mut values = vec![sol.params[0] * model.reference_amplitude];
    let mut sigmas = vec![sig(0) * model.reference_amplitude];
    if fit_calibration {
        names.push("calibration".into());
        values.push(sol.params[1]);
        sigmas.push(sig(1));
    }
    for (i, t) in traces.iter().enumerate() {
        names.push(format!("mean_atom_number[{}]", t.label));
        values.push(sol.params[offset + i]);
        sigmas.push(sig(offset + i));
    }
    let mut warnings = Vec::new();
    if degenerate {
        warnings.push(format!(
            "amplitude and atom number are not separable: relative sigma {relative_amplitude_sigma:.3} exceeds {}",
            opts.degeneracy_threshold
        ));
    }
    if !sol.converged {
        warnings.push("iteration cap reached; values are not reportable".into());
    }
    let _ = m;
    Ok(MasterFit {
        result: FitResult {
            names,
            values,
            sigmas,
            residual_norm: sol.cost.sqrt(),
            converged: sol.converged,
            condition_number: sol.condition_number(),
            warnings,
        },
        degenerate,
        relative_amplitude_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const KAPPA: f64 = 2.0 * PI * 140e3;
    const TAU: f64 = 9.196e-8;

    fn model() -> MasterModel {
        MasterModel { kappa: KAPPA, transit_time: TAU, reference_amplitude: 97.0, excited_fraction: 1.0, calibration: Some(1.0) }
    }

    fn synthetic(mean_atoms: f64, amplitude: f64, label: &str) -> MasterTrace {
        let theta_ref = 2.0 * PI * 330e3 * TAU;
        let s: Vec<f64> = (0..15).map(|i| i as f64 / 14.0).collect();
        let m = model();
        let values = s
            .iter()
            .map(|s| model_point(&m, &RabiAngles::single(theta_ref * s.sqrt()), amplitude / 97.0, mean_atoms).unwrap())
            .collect::<Vec<_>>();
        let stderr = values.iter().map(|v: &f64| 0.01 * v.max(0.01)).collect();
        MasterTrace::point_atoms(label, s, values, stderr, theta_ref, 0.5)
    }

    #[test]
    fn recovers_amplitude_from_saturated_traces() {
        let traces = [synthetic(0.34, 97.0, "a"), synthetic(1.1, 97.0, "b"), synthetic(1.5, 97.0, "c")];
        let fit = fit_nonlinear_master(&traces, &model(), &MasterFitOptions::new(80.0)).unwrap();
        assert!(!fit.degenerate, "{}", fit.relative_amplitude_sigma);
        assert!((fit.amplitude() / 97.0 - 1.0).abs() < 1e-4, "{}", fit.amplitude());
        assert!((fit.result.values[3] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn linear_traces_are_degenerate() {
        let traces = [synthetic(0.1, 97.0, "a"), synthetic(0.1, 97.0, "b")];
        let fit = fit_nonlinear_master(&traces, &model(), &MasterFitOptions::new(80.0)).unwrap();
        assert!(fit.degenerate, "{}", fit.relative_amplitude_sigma);
    }
}
