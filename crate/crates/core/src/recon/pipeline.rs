//! Full reconstruction from a set of traces: per-row z fits, transverse
//! profiles, and the assembled volume.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::deconv::{resample_kernel, richardson_lucy, wiener_spectral_inverse, RlOptions};
use super::fits::{fit_gaussian, fit_gaussian_data, fit_sine_squared_data, GaussianOptions};
use super::lsq::FitResult;
use super::volume::{assemble_volume, AxisProfiles, Calibration, GridSpec, VacuumVolume};
use super::yprofile::{y_profile_from_detuning, YProfile, YProfileOptions};
use crate::beamsim::{ScanAxis, ScanTrace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deconvolution {
    None,
    RichardsonLucy,
    Wiener { epsilon: f64 },
}

/// Default Wiener regularization.
pub const WIENER_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionOptions {
    pub method: Deconvolution,
    /// Response along z and its sample spacing, required for deconvolution.
    pub psf_z: Option<(Vec<f64>, f64)>,
    pub rl: RlOptions,
    pub y: YProfileOptions,
    pub grid_dims: [usize; 3],
    pub calibration: Option<Calibration>,
    /// Skip the volume and missing axes instead of failing.
    pub partial: bool,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        Self {
            method: Deconvolution::RichardsonLucy,
            psf_z: None,
            rl: RlOptions::default(),
            y: YProfileOptions::default(),
            grid_dims: [41, 41, 61],
            calibration: None,
            partial: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowFit {
    /// Array x offset of the row, m.
    pub x: f64,
    pub fit: FitResult,
    pub deconvolved: Option<DeconvolvedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeconvolvedRow {
    pub z: Vec<f64>,
    pub values: Vec<f64>,
    /// Per-sample iterate spread over the last iterations
    /// (Richardson-Lucy only).
    pub numerical_error: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub rows: Vec<RowFit>,
    pub wavelength: Option<(f64, f64)>,
    /// Antinode position in scan coordinates.
    pub z_reference: Option<f64>,
    /// Phase of the strongest row.
    pub phase: Option<f64>,
    pub x_fit: Option<FitResult>,
    pub y_profile: Option<YProfile>,
    pub y_fit: Option<FitResult>,
    pub volume: Option<VacuumVolume>,
    pub warnings: Vec<String>,
}

/// Deconvolved row. Samples within one response half-width of either end
/// depend on the boundary extension and are dropped.
fn deconvolve(trace: &ScanTrace, opts: &ReconstructionOptions) -> Result<Option<DeconvolvedRow>> {
    let (kernel, spacing) = match (&opts.method, &opts.psf_z) {
        (Deconvolution::None, _) => return Ok(None),
        (_, Some(k)) => k,
        (_, None) => return Err(Error::InvalidInput("deconvolution needs a z response".into())),
    };
    let z = &trace.coordinates;
    let step = (z[z.len() - 1] - z[0]).abs() / (z.len() - 1) as f64;
    let irregular = z.windows(2).any(|w| ((w[1] - w[0]).abs() - step).abs() > 1e-6 * step);
    if irregular {
        return Err(Error::InvalidInput("deconvolution needs uniformly spaced z samples".into()));
    }
    let psf = resample_kernel(kernel, *spacing, step)?;
    let (estimate, numerical_error) = match opts.method {
        Deconvolution::Wiener { epsilon } => {
            let n = trace.values.len();
            let mut response = vec![0.0; n];
            let h = psf.len() / 2;
            for (i, v) in psf.iter().enumerate() {
                let idx = (n / 2 + i + n * (h / n + 1) - h) % n;
                response[idx] += v;
            }
            (wiener_spectral_inverse(&trace.values, &response, epsilon)?, None)
        }
        _ => {
            let rl = richardson_lucy(&trace.values, &psf, &opts.rl)?;
            (rl.estimate, Some(rl.numerical_error))
        }
    };
    let h = (psf.len() / 2).min((z.len() - 1) / 4);
    let keep = h..z.len() - h;
    Ok(Some(DeconvolvedRow {
        z: z[keep.clone()].to_vec(),
        values: estimate[keep.clone()].to_vec(),
        numerical_error: numerical_error.map(|e| e[keep].to_vec()),
    }))
}

/// Antinode of `sin²(2πz/λ + φ)` nearest `z_hint`.
fn antinode(wavelength: f64, phase: f64, z_hint: f64) -> f64 {
    let z0 = (0.5 * PI - phase) * wavelength / (2.0 * PI);
    let half = 0.5 * wavelength;
    z0 + ((z_hint - z0) / half).round() * half
}

pub fn reconstruct(traces: &[ScanTrace], opts: &ReconstructionOptions) -> Result<Reconstruction> {
    let mut rows_in: Vec<&ScanTrace> = traces.iter().filter(|t| t.axis == ScanAxis::Z).collect();
    rows_in.sort_by(|a, b| a.metadata.fixed_position[0].total_cmp(&b.metadata.fixed_position[0]));
    let x_scan = traces.iter().find(|t| t.axis == ScanAxis::X);
    let detuning = traces.iter().find(|t| t.axis == ScanAxis::Detuning);

    let mut missing = Vec::new();
    if rows_in.len() < 2 {
        missing.push(format!("z-scan rows (found {}, need at least 2)", rows_in.len()));
    }
    if detuning.is_none() {
        missing.push("detuning scan".to_string());
    }
    if !missing.is_empty() && !opts.partial {
        return Err(Error::MissingTraces(missing));
    }
    let mut warnings = Vec::new();

    let mut rows = Vec::new();
    for t in &rows_in {
        // The response maps sin² onto sin² of the same period and phase, so
        // the fit runs on the recorded trace.
        let fit = fit_sine_squared_data(&t.coordinates, &t.values, &t.stderr)?;
        warnings.extend(fit.warnings.iter().map(|w| format!("row x={:.3e}: {w}", t.metadata.fixed_position[0])));
        rows.push(RowFit { x: t.metadata.fixed_position[0], fit, deconvolved: deconvolve(t, opts)? });
    }

    // Inverse-variance mean wavelength over rows with usable uncertainties.
    let wavelength = if rows.is_empty() {
        None
    } else {
        let usable: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.fit.get("wavelength").unwrap(), r.fit.sigma("wavelength").unwrap()))
            .filter(|(_, s)| s.is_finite() && *s > 0.0)
            .collect();
        if usable.is_empty() {
            let mean = rows.iter().map(|r| r.fit.get("wavelength").unwrap()).sum::<f64>() / rows.len() as f64;
            Some((mean, 0.0))
        } else {
            let wsum: f64 = usable.iter().map(|(_, s)| 1.0 / (s * s)).sum();
            let mean = usable.iter().map(|(l, s)| l / (s * s)).sum::<f64>() / wsum;
            Some((mean, wsum.sqrt().recip()))
        }
    };
    let strongest = rows.iter().max_by(|a, b| a.fit.values[0].total_cmp(&b.fit.values[0]));
    let phase = strongest.map(|r| r.fit.get("phase").unwrap());
    let z_reference = match (strongest, wavelength) {
        (Some(r), Some((l, _))) => {
            let z = &rows_in[0].coordinates;
            Some(antinode(l, r.fit.get("phase").unwrap(), 0.5 * (z[0] + z[z.len() - 1])))
        }
        _ => None,
    };

    let x_fit = if rows.len() >= 3 {
        let x: Vec<f64> = rows.iter().map(|r| r.x).collect();
        let a: Vec<f64> = rows.iter().map(|r| r.fit.values[0]).collect();
        let s: Vec<f64> = rows.iter().map(|r| r.fit.sigmas[0]).map(|s| if s.is_finite() { s } else { 0.0 }).collect();
        Some(fit_gaussian_data(&x, &a, &s, GaussianOptions { with_offset: false })?)
    } else if let Some(t) = x_scan {
        Some(fit_gaussian(t, GaussianOptions::default())?)
    } else {
        if opts.partial {
            warnings.push("no transverse x information: fewer than 3 rows and no x-scan".into());
        }
        None
    };
    if let Some(f) = &x_fit {
        warnings.extend(f.warnings.iter().map(|w| format!("x profile: {w}")));
    }

    let (y_profile, y_fit) = match detuning {
        Some(t) => {
            let p = y_profile_from_detuning(t, t.metadata.mean_velocity, &opts.y)?;
            warnings.extend(p.warnings.iter().cloned());
            let zeros = vec![0.0; p.y.len()];
            let f = fit_gaussian_data(&p.y, &p.intensity, &zeros, GaussianOptions { with_offset: false })?;
            (Some(p), Some(f))
        }
        None => (None, None),
    };

    let volume = match (&wavelength, &x_fit, &y_profile, &y_fit, z_reference) {
        (Some((l, ls)), Some(xf), Some(yp), Some(yf), Some(zr)) if rows.len() >= 2 => {
            let axes = AxisProfiles {
                wavelength: *l,
                wavelength_sigma: *ls,
                row_wavelengths: rows
                    .iter()
                    .map(|r| (r.fit.get("wavelength").unwrap(), r.fit.sigma("wavelength").unwrap()))
                    .map(|(l, s)| (l, if s.is_finite() { s } else { 0.0 }))
                    .collect(),
                z_reference: zr,
                x_waist: xf.get("waist").unwrap(),
                x_waist_sigma: xf.sigma("waist").unwrap().max(0.0),
                y_samples: yp.y.clone(),
                y_intensity: yp.intensity.clone(),
                y_waist: yf.get("waist").unwrap(),
                y_waist_sigma: yf.sigma("waist").unwrap().max(0.0),
            };
            let grid = GridSpec::around_mode(axes.x_waist.max(axes.y_waist), *l, opts.grid_dims);
            Some(assemble_volume(&axes, &grid, opts.calibration)?)
        }
        _ => None,
    };
    Ok(Reconstruction { rows, wavelength, z_reference, phase, x_fit, y_profile, y_fit, volume, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_lists_missing_traces() {
        match reconstruct(&[], &ReconstructionOptions::default()) {
            Err(Error::MissingTraces(m)) => assert_eq!(m.len(), 2),
            other => panic!("{other:?}"),
        }
        let partial = ReconstructionOptions { partial: true, ..Default::default() };
        let r = reconstruct(&[], &partial).unwrap();
        assert!(r.volume.is_none());
    }

    #[test]
    fn antinode_is_nearest_maximum() {
        let l = 791e-9;
        let z = antinode(l, 0.5 * PI, 0.0);
        assert!(z.abs() < 1e-18);
        let z = antinode(l, 0.3, 3e-7);
        assert!(((2.0 * PI * z / l + 0.3).sin().powi(2) - 1.0).abs() < 1e-12);
        assert!((z - 3e-7).abs() <= 0.25 * l);
    }
}
