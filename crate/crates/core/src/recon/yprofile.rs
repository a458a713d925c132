//! Spatial coupling profile along the beam from a transit-time broadened
//! detuning curve.
//!
//! In the linear regime the response is `|A(Δ)|²` with
//! `A(Δ) = ∫ g(t) e^{iΔt} dt`. For a symmetric real waveform `A` is real and
//! non-negative near resonance, so `√signal` recovers it, an inverse
//! transform gives `g(t)`, and `y = v t` maps time to position.

use std::f64::consts::PI;

use super::fits::{fit_gaussian_data, GaussianOptions};
use crate::beamsim::{ScanAxis, ScanTrace};
use crate::error::{ensure_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YProfileOptions {
    /// Output samples along y.
    pub points: usize,
    /// Transform a Gaussian fit of the curve instead of the raw data.
    pub transform_fit: bool,
}

impl Default for YProfileOptions {
    fn default() -> Self {
        Self { points: 201, transform_fit: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YProfile {
    pub y: Vec<f64>,
    /// Relative intensity `g(y)²`, peak 1.
    pub intensity: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn y_profile_from_detuning(trace: &ScanTrace, velocity: f64, opts: &YProfileOptions) -> Result<YProfile> {
    if trace.axis != ScanAxis::Detuning {
        return Err(Error::InvalidInput("y-profile needs a detuning trace".into()));
    }
    trace.validate()?;
    ensure_positive(velocity, "velocity")?;
    if opts.points < 3 {
        return Err(Error::InvalidInput("y-profile needs at least three output points".into()));
    }
    let delta = &trace.coordinates;
    let n = delta.len();
    if n < 3 {
        return Err(Error::InvalidInput("detuning trace needs at least three points".into()));
    }
    let mut warnings = Vec::new();

    let signal: Vec<f64> = if opts.transform_fit {
        let fit = fit_gaussian_data(delta, &trace.values, &trace.stderr, GaussianOptions { with_offset: false })?;
        let (a, c, w) = (fit.get("amplitude").unwrap(), fit.get("center").unwrap(), fit.get("waist").unwrap());
        delta.iter().map(|d| a * (-2.0 * (d - c).powi(2) / (w * w)).exp()).collect()
    } else {
        trace.values.clone()
    };

    // Center on the intensity-weighted mean detuning.
    let total: f64 = signal.iter().sum();
    let center = if total > 0.0 { delta.iter().zip(&signal).map(|(d, s)| d * s).sum::<f64>() / total } else { 0.0 };
    if let Some(msg) = asymmetry(delta, &signal, &trace.stderr, center) {
        warnings.push(msg);
    }

    let amplitude: Vec<f64> = signal.iter().map(|s| s.max(0.0).sqrt()).collect();
    // Trapezoid weights for a possibly non-uniform grid.
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let left = if i > 0 { delta[i] - delta[i - 1] } else { 0.0 };
            let right = if i + 1 < n { delta[i + 1] - delta[i] } else { 0.0 };
            0.5 * (left + right).abs()
        })
        .collect();
    let step = (delta[n - 1] - delta[0]).abs() / (n - 1) as f64;
    // Half of the alias-free window 2π/dΔ.
    let t_max = 0.5 * PI / step;
    let times: Vec<f64> = (0..opts.points).map(|i| -t_max + 2.0 * t_max * i as f64 / (opts.points - 1) as f64).collect();
    let field: Vec<f64> = times
        .iter()
        .map(|t| {
            let (mut re, mut im) = (0.0, 0.0);
            for ((d, a), w) in delta.iter().zip(&amplitude).zip(&weights) {
                let ph = -(d - center) * t;
                re += w * a * ph.cos();
                im += w * a * ph.sin();
            }
            re * re + im * im
        })
        .collect();
    let peak = field.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::InvalidInput("detuning trace carries no signal".into()));
    }
    Ok(YProfile {
        y: times.iter().map(|t| velocity * t).collect(),
        intensity: field.iter().map(|f| f / peak).collect(),
        warnings,
    })
}

/// Largest mirrored difference about `center` in units of its combined
/// uncertainty; a message when it exceeds 3σ.
fn asymmetry(x: &[f64], y: &[f64], sigma: &[f64], center: f64) -> Option<String> {
    let interp = |v: &[f64], at: f64| -> Option<f64> {
        let i = x.windows(2).position(|w| (w[0] - at) * (w[1] - at) <= 0.0)?;
        let t = if x[i + 1] != x[i] { (at - x[i]) / (x[i + 1] - x[i]) } else { 0.0 };
        Some(v[i] + t * (v[i + 1] - v[i]))
    };
    let mut worst: f64 = 0.0;
    for (xi, (yi, si)) in x.iter().zip(y.iter().zip(sigma)) {
        let mirrored = 2.0 * center - xi;
        if let (Some(ym), Some(sm)) = (interp(y, mirrored), interp(sigma, mirrored)) {
            let s = si.hypot(sm);
            if s > 0.0 {
                worst = worst.max((yi - ym).abs() / s);
            }
        }
    }
    (worst > 3.0).then(|| format!("detuning curve is asymmetric about its center by {worst:.1}σ"))
}
