//! Sine-squared and Gaussian curve fits.
//!
//! Both fits work internally in centered, scaled coordinates and
//! min-max normalized values, so the estimates do not depend on where the
//! scan starts or on a constant offset in the data.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::lsq::{levenberg_marquardt, FitResult, LmOptions, LmProblem, LmSolution};
use crate::beamsim::ScanTrace;
use crate::error::{ensure_finite, Error, Result};

const PHASE_STARTS: usize = 8;

struct Normalized {
    u: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    x_center: f64,
    x_scale: f64,
    y_min: f64,
    y_scale: f64,
}

fn normalize(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<Normalized> {
    let n = x.len();
    if n == 0 || y.len() != n || sigma.len() != n {
        return Err(Error::InvalidInput("fit inputs must be non-empty and equal length".into()));
    }
    ensure_finite(x, "fit abscissa")?;
    ensure_finite(y, "fit values")?;
    ensure_finite(sigma, "fit uncertainties")?;
    let x_min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let x_center = 0.5 * (x_min + x_max);
    let x_scale = 0.5 * (x_max - x_min);
    if x_scale <= 0.0 {
        return Err(Error::InvalidInput("fit abscissa has zero span".into()));
    }
    let y_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let y_scale = if y_max > y_min { y_max - y_min } else { 1.0 };
    // Weights from the stated uncertainties when all are positive.
    let weighted = sigma.iter().all(|s| *s > 0.0);
    let w = if weighted { sigma.iter().map(|s| y_scale / s).collect() } else { vec![1.0; n] };
    Ok(Normalized {
        u: x.iter().map(|v| (v - x_center) / x_scale).collect(),
        y: y.iter().map(|v| (v - y_min) / y_scale).collect(),
        w,
        x_center,
        x_scale,
        y_min,
        y_scale,
    })
}

/// Residual norm in data units.
fn residual_norm(sol: &LmSolution, d: &Normalized) -> f64 {
    let weighted = d.w.iter().any(|w| *w != 1.0);
    if weighted {
        sol.cost.sqrt()
    } else {
        sol.cost.sqrt() * d.y_scale
    }
}

/// Fits `A sin²(2πz/λ + φ) + B` to a z-scan.
pub fn fit_sine_squared(trace: &ScanTrace) -> Result<FitResult> {
    fit_sine_squared_data(&trace.coordinates, &trace.values, &trace.stderr)
}

pub fn fit_sine_squared_data(z: &[f64], y: &[f64], sigma: &[f64]) -> Result<FitResult> {
    let d = normalize(z, y, sigma)?;
    if z.len() < 5 {
        return Err(Error::InvalidInput("sine-squared fit needs at least five points".into()));
    }
    let lambda0 = periodogram_wavelength(&d.u, &d.y);
    let span = 2.0 * d.x_scale;
    if lambda0 * d.x_scale > span {
        return Err(Error::SpanTooShort { span, needed: lambda0 * d.x_scale });
    }

    let model = |p: &[f64], u: f64| p[0] * (2.0 * PI * u / p[1] + p[2]).sin().powi(2) + p[3];
    let residuals = |p: &[f64]| -> Vec<f64> {
        d.u.iter().zip(&d.y).zip(&d.w).map(|((u, y), w)| w * (model(p, *u) - y)).collect()
    };
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        DMatrix::from_fn(d.u.len(), 4, |i, j| {
            let u = d.u[i];
            let theta = 2.0 * PI * u / p[1] + p[2];
            let w = d.w[i];
            w * match j {
                0 => theta.sin().powi(2),
                1 => -p[0] * (2.0 * theta).sin() * 2.0 * PI * u / (p[1] * p[1]),
                2 => p[0] * (2.0 * theta).sin(),
                _ => 1.0,
            }
        })
    };
    let problem = LmProblem::new(&residuals).with_jacobian(&jacobian);
    let opts = LmOptions::default();
    let mut best: Option<LmSolution> = None;
    for k in 0..PHASE_STARTS {
        let start = [1.0, lambda0, k as f64 * PI / PHASE_STARTS as f64, 0.0];
        let sol = levenberg_marquardt(&problem, &start, &opts);
        // Strict comparison keeps the lowest start index on ties.
        if best.as_ref().is_none_or(|b| sol.cost < b.cost) {
            best = Some(sol);
        }
    }
    let sol = best.expect("at least one start");
    let cov = sol.covariance();
    let sig = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());

    let (mut a, lam_u, mut phi, mut b) = (sol.params[0], sol.params[1], sol.params[2], sol.params[3]);
    if a < 0.0 {
        // A sin²θ + B = |A| sin²(θ + π/2) + (A + B) for A < 0.
        b += a;
        a = -a;
        phi += 0.5 * PI;
    }
    let wavelength = lam_u * d.x_scale;
    // Back to absolute z: θ = 2π(z − zc)/λ + φ'.
    phi = (phi - 2.0 * PI * d.x_center / wavelength).rem_euclid(PI);
    let amplitude = a * d.y_scale;
    let offset = b * d.y_scale + d.y_min;
    let sigmas = vec![sig(0) * d.y_scale, sig(1) * d.x_scale, sig(2), sig(3) * d.y_scale];
    let mut warnings = Vec::new();
    if !sol.converged {
        warnings.push("iteration cap reached; values are not reportable".into());
    }
    Ok(FitResult {
        names: vec!["amplitude".into(), "wavelength".into(), "phase".into(), "offset".into()],
        values: vec![amplitude, wavelength, phi, offset],
        sigmas,
        residual_norm: residual_norm(&sol, &d),
        converged: sol.converged,
        condition_number: sol.condition_number(),
        warnings,
    })
}

/// Wavelength (in the scaled coordinate) of the strongest component of a
/// `sin²` signal, whose spatial frequency is `2/λ`.
fn periodogram_wavelength(u: &[f64], y: &[f64]) -> f64 {
    let n = u.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let min_step = u.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
    let f_max = 0.5 / min_step;
    let f_min = 0.25; // a quarter cycle over the scaled span [-1, 1]
    let count = 4000;
    let power = |f: f64| {
        let (mut c, mut s) = (0.0, 0.0);
        for (u, y) in u.iter().zip(y) {
            let ph = 2.0 * PI * f * u;
            c += (y - mean) * ph.cos();
            s += (y - mean) * ph.sin();
        }
        c * c + s * s
    };
    let step = (f_max - f_min) / count as f64;
    let freqs: Vec<f64> = (0..=count).map(|i| f_min + i as f64 * step).collect();
    let powers: Vec<f64> = freqs.iter().map(|f| power(*f)).collect();
    let (mut k, _) = powers.iter().enumerate().fold((0, f64::MIN), |b, (i, p)| if *p > b.1 { (i, *p) } else { b });
    let mut f = freqs[k];
    // Parabolic refinement of the peak.
    if k > 0 && k < count {
        let (a, b, c) = (powers[k - 1], powers[k], powers[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            f += 0.5 * step * (a - c) / denom;
        }
    } else if k == 0 {
        k = 1;
        f = freqs[k];
    }
    2.0 / f
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOptions {
    pub with_offset: bool,
}

impl Default for GaussianOptions {
    fn default() -> Self {
        Self { with_offset: true }
    }
}

/// Fits `A exp(−2(x−c)²/w²) [+ B]`; `w` is the 1/e² intensity half-width.
pub fn fit_gaussian(trace: &ScanTrace, opts: GaussianOptions) -> Result<FitResult> {
    fit_gaussian_data(&trace.coordinates, &trace.values, &trace.stderr, opts)
}

pub fn fit_gaussian_data(x: &[f64], y: &[f64], sigma: &[f64], opts: GaussianOptions) -> Result<FitResult> {
    let d = normalize(x, y, sigma)?;
    let np = if opts.with_offset { 4 } else { 3 };
    if x.len() < np {
        return Err(Error::InvalidInput(format!("Gaussian fit needs at least {np} points")));
    }
    // Without an offset the baseline must stay at zero, so only rescale.
    let y_shift = if opts.with_offset { 0.0 } else { d.y_min / d.y_scale };
    let yv: Vec<f64> = d.y.iter().map(|v| v + y_shift).collect();
    let base = yv.iter().cloned().fold(f64::INFINITY, f64::min);
    let excess: Vec<f64> = yv.iter().map(|v| (v - if opts.with_offset { base } else { 0.0 }).max(0.0)).collect();
    let total: f64 = excess.iter().sum();
    let (c0, w0) = if total > 0.0 {
        let c = d.u.iter().zip(&excess).map(|(u, e)| u * e).sum::<f64>() / total;
        let var = d.u.iter().zip(&excess).map(|(u, e)| (u - c).powi(2) * e).sum::<f64>() / total;
        (c, (2.0 * var.sqrt()).max(1e-3))
    } else {
        (0.0, 0.5)
    };
    let amp0 = yv.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - if opts.with_offset { base } else { 0.0 };

    let with_offset = opts.with_offset;
    let model = move |p: &[f64], u: f64| {
        let e = (-2.0 * (u - p[1]).powi(2) / (p[2] * p[2])).exp();
        p[0] * e + if with_offset { p[3] } else { 0.0 }
    };
    let residuals = |p: &[f64]| -> Vec<f64> {
        d.u.iter().zip(&yv).zip(&d.w).map(|((u, y), w)| w * (model(p, *u) - y)).collect()
    };
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        DMatrix::from_fn(d.u.len(), np, |i, j| {
            let dx = d.u[i] - p[1];
            let w2 = p[2] * p[2];
            let e = (-2.0 * dx * dx / w2).exp();
            d.w[i] * match j {
                0 => e,
                1 => p[0] * e * 4.0 * dx / w2,
                2 => p[0] * e * 4.0 * dx * dx / (w2 * p[2]),
                _ => 1.0,
            }
        })
    };
    let mut start = vec![amp0, c0, w0];
    if with_offset {
        start.push(base);
    }
    let problem = LmProblem::new(&residuals).with_jacobian(&jacobian);
    let sol = levenberg_marquardt(&problem, &start, &LmOptions::default());
    let cov = sol.covariance();
    let sig = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());

    let amplitude = sol.params[0] * d.y_scale;
    let center = sol.params[1] * d.x_scale + d.x_center;
    let waist = sol.params[2].abs() * d.x_scale;
    let mut names = vec!["amplitude".to_string(), "center".into(), "waist".into()];
    let mut values = vec![amplitude, center, waist];
    let mut sigmas = vec![sig(0) * d.y_scale, sig(1) * d.x_scale, sig(2) * d.x_scale];
    if with_offset {
        names.push("offset".into());
        values.push(sol.params[3] * d.y_scale + d.y_min);
        sigmas.push(sig(3) * d.y_scale);
    }
    let mut warnings = Vec::new();
    let x_min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if x_min > center - 1.5 * waist || x_max < center + 1.5 * waist {
        warnings.push(format!(
            "data cover [{x_min:.4e}, {x_max:.4e}], less than ±1.5 waists around the center"
        ));
    }
    if !sol.converged {
        warnings.push("iteration cap reached; values are not reportable".into());
    }
    Ok(FitResult {
        names,
        values,
        sigmas,
        residual_norm: residual_norm(&sol, &d),
        converged: sol.converged,
        condition_number: sol.condition_number(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamsim::linspace;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const LAMBDA: f64 = 791.1e-9;

    fn sine_data(phase: f64, offset: f64, shift: f64) -> (Vec<f64>, Vec<f64>) {
        let z = linspace(shift - LAMBDA, shift + LAMBDA, 81);
        let y = z.iter().map(|z| 0.3 * (2.0 * PI * z / LAMBDA + phase).sin().powi(2) + offset).collect();
        (z, y)
    }

    #[test]
    fn noiseless_sine_recovered() {
        let (z, y) = sine_data(0.4, 0.05, 0.0);
        let f = fit_sine_squared_data(&z, &y, &vec![0.0; z.len()]).unwrap();
        assert!(f.converged);
        assert!((f.get("wavelength").unwrap() - LAMBDA).abs() < 0.01e-9);
        assert!((f.get("amplitude").unwrap() - 0.3).abs() < 1e-9);
        assert!((f.get("offset").unwrap() - 0.05).abs() < 1e-9);
        assert!((f.get("phase").unwrap() - 0.4).abs() < 1e-8);
    }

    #[test]
    fn phase_recovered_mod_pi() {
        for k in 0..12 {
            let phase = -1.7 + 0.45 * k as f64;
            let (z, y) = sine_data(phase, 0.0, 0.0);
            let f = fit_sine_squared_data(&z, &y, &vec![0.0; z.len()]).unwrap();
            let diff = (f.get("phase").unwrap() - phase).rem_euclid(PI);
            assert!(diff.min(PI - diff) < 1e-8, "phase {phase}");
        }
    }

    #[test]
    fn noisy_sine_gives_sub_nanometre_wavelength() {
        let z = linspace(-3.0 * LAMBDA, 3.0 * LAMBDA, 241);
        let clean: Vec<f64> = z.iter().map(|z| 0.3 * (2.0 * PI * z / LAMBDA).sin().powi(2) + 0.02).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let y: Vec<f64> = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
        let f = fit_sine_squared_data(&z, &y, &vec![0.01; z.len()]).unwrap();
        let lam = f.get("wavelength").unwrap();
        let s = f.sigma("wavelength").unwrap();
        assert!((lam - LAMBDA).abs() < 3.0 * s && s < 0.6e-9 && s > 0.0, "{lam} ± {s}");
    }

    #[test]
    fn short_span_rejected() {
        let z = linspace(0.0, 0.3 * LAMBDA, 30);
        let y: Vec<f64> = z.iter().map(|z| (2.0 * PI * z / LAMBDA).sin().powi(2)).collect();
        assert!(matches!(fit_sine_squared_data(&z, &y, &vec![0.0; 30]), Err(Error::SpanTooShort { .. })));
    }

    #[test]
    fn gaussian_exact_recovery() {
        let x = linspace(-100e-6, 120e-6, 61);
        let y: Vec<f64> = x.iter().map(|x| 0.8 * (-2.0 * (x - 7e-6f64).powi(2) / (43e-6f64).powi(2)).exp() + 0.1).collect();
        let f = fit_gaussian_data(&x, &y, &vec![0.0; 61], GaussianOptions::default()).unwrap();
        assert!((f.get("waist").unwrap() / 43e-6 - 1.0).abs() < 1e-6);
        assert!((f.get("center").unwrap() - 7e-6).abs() < 1e-12);
        assert!((f.get("amplitude").unwrap() / 0.8 - 1.0).abs() < 1e-6);
        assert!(f.warnings.is_empty());
        let no_offset: Vec<f64> = y.iter().map(|v| v - 0.1).collect();
        let g = fit_gaussian_data(&x, &no_offset, &vec![0.0; 61], GaussianOptions { with_offset: false }).unwrap();
        assert!((g.get("waist").unwrap() / 43e-6 - 1.0).abs() < 1e-6);
        assert_eq!(g.names.len(), 3);
    }

    #[test]
    fn narrow_coverage_warns() {
        let x = linspace(-45e-6, 45e-6, 7);
        let y: Vec<f64> = x.iter().map(|x| (-2.0 * x * x / (43e-6f64).powi(2)).exp()).collect();
        let f = fit_gaussian_data(&x, &y, &vec![0.0; 7], GaussianOptions { with_offset: false }).unwrap();
        assert!((f.get("waist").unwrap() / 43e-6 - 1.0).abs() < 1e-6);
        assert_eq!(f.warnings.len(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn wavelength_invariant_under_offset_and_translation(
            phase in 0.0f64..PI, offset in -5.0f64..5.0, shift in -2e-6f64..2e-6, seed in 0u64..1000
        ) {
            let (z, clean) = sine_data(phase, 0.0, 0.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.01).unwrap();
            let y: Vec<f64> = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
            let sig = vec![0.01; z.len()];
            let base = fit_sine_squared_data(&z, &y, &sig).unwrap().get("wavelength").unwrap();
            let y_off: Vec<f64> = y.iter().map(|v| v + offset).collect();
            let z_sh: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let a = fit_sine_squared_data(&z, &y_off, &sig).unwrap().get("wavelength").unwrap();
            let b = fit_sine_squared_data(&z_sh, &y, &sig).unwrap().get("wavelength").unwrap();
            prop_assert!((a / base - 1.0).abs() < 1e-12, "offset {} vs {}", a, base);
            prop_assert!((b / base - 1.0).abs() < 1e-12, "shift {} vs {}", b, base);
        }
    }
}
