use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use vacimg::beamsim::{simulate_detuning_scan, simulate_position_scan, Engine, ExperimentConfig, ScanAxis, ScanTrace};
use vacimg::config::ScanPlan;
use vacimg::qdynamics::SimRng;
use vacimg::recon::{
    assemble_volume, circular_convolve, reconstruct, wiener_spectral_inverse, AxisProfiles, Calibration, Deconvolution,
    GridSpec, ReconstructionOptions,
};

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Gaussian response of rms `sigma` centered at `n / 2`, unit sum.
fn gaussian_response(n: usize, step: f64, sigma: f64) -> Vec<f64> {
    let c = (n / 2) as f64;
    let raw: Vec<f64> = (0..n).map(|i| (-0.5 * ((i as f64 - c) * step / sigma).powi(2)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Content is kept where the response stays above √ε of its peak, so the
    // regularized reconvolution loses at most ε of the signal.
    #[test]
    fn wiener_reconvolution_within_epsilon_bound(
        eps in 1e-3f64..0.1,
        weight in 0.1f64..0.9,
        cycles in 4usize..12,
        phase in 0.0f64..PI,
        seed in any::<u64>(),
    ) {
        let n = 512;
        let lambda = 791.1e-9;
        let span = 8.0 * lambda;
        let step = span / n as f64;
        let z: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
        let second = span / cycles as f64;
        let truth: Vec<f64> = z
            .iter()
            .map(|z| weight * (2.0 * PI * z / lambda).cos().powi(2) + (1.0 - weight) * (PI * z / second + phase).cos().powi(2))
            .collect();
        let response = gaussian_response(n, step, 50e-9);
        let clean = circular_convolve(&truth, &response).unwrap();
        let peak = clean.iter().cloned().fold(0.0, f64::max);
        let normal = Normal::new(0.0, peak / 100.0).unwrap();
        let mut rng = SimRng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let data: Vec<f64> = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();
        let est = wiener_spectral_inverse(&data, &response, eps).unwrap();
        let again = circular_convolve(&est, &response).unwrap();
        let floor = (noise.iter().map(|e| e * e).sum::<f64>() / data.iter().map(|d| d * d).sum::<f64>()).sqrt();
        let err = rel_l2(&again, &data);
        prop_assert!(err <= 2.0 * eps + floor, "error {} > 2 eps {} + floor {}", err, 2.0 * eps, floor);
    }

    #[test]
    fn assembled_volume_peaks_at_exactly_one(
        wx in 30e-6f64..60e-6,
        wy in 30e-6f64..60e-6,
        lambda in 700e-9f64..900e-9,
        amplitude in 0.1f64..5.0,
    ) {
        let y: Vec<f64> = (0..101).map(|i| -150e-6 + 3e-6 * i as f64).collect();
        let yi: Vec<f64> = y.iter().map(|y| amplitude * (-2.0 * y * y / (wy * wy)).exp()).collect();
        let axes = AxisProfiles {
            wavelength: lambda,
            wavelength_sigma: 1e-10,
            row_wavelengths: vec![(lambda, 1e-10)],
            z_reference: 0.0,
            x_waist: wx,
            x_waist_sigma: 1e-6,
            y_samples: y,
            y_intensity: yi,
            y_waist: wy,
            y_waist_sigma: 1e-6,
        };
        let grid = GridSpec::around_mode(wx.max(wy), lambda, [21, 21, 31]);
        match assemble_volume(&axes, &grid, None::<Calibration>) {
            Ok(v) => prop_assert_eq!(v.max(), 1.0),
            Err(e) => prop_assert!(e.to_string().contains("disagree"), "{}", e),
        }
    }
}

/// Linear regime, no noise, no blur correction: every axis parameter comes
/// back to better than half a percent.
#[test]
fn noise_free_round_trip_recovers_axis_parameters() {
    let cfg = ExperimentConfig::nominal().with_mean_atom_number(0.01).unwrap();
    let plan = ScanPlan::nominal(&cfg);
    let z = plan.z_positions();
    let mut traces: Vec<ScanTrace> = plan
        .x_rows
        .iter()
        .map(|x| {
            let mut c = cfg;
            c.array.origin = [*x, 0.0];
            simulate_position_scan(&c, ScanAxis::Z, &z, Engine::SteadyState, 1).unwrap()
        })
        .collect();
    traces.push(simulate_detuning_scan(&cfg, &plan.detunings(), 1).unwrap());
    let opts = ReconstructionOptions { method: Deconvolution::None, ..Default::default() };
    let r = reconstruct(&traces, &opts).unwrap();
    let w0 = cfg.geometry().unwrap().waist;
    let lambda = r.wavelength.unwrap().0;
    let wx = r.x_fit.as_ref().unwrap().get("waist").unwrap();
    let wy = r.y_fit.as_ref().unwrap().get("waist").unwrap();
    // Antinode at the origin: sin²(φ) = 1.
    let phase = r.phase.unwrap().rem_euclid(PI);
    for (name, got, want) in [
        ("wavelength", lambda, cfg.resonator.wavelength),
        ("x waist", wx, w0),
        ("y waist", wy, w0),
        ("phase", phase, 0.5 * PI),
    ] {
        assert!((got / want - 1.0).abs() < 5e-3, "{name}: {got} vs {want}");
    }
    assert!(r.volume.is_some());
}
