//! Single-atom transit through the mode: interaction time, Jaynes-Cummings
//! emission probability and the first-order emission amplitude vs detuning.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{ensure_positive, Error, Result};
use crate::modegeom::{mode_amplitude, ModeGeometry};

/// Largest accumulated Rabi angle `2 g_peak τ` accepted as linear regime.
pub const LINEAR_REGIME_LIMIT: f64 = 0.5;

/// `τ = √π w0 / v`: time integral of a Gaussian coupling envelope divided by
/// its peak value.
pub fn effective_interaction_time(waist: f64, velocity: f64) -> Result<f64> {
    ensure_positive(waist, "waist")?;
    ensure_positive(velocity, "velocity")?;
    Ok(PI.sqrt() * waist / velocity)
}

/// Probability that an excited atom deposits a photon into a cavity holding
/// `n` photons, for constant coupling `g` over time `tau` at detuning `delta`.
pub fn emission_probability(g: f64, tau: f64, n: usize, delta: f64) -> f64 {
    let gn2 = g * g * (n as f64 + 1.0);
    let omega2 = gn2 + 0.25 * delta * delta;
    if omega2 == 0.0 {
        return 0.0;
    }
    let omega = omega2.sqrt();
    (gn2 / omega2) * (omega * tau).sin().powi(2)
}

/// Straight atom path, parameterized by its crossing of the `y = 0` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomPath {
    /// Position where the atom crosses `y = 0`, in m.
    pub crossing: [f64; 3],
    /// Velocity vector, m/s. The y component is the (positive) forward speed.
    pub velocity: [f64; 3],
}

impl AtomPath {
    /// Path along +y through `(x, 0, z)` at speed `v`.
    pub fn axial(x: f64, z: f64, v: f64) -> Self {
        Self { crossing: [x, 0.0, z], velocity: [0.0, v, 0.0] }
    }

    /// Position at time `t` relative to the crossing.
    pub fn position(&self, t: f64) -> [f64; 3] {
        [
            self.crossing[0] + self.velocity[0] * t,
            self.crossing[1] + self.velocity[1] * t,
            self.crossing[2] + self.velocity[2] * t,
        ]
    }

    pub fn speed(&self) -> f64 {
        self.velocity.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Sampled coupling waveform `g(t)` over one transit.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitProfile {
    pub peak_coupling: f64,
    pub effective_time: f64,
    /// Sample times relative to the mode-plane crossing, uniform spacing.
    pub times: Vec<f64>,
    pub coupling: Vec<f64>,
    pub detuning: f64,
}

impl TransitProfile {
    /// Coupling seen along `path` for a mode of peak coupling `g0`, over
    /// `±window_half_widths · w0` around the axis.
    ///
    /// `g(t)` can change sign on paths that cross a node of the standing wave.
    pub fn along_path(
        g0: f64,
        geom: &ModeGeometry,
        path: &AtomPath,
        window_half_widths: f64,
        samples_per_waist: usize,
    ) -> Result<Self> {
        ensure_positive(window_half_widths, "window")?;
        if samples_per_waist < 50 {
            return Err(Error::InvalidInput("need at least 50 samples per waist transit".into()));
        }
        let vy = path.velocity[1];
        ensure_positive(vy, "forward velocity")?;
        let half = window_half_widths * geom.waist / vy;
        let dt = geom.waist / vy / samples_per_waist as f64;
        let count = (2.0 * half / dt).ceil() as usize + 1;
        let dt = 2.0 * half / (count - 1) as f64;
        let times: Vec<f64> = (0..count).map(|i| -half + i as f64 * dt).collect();
        let coupling: Vec<f64> = times.iter().map(|&t| g0 * mode_amplitude(path.position(t), geom)).collect();
        let area = trapezoid(&coupling, dt);
        let peak_coupling = coupling.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let effective_time = if peak_coupling > 0.0 { area.abs() / peak_coupling } else { 0.0 };
        Ok(Self { peak_coupling, effective_time, times, coupling, detuning: 0.0 })
    }

    /// Axial path through the mode center, sampled far enough out that the
    /// truncated Gaussian tails are negligible.
    pub fn gaussian(g_peak: f64, geom: &ModeGeometry, velocity: f64) -> Result<Self> {
        Self::along_path(g_peak, geom, &AtomPath::axial(0.0, 0.0, velocity), 6.0, 64)
    }

    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    /// Accumulated angle `∫ g(t) dt`.
    pub fn rabi_area(&self) -> f64 {
        trapezoid(&self.coupling, self.step())
    }
}

/// First-order emitted-photon amplitude `A(Δ) = ∫ g(t) e^{iΔt} dt`.
pub fn transit_amplitude_vs_detuning(profile: &TransitProfile, detunings: &[f64]) -> Result<Vec<Complex64>> {
    let angle = 2.0 * profile.peak_coupling * profile.effective_time;
    if angle > LINEAR_REGIME_LIMIT {
        return Err(Error::LinearRegimeViolation { angle, limit: LINEAR_REGIME_LIMIT });
    }
    Ok(detunings.iter().map(|&d| amplitude_at(profile, d)).collect())
}

pub(crate) fn amplitude_at(profile: &TransitProfile, delta: f64) -> Complex64 {
    let dt = profile.step();
    let n = profile.coupling.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, (&t, &g)) in profile.times.iter().zip(&profile.coupling).enumerate() {
        let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        acc += Complex64::from_polar(w * g, delta * t);
    }
    acc * dt
}

pub(crate) fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])) * dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn interaction_time_values() {
        let tau = effective_interaction_time(43e-6, 830.0).unwrap();
        assert!((tau - 9.18e-8).abs() < 0.01e-8, "{tau}");
        let half = effective_interaction_time(43e-6, 1660.0).unwrap();
        assert_relative_eq!(half, tau / 2.0, max_relative = 1e-15);
        let g0 = 2.0 * PI * 330e3;
        let angle = 2.0 * g0 * tau / PI;
        assert!((angle - 0.121).abs() < 0.002, "{angle}");
    }

    #[test]
    fn emission_probability_cases() {
        assert_relative_eq!(emission_probability(1.0, PI / 2.0, 0, 0.0), 1.0, max_relative = 1e-15);
        // 2gτ = 0.12π → sin²(0.06π)
        let p = emission_probability(1.0, 0.06 * PI, 0, 0.0);
        assert!((p - 0.0351).abs() < 1e-4, "{p}");
        assert!(emission_probability(1.0, 1.0, 0, 1e12) < 1e-20);
        assert_eq!(emission_probability(0.0, 1.0, 3, 0.0), 0.0);
        let n3 = emission_probability(0.7, 0.4, 3, 0.0);
        assert_relative_eq!(n3, (0.7f64 * 0.4 * 2.0).sin().powi(2), max_relative = 1e-14);
    }

    #[test]
    fn gaussian_amplitude_at_resonance() {
        let geom = ModeGeometry::nominal();
        let v = 830.0;
        let g = 2.0 * PI * 330e3;
        let prof = TransitProfile::gaussian(g, &geom, v).unwrap();
        let a = transit_amplitude_vs_detuning(&prof, &[0.0]).unwrap()[0];
        let closed = g * PI.sqrt() * geom.waist / v;
        assert_relative_eq!(a.re, closed, max_relative = 1e-6);
        assert!(a.im.abs() < 1e-9 * closed);
        assert_relative_eq!(prof.effective_time, PI.sqrt() * geom.waist / v, max_relative = 1e-6);
    }

    #[test]
    fn gaussian_amplitude_line_shape() {
        // |A(Δ)|² ∝ exp(-Δ² w0² / 2v²) for a Gaussian waveform.
        let geom = ModeGeometry::nominal();
        let v = 830.0;
        let prof = TransitProfile::gaussian(1e6, &geom, v).unwrap();
        let scale = v / geom.waist;
        let grid: Vec<f64> = (0..9).map(|i| i as f64 * 0.5 * scale).collect();
        let amps = transit_amplitude_vs_detuning(&prof, &grid).unwrap();
        let p0 = amps[0].norm_sqr();
        for (d, a) in grid.iter().zip(&amps) {
            let expected = (-d * d * geom.waist * geom.waist / (2.0 * v * v)).exp();
            assert!((a.norm_sqr() / p0 - expected).abs() < 1e-6, "Δ={d}");
        }
    }

    #[test]
    fn zero_waveform_gives_zero_amplitude() {
        let geom = ModeGeometry::nominal();
        let prof = TransitProfile::gaussian(0.0, &geom, 830.0).unwrap();
        let amps = transit_amplitude_vs_detuning(&prof, &[0.0, 1e6, -3e6]).unwrap();
        assert!(amps.iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn strong_coupling_rejected() {
        let geom = ModeGeometry::nominal();
        let prof = TransitProfile::gaussian(2.0 * PI * 2e6, &geom, 830.0).unwrap();
        assert!(matches!(
            transit_amplitude_vs_detuning(&prof, &[0.0]),
            Err(Error::LinearRegimeViolation { .. })
        ));
    }

    proptest! {
        #[test]
        fn emission_probability_bounded_and_even(g in 0.0f64..5.0, tau in 0.0f64..10.0, n in 0usize..50, d in -20.0f64..20.0) {
            let p = emission_probability(g, tau, n, d);
            prop_assert!((0.0..=1.0 + 1e-15).contains(&p));
            prop_assert_eq!(p, emission_probability(g, tau, n, -d));
        }
    }
}
