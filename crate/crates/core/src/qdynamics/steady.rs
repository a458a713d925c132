//! Micromaser-type steady state of a cavity pumped by a dilute beam of
//! atoms, each interacting for a fixed transit.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Photon-number tail bound `p(n_max)` required of every distribution.
pub const TAIL_BOUND: f64 = 1e-9;

/// Hard limit for automatic truncation growth.
pub const HARD_PHOTON_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    pub probabilities: Vec<f64>,
}

impl PhotonDistribution {
    pub fn vacuum(n_max: usize) -> Self {
        let mut probabilities = vec![0.0; n_max + 1];
        probabilities[0] = 1.0;
        Self { probabilities }
    }

    pub fn n_max(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probabilities.iter().enumerate().map(|(n, p)| (n as f64 - m).powi(2) * p).sum()
    }

    pub fn vacuum_probability(&self) -> f64 {
        self.probabilities[0]
    }

    pub fn tail(&self) -> f64 {
        *self.probabilities.last().unwrap_or(&0.0)
    }
}

/// Poissonian atom injection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionModel {
    /// Mean number of atoms inside the mode, `⟨N⟩ = R τ`.
    pub mean_atom_number: f64,
    /// Arrival rate `R`, 1/s.
    pub arrival_rate: f64,
    /// Fraction of atoms entering in the excited state.
    pub excited_fraction: f64,
}

impl InjectionModel {
    pub fn new(mean_atom_number: f64, transit_time: f64, excited_fraction: f64) -> Result<Self> {
        ensure_positive(transit_time, "transit time")?;
        let inj = Self {
            mean_atom_number,
            arrival_rate: mean_atom_number / transit_time,
            excited_fraction,
        };
        inj.validate()?;
        Ok(inj)
    }

    pub fn from_rate(arrival_rate: f64, transit_time: f64) -> Result<Self> {
        Self::new(arrival_rate * transit_time, transit_time, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=10.0).contains(&self.mean_atom_number) {
            return Err(Error::InvalidInput(format!(
                "mean atom number {} outside [0, 10]",
                self.mean_atom_number
            )));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return Err(Error::InvalidInput("arrival rate must be finite and non-negative".into()));
        }
        if !(self.excited_fraction > 0.0 && self.excited_fraction <= 1.0) {
            return Err(Error::InvalidInput("excited fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Distribution of single-transit Rabi angles `θ = ∫ g dt` over the atoms
/// of the beam. Weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RabiAngles {
    angles: Vec<f64>,
    weights: Vec<f64>,
}

impl RabiAngles {
    pub fn single(angle: f64) -> Self {
        Self { angles: vec![angle], weights: vec![1.0] }
    }

    pub fn new(angles: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if angles.len() != weights.len() || angles.is_empty() {
            return Err(Error::InvalidInput("angle and weight lists must be non-empty and equal length".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("angles must be finite and weights non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { angles, weights })
    }

    /// Histogram of `|θ|` values into `bins` equal-width bins, each bin
    /// represented by its weighted mean angle.
    pub fn binned(samples: impl IntoIterator<Item = (f64, f64)>, max_angle: f64, bins: usize) -> Result<Self> {
        let mut weight = vec![0.0; bins];
        let mut moment = vec![0.0; bins];
        for (angle, w) in samples {
            let a = angle.abs();
            let idx = if max_angle > 0.0 { ((a / max_angle) * bins as f64) as usize } else { 0 };
            let idx = idx.min(bins - 1);
            weight[idx] += w;
            moment[idx] += w * a;
        }
        let (angles, weights): (Vec<f64>, Vec<f64>) = weight
            .iter()
            .zip(&moment)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, m)| (m / w, *w))
            .unzip();
        Self::new(angles, weights)
    }

    /// Same distribution with every angle multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { angles: self.angles.iter().map(|a| a * factor).collect(), weights: self.weights.clone() }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted mean of `sin²(θ √n)`.
    pub fn gain(&self, n: usize) -> f64 {
        let root = (n as f64).sqrt();
        self.angles.iter().zip(&self.weights).map(|(a, w)| w * (a * root).sin().powi(2)).sum()
    }

    /// Weighted mean of `θ²`.
    pub fn mean_square(&self) -> f64 {
        self.angles.iter().zip(&self.weights).map(|(a, w)| w * a * a).sum()
    }
}

/// Steady state for a single transit angle `g_eff τ`.
pub fn micromaser_steady_state(
    inj: &InjectionModel,
    kappa: f64,
    g_eff: f64,
    tau: f64,
    n_max: usize,
) -> Result<PhotonDistribution> {
    micromaser_steady_state_for(inj, kappa, &RabiAngles::single(g_eff * tau), n_max)
}

/// Detailed-balance steady state
/// `p(n)/p(n−1) = R f ⟨sin²(θ√n)⟩ / (nκ + R (1−f) ⟨sin²(θ√n)⟩)`,
/// where `f` is the excited fraction (ground-state atoms absorb).
///
/// The truncation is doubled until the tail bound holds, up to
/// [`HARD_PHOTON_CAP`].
pub fn micromaser_steady_state_for(
    inj: &InjectionModel,
    kappa: f64,
    angles: &RabiAngles,
    n_max: usize,
) -> Result<PhotonDistribution> {
    inj.validate()?;
    ensure_positive(kappa, "kappa")?;
    let mut n_max = n_max.max(1);
    loop {
        let dist = recursion(inj, kappa, angles, n_max);
        if dist.tail() < TAIL_BOUND {
            return Ok(dist);
        }
        if n_max >= HARD_PHOTON_CAP {
            return Err(Error::Truncation { n_max, tail: dist.tail() });
        }
        n_max = (2 * n_max).min(HARD_PHOTON_CAP);
    }
}

fn recursion(inj: &InjectionModel, kappa: f64, angles: &RabiAngles, n_max: usize) -> PhotonDistribution {
    let r = inj.arrival_rate;
    let f = inj.excited_fraction;
    let mut log_q = Vec::with_capacity(n_max + 1);
    log_q.push(0.0f64);
    for n in 1..=n_max {
        let gain = angles.gain(n);
        let up = r * f * gain;
        let down = n as f64 * kappa + r * (1.0 - f) * gain;
        let prev = log_q[n - 1];
        log_q.push(if up > 0.0 { prev + (up / down).ln() } else { f64::NEG_INFINITY });
    }
    let peak = log_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probabilities: Vec<f64> = log_q.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= total);
    PhotonDistribution { probabilities }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const KAPPA: f64 = 2.0 * PI * 140e3;

    #[test]
    fn empty_beam_is_vacuum() {
        let inj = InjectionModel::from_rate(0.0, 1e-7).unwrap();
        let d = micromaser_steady_state(&inj, KAPPA, 1e6, 1e-7, 10).unwrap();
        assert_eq!(d.vacuum_probability(), 1.0);
        assert_eq!(d.mean(), 0.0);
    }

    #[test]
    fn small_angle_limit_is_geometric() {
        // Detailed balance with f = 1: p(n)/p(n−1) = R sin²(θ√n)/(nκ) → Rθ²/κ.
        let tau = 1e-7;
        let rate = 10.0 / tau;
        let theta = (0.5 * KAPPA / rate).sqrt();
        let inj = InjectionModel::from_rate(rate, tau).unwrap();
        let d = micromaser_steady_state(&inj, KAPPA, theta / tau, tau, 20).unwrap();
        for n in 1..15 {
            let ratio = rate * (theta * (n as f64).sqrt()).sin().powi(2) / (n as f64 * KAPPA);
            assert_relative_eq!(d.probabilities[n] / d.probabilities[n - 1], ratio, max_relative = 1e-10);
        }
        let x = rate * theta * theta / KAPPA;
        assert_relative_eq!(d.mean(), x / (1.0 - x), max_relative = 0.02);
    }

    #[test]
    fn truncation_grows_then_fails() {
        let tau = 1e-7;
        let inj = InjectionModel::new(5.0, tau, 1.0).unwrap();
        let ok = micromaser_steady_state(&inj, KAPPA, 0.3 / tau, tau, 4).unwrap();
        assert!(ok.n_max() > 4 && ok.tail() < TAIL_BOUND);
        // Gain never saturates below threshold if R θ² / κ ≫ 1 with tiny θ.
        let runaway = InjectionModel::new(10.0, tau, 1.0).unwrap();
        let res = micromaser_steady_state(&runaway, 1.0, 1e-3 / tau, tau, 8);
        assert!(matches!(res, Err(Error::Truncation { .. })));
    }

    #[test]
    fn binned_angles_preserve_weight_and_mean() {
        let samples = (0..1000).map(|i| ((i as f64) * 1e-4, 1.0));
        let a = RabiAngles::binned(samples, 0.1, 50).unwrap();
        assert_relative_eq!(a.weights().iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        let mean: f64 = a.angles().iter().zip(a.weights()).map(|(x, w)| x * w).sum();
        assert_relative_eq!(mean, 0.04995, max_relative = 1e-12);
    }

    #[test]
    fn ground_state_atoms_reduce_photons() {
        let tau = 9.2e-8;
        let pumped = InjectionModel::new(1.0, tau, 1.0).unwrap();
        let mixed = InjectionModel::new(1.0, tau, 0.8).unwrap();
        let a = micromaser_steady_state(&pumped, KAPPA, 2e6, tau, 40).unwrap();
        let b = micromaser_steady_state(&mixed, KAPPA, 2e6, tau, 40).unwrap();
        assert!(b.mean() < 0.8 * a.mean() + 1e-12);
    }

    proptest! {
        #[test]
        fn distributions_are_normalized_with_monotone_tail(
            n_atoms in 0.01f64..1.5, angle in 0.01f64..0.3, kappa_khz in 100.0f64..400.0
        ) {
            let tau = 9.2e-8;
            let inj = InjectionModel::new(n_atoms, tau, 1.0).unwrap();
            let d = micromaser_steady_state(&inj, 2.0 * PI * kappa_khz * 1e3, angle / tau, tau, 16).unwrap();
            let total: f64 = d.probabilities.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(d.probabilities.iter().all(|p| *p >= 0.0));
            prop_assert!(d.tail() < TAIL_BOUND);
            let mode = d.probabilities.iter().enumerate().fold((0, 0.0), |b, (i, p)| if *p > b.1 { (i, *p) } else { b }).0;
            for w in d.probabilities[mode..].windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }
}
