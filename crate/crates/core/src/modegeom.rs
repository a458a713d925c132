//! TEM00 standing-wave mode of a symmetric Fabry-Perot resonator.
//!
//! The transverse waist is taken as constant along the axis (the mirror
//! spacing is much shorter than the Rayleigh range), so the normalized mode
//! function is `f(r) = exp[-(x² + y²)/w0²] · cos(2πz/λ)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// CODATA 2018 values, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub epsilon0: f64,
    pub c: f64,
    pub planck_h: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    hbar: 1.054_571_817e-34,
    epsilon0: 8.854_187_812_8e-12,
    c: 299_792_458.0,
    planck_h: 6.626_070_15e-34,
};

/// Atomic mass unit in kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Resonant mode parameters derived from the mirror geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeGeometry {
    pub wavelength: f64,
    pub mirror_spacing: f64,
    pub mirror_curvature: f64,
    pub waist: f64,
    pub rayleigh_range: f64,
    pub angular_frequency: f64,
}

impl ModeGeometry {
    /// Builds the geometry of a symmetric two-mirror resonator.
    pub fn symmetric(curvature: f64, spacing: f64, wavelength: f64) -> Result<Self> {
        let (waist, rayleigh_range) = waist_from_geometry(curvature, spacing, wavelength)?;
        Ok(Self {
            wavelength,
            mirror_spacing: spacing,
            mirror_curvature: curvature,
            waist,
            rayleigh_range,
            angular_frequency: 2.0 * PI * CONSTANTS.c / wavelength,
        })
    }

    /// 10 cm mirrors, 1.09 mm apart, resonant with the 791.1 nm barium line.
    pub fn nominal() -> Self {
        Self::symmetric(0.10, 1.09e-3, 791.1e-9).expect("default geometry is stable")
    }

    /// Waist radius `w(z) = w0·√(1 + (z/z_R)²)` measured from the cavity center.
    pub fn waist_at(&self, z: f64) -> f64 {
        self.waist * (1.0 + (z / self.rayleigh_range).powi(2)).sqrt()
    }

    /// Largest departure of `w(z)` from `w0` between the mirrors.
    pub fn max_waist_variation(&self) -> f64 {
        self.waist_at(0.5 * self.mirror_spacing) - self.waist
    }

    /// Closed-form `∫|f|² d³r = π w0² L / 4`.
    pub fn analytic_mode_volume(&self) -> f64 {
        PI * self.waist * self.waist * self.mirror_spacing / 4.0
    }
}

/// Normalized mode amplitude at `r = (x, y, z)`.
pub fn mode_function(r: [f64; 3], geom: &ModeGeometry) -> Result<f64> {
    ensure_finite(&r, "mode_function position")?;
    Ok(mode_amplitude(r, geom))
}

/// Unchecked variant of [`mode_function`] for inner loops.
#[inline]
pub fn mode_amplitude(r: [f64; 3], geom: &ModeGeometry) -> f64 {
    let [x, y, z] = r;
    let w2 = geom.waist * geom.waist;
    (-(x * x + y * y) / w2).exp() * (2.0 * PI * z / geom.wavelength).cos()
}

/// Waist and Rayleigh range of a symmetric resonator with mirror radius
/// `curvature` and spacing `spacing`.
pub fn waist_from_geometry(curvature: f64, spacing: f64, wavelength: f64) -> Result<(f64, f64)> {
    ensure_finite(&[curvature, spacing, wavelength], "resonator geometry")?;
    ensure_positive(wavelength, "wavelength")?;
    if !(spacing > 0.0 && spacing < 2.0 * curvature) {
        return Err(Error::UnstableResonator { spacing, curvature });
    }
    let rayleigh_range = 0.5 * (spacing * (2.0 * curvature - spacing)).sqrt();
    let waist = (wavelength * rayleigh_range / PI).sqrt();
    Ok((waist, rayleigh_range))
}

/// Integration domain for [`mode_volume`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// Cylinder of the given radius (in waists) around the axis, z ∈ [0, L].
    Cylinder { radius_in_waists: f64 },
    /// Square box of the given half-width (in waists), z ∈ [0, L].
    Box { half_width_in_waists: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationGrid {
    /// Midpoints per transverse axis at the coarse resolution.
    pub transverse_points: usize,
    /// Axial midpoints per wavelength at the coarse resolution.
    pub axial_points_per_wavelength: usize,
    pub domain: Domain,
}

impl Default for IntegrationGrid {
    fn default() -> Self {
        Self {
            transverse_points: 96,
            axial_points_per_wavelength: 12,
            domain: Domain::Cylinder { radius_in_waists: 4.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeEstimate {
    /// Richardson-extrapolated volume in m³.
    pub volume: f64,
    pub coarse: f64,
    pub fine: f64,
    /// Set when the two resolutions differ by more than 0.1%.
    pub resolution_warning: bool,
}

/// Numerical mode volume `∫|f(r)|² d³r` of the TEM00 standing wave.
pub fn mode_volume(geom: &ModeGeometry, grid: &IntegrationGrid) -> Result<VolumeEstimate> {
    let w2 = geom.waist * geom.waist;
    let k = 2.0 * PI / geom.wavelength;
    separable_volume(
        geom,
        grid,
        |x, y| (-2.0 * (x * x + y * y) / w2).exp(),
        |z| (k * z).cos().powi(2),
    )
}

/// Midpoint-rule volume integral of `transverse(x, y) · axial(z)` over the
/// domain, evaluated at two resolutions and Richardson-extrapolated.
pub fn separable_volume(
    geom: &ModeGeometry,
    grid: &IntegrationGrid,
    transverse: impl Fn(f64, f64) -> f64,
    axial: impl Fn(f64) -> f64,
) -> Result<VolumeEstimate> {
    if grid.transverse_points < 2 || grid.axial_points_per_wavelength < 2 {
        return Err(Error::InvalidInput("integration grid needs at least 2 points per axis".into()));
    }
    let (half, radius) = match grid.domain {
        Domain::Cylinder { radius_in_waists } => {
            ensure_positive(radius_in_waists, "cylinder radius")?;
            let r = radius_in_waists * geom.waist;
            (r, Some(r))
        }
        Domain::Box { half_width_in_waists } => {
            ensure_positive(half_width_in_waists, "box half-width")?;
            (half_width_in_waists * geom.waist, None)
        }
    };
    let length = geom.mirror_spacing;
    let axial_coarse = ((length / geom.wavelength) * grid.axial_points_per_wavelength as f64)
        .ceil()
        .max(2.0) as usize;

    let evaluate = |nt: usize, nz: usize| -> f64 {
        let h = 2.0 * half / nt as f64;
        let mut plane = 0.0;
        for i in 0..nt {
            let x = -half + (i as f64 + 0.5) * h;
            for j in 0..nt {
                let y = -half + (j as f64 + 0.5) * h;
                if let Some(r) = radius {
                    if x * x + y * y > r * r {
                        continue;
                    }
                }
                plane += transverse(x, y);
            }
        }
        plane *= h * h;
        let hz = length / nz as f64;
        let line: f64 = (0..nz).map(|i| axial((i as f64 + 0.5) * hz)).sum::<f64>() * hz;
        plane * line
    };

    let coarse = evaluate(grid.transverse_points, axial_coarse);
    let fine = evaluate(2 * grid.transverse_points, 2 * axial_coarse);
    let volume = (4.0 * fine - coarse) / 3.0;
    let resolution_warning = ((fine - coarse) / fine).abs() > 1e-3;
    Ok(VolumeEstimate { volume, coarse, fine, resolution_warning })
}

/// Dissipation-free rms vacuum amplitude `√(ħω / 2ε₀V)` in V/m.
pub fn vacuum_rms_amplitude(volume: f64, wavelength: f64) -> Result<f64> {
    ensure_positive(volume, "mode volume")?;
    ensure_positive(wavelength, "wavelength")?;
    let omega = 2.0 * PI * CONSTANTS.c / wavelength;
    Ok((CONSTANTS.hbar * omega / (2.0 * CONSTANTS.epsilon0 * volume)).sqrt())
}

/// Two-level atom parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpecies {
    /// Transition dipole moment, C·m.
    pub dipole_moment: f64,
    /// Free-space excited-state population decay rate, rad/s.
    pub gamma: f64,
    pub mass: f64,
    pub transition_wavelength: f64,
}

impl AtomSpecies {
    /// ¹³⁸Ba on the 791 nm intercombination line. The dipole moment is the
    /// value giving `g0 = 2π × 330 kHz` for a 0.97 V/cm vacuum amplitude.
    pub fn barium138() -> Self {
        Self {
            dipole_moment: CONSTANTS.hbar * 2.0 * PI * 330e3 / 97.0,
            gamma: 2.0 * PI * 50e3,
            mass: 137.905_247 * ATOMIC_MASS_UNIT,
            transition_wavelength: 791.1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive(self.dipole_moment, "dipole moment")?;
        ensure_positive(self.gamma, "gamma")?;
        ensure_positive(self.mass, "mass")?;
        ensure_positive(self.transition_wavelength, "transition wavelength")
    }
}

/// Cavity loss parameters. `kappa` is the photon-number (energy) decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityParams {
    pub kappa: f64,
    pub finesse: f64,
}

impl CavityParams {
    pub fn nominal() -> Self {
        Self { kappa: 2.0 * PI * 140e3, finesse: 1.0e6 }
    }

    /// `2π · FSR / finesse` for the given mirror spacing.
    pub fn linewidth_from_finesse(&self, spacing: f64) -> f64 {
        2.0 * PI * (CONSTANTS.c / (2.0 * spacing)) / self.finesse
    }

    /// Relative mismatch between `kappa` and the finesse-derived linewidth.
    pub fn finesse_mismatch(&self, spacing: f64) -> f64 {
        (self.kappa / self.linewidth_from_finesse(spacing) - 1.0).abs()
    }

    pub fn validate(&self, spacing: f64) -> Result<()> {
        ensure_positive(self.kappa, "kappa")?;
        ensure_positive(self.finesse, "finesse")?;
        let mismatch = self.finesse_mismatch(spacing);
        if mismatch > 0.05 {
            return Err(Error::InvalidInput(format!(
                "kappa disagrees with finesse-derived linewidth by {:.1}%",
                100.0 * mismatch
            )));
        }
        Ok(())
    }
}

/// Position-dependent coupling `g(r) = (μ E0 / ħ) f(r)` in rad/s.
pub fn coupling_constant(atom: &AtomSpecies, e0: f64, r: [f64; 3], geom: &ModeGeometry) -> Result<f64> {
    ensure_positive(e0, "vacuum amplitude")?;
    Ok(peak_coupling(atom, e0) * mode_function(r, geom)?)
}

/// `g0 = μ E0 / ħ`.
pub fn peak_coupling(atom: &AtomSpecies, e0: f64) -> f64 {
    atom.dipole_moment * e0 / CONSTANTS.hbar
}

/// Dipole moment that yields coupling `g0` at amplitude `e0`.
pub fn dipole_for_coupling(g0: f64, e0: f64) -> f64 {
    CONSTANTS.hbar * g0 / e0
}

/// `g0² / (γ κ)`.
pub fn cooperativity(g0: f64, gamma: f64, kappa: f64) -> f64 {
    g0 * g0 / (gamma * kappa)
}
