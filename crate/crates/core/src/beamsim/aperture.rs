//! Nanohole array, atomic beam statistics, and the transverse position
//! distribution of atoms at the mode.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::modegeom::CONSTANTS;
use crate::qdynamics::{AtomPath, PathSampler, SimRng};

/// Rectangular array of holes in a membrane below the mode. Columns run
/// along the cavity axis `z`, rows along `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NanoholeArray {
    pub pitch_z: f64,
    pub pitch_x: f64,
    pub hole_diameter: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    /// Distance from the hole plane to the mode axis along the beam.
    pub membrane_offset: f64,
    /// Extra flight distance to the plane where the PSF is evaluated.
    pub flight_allowance: f64,
    /// Position `(x, z)` of the hole with indices `(n_rows/2, n_cols/2)`;
    /// this is what a scan moves.
    pub origin: [f64; 2],
}

impl NanoholeArray {
    /// 72 × 16 holes of 170 nm at half-wavelength pitch.
    pub fn nominal(wavelength: f64) -> Self {
        Self {
            pitch_z: 0.5 * wavelength,
            pitch_x: 0.5 * wavelength,
            hole_diameter: 170e-9,
            n_cols: 72,
            n_rows: 16,
            membrane_offset: 300e-6,
            flight_allowance: 120e-6,
            origin: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive(self.pitch_z, "pitch_z")?;
        ensure_positive(self.pitch_x, "pitch_x")?;
        ensure_positive(self.hole_diameter, "hole diameter")?;
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(Error::InvalidInput("array needs at least one hole".into()));
        }
        if self.hole_diameter >= self.pitch_z.min(self.pitch_x) {
            return Err(Error::InvalidInput("hole diameter must be smaller than the pitch".into()));
        }
        if !(self.membrane_offset >= 0.0 && self.flight_allowance >= 0.0) {
            return Err(Error::InvalidInput("flight distances must be non-negative".into()));
        }
        if !(self.origin[0].is_finite() && self.origin[1].is_finite()) {
            return Err(Error::NonFinite("array origin"));
        }
        Ok(())
    }

    pub fn hole_count(&self) -> usize {
        self.n_cols * self.n_rows
    }

    pub fn flight_distance(&self) -> f64 {
        self.membrane_offset + self.flight_allowance
    }

    /// Hole x coordinates.
    pub fn row_positions(&self) -> Vec<f64> {
        centered(self.n_rows, self.pitch_x, self.origin[0])
    }

    /// Hole z coordinates.
    pub fn column_positions(&self) -> Vec<f64> {
        centered(self.n_cols, self.pitch_z, self.origin[1])
    }

    pub fn with_origin(&self, x: f64, z: f64) -> Self {
        Self { origin: [x, z], ..*self }
    }
}

/// Positions `origin + (i − ⌊count/2⌋)·pitch`, so the origin sits on a hole.
fn centered(count: usize, pitch: f64, origin: f64) -> Vec<f64> {
    let mid = (count / 2) as f64;
    (0..count).map(|i| origin + (i as f64 - mid) * pitch).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamModel {
    pub mean_velocity: f64,
    /// Fractional rms speed spread.
    pub velocity_spread: f64,
    /// Rms angle of the isotropic Gaussian direction distribution, per axis.
    pub divergence: f64,
    /// Atoms per second through each hole.
    pub flux_per_hole: f64,
}

impl BeamModel {
    /// 830 m/s, 0.24 mrad, flux giving 3.70 × 10⁶ atoms/s through the
    /// default array.
    pub fn nominal() -> Self {
        Self { mean_velocity: 830.0, velocity_spread: 0.0, divergence: 0.24e-3, flux_per_hole: 3.70e6 / 1152.0 }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive(self.mean_velocity, "mean velocity")?;
        if !(self.velocity_spread >= 0.0 && self.velocity_spread < 0.3) {
            return Err(Error::InvalidInput("velocity spread must lie in [0, 0.3)".into()));
        }
        if !(self.divergence >= 0.0 && self.divergence < 0.01) {
            return Err(Error::InvalidInput("divergence must lie in [0, 10 mrad)".into()));
        }
        if !(self.flux_per_hole >= 0.0 && self.flux_per_hole.is_finite()) {
            return Err(Error::InvalidInput("flux must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn total_rate(&self, array: &NanoholeArray) -> f64 {
        self.flux_per_hole * array.hole_count() as f64
    }
}

/// `h / (m v)`.
pub fn de_broglie_wavelength(mass: f64, velocity: f64) -> Result<f64> {
    ensure_positive(mass, "mass")?;
    ensure_positive(velocity, "velocity")?;
    Ok(CONSTANTS.planck_h / (mass * velocity))
}

/// `⟨N⟩ = R τ`.
pub fn mean_atom_number(beam: &BeamModel, array: &NanoholeArray, transit_time: f64) -> f64 {
    beam.total_rate(array) * transit_time
}

/// Normalized square kernel on a uniform grid centered on the hole axis.
/// `values[i * size + j]` is the probability of the cell at
/// `x = (i − half)·spacing`, `z = (j − half)·spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    pub spacing: f64,
    pub half: usize,
    pub values: Vec<f64>,
}

impl Kernel2D {
    pub fn size(&self) -> usize {
        2 * self.half + 1
    }

    pub fn offset(&self, i: usize) -> f64 {
        (i as f64 - self.half as f64) * self.spacing
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size() + j]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Marginal along `z` (summed over `x`).
    pub fn marginal_z(&self) -> Vec<f64> {
        let n = self.size();
        (0..n).map(|j| (0..n).map(|i| self.at(i, j)).sum()).collect()
    }

    /// Per-axis second moment `Σ K x²`.
    pub fn second_moment(&self) -> f64 {
        let n = self.size();
        let mut m = 0.0;
        for i in 0..n {
            let x = self.offset(i);
            for j in 0..n {
                m += self.at(i, j) * x * x;
            }
        }
        m
    }
}

/// Disk of the hole diameter convolved with the Gaussian spread
/// `σ = divergence × flight_distance`, sampled with cell spacing `spacing`.
pub fn point_spread_function(
    array: &NanoholeArray,
    beam: &BeamModel,
    flight_distance: f64,
    spacing: f64,
) -> Result<Kernel2D> {
    array.validate()?;
    beam.validate()?;
    ensure_positive(spacing, "grid spacing")?;
    let limit = array.hole_diameter / 8.0;
    if spacing > limit * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse { spacing, limit });
    }
    if !(flight_distance >= 0.0) {
        return Err(Error::InvalidInput("flight distance must be non-negative".into()));
    }
    let radius = 0.5 * array.hole_diameter;
    let sigma = beam.divergence * flight_distance;
    let half = ((radius + 5.0 * sigma) / spacing).ceil() as usize + 1;
    let n = 2 * half + 1;
    let offset = |i: usize| (i as f64 - half as f64) * spacing;

    // Area fraction of each cell inside the disk.
    const SUB: usize = 16;
    let mut disk = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (x0, z0) = (offset(i), offset(j));
            if x0.abs() - spacing > radius || z0.abs() - spacing > radius {
                continue;
            }
            let mut inside = 0usize;
            for a in 0..SUB {
                let x = x0 + ((a as f64 + 0.5) / SUB as f64 - 0.5) * spacing;
                for b in 0..SUB {
                    let z = z0 + ((b as f64 + 0.5) / SUB as f64 - 0.5) * spacing;
                    if x * x + z * z <= radius * radius {
                        inside += 1;
                    }
                }
            }
            disk[i * n + j] = inside as f64;
        }
    }

    // A spread far below one cell is a delta on this grid.
    let values = if sigma > 0.05 * spacing {
        let gauss = gaussian_weights(sigma, spacing, half);
        let blur = |src: &[f64], along_x: bool| {
            let mut out = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let v = src[i * n + j];
                    if v == 0.0 {
                        continue;
                    }
                    for (k, g) in gauss.iter().enumerate() {
                        let shifted = (if along_x { i } else { j }) as isize + k as isize - half as isize;
                        if shifted < 0 || shifted >= n as isize {
                            continue;
                        }
                        let s = shifted as usize;
                        let idx = if along_x { s * n + j } else { i * n + s };
                        out[idx] += v * g;
                    }
                }
            }
            out
        };
        blur(&blur(&disk, true), false)
    } else {
        disk
    };
    let total: f64 = values.iter().sum();
    let values: Vec<f64> = values.into_iter().map(|v| v / total).collect();
    Ok(Kernel2D { spacing, half, values })
}

/// Cell-averaged normal density on `2·half + 1` cells, normalized.
fn gaussian_weights(sigma: f64, spacing: f64, half: usize) -> Vec<f64> {
    const SUB: usize = 8;
    let w: Vec<f64> = (0..=2 * half)
        .map(|k| {
            let center = (k as f64 - half as f64) * spacing;
            (0..SUB)
                .map(|s| {
                    let x = center + ((s as f64 + 0.5) / SUB as f64 - 0.5) * spacing;
                    (-0.5 * (x / sigma).powi(2)).exp()
                })
                .sum::<f64>()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Draws atom paths from a uniformly illuminated array: a hole, an entry
/// point on its disk, a direction and a speed. Paths are expressed by their
/// crossing of the mode plane `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApertureSampler {
    pub array: NanoholeArray,
    pub beam: BeamModel,
}

impl ApertureSampler {
    pub fn new(array: NanoholeArray, beam: BeamModel) -> Result<Self> {
        array.validate()?;
        beam.validate()?;
        Ok(Self { array, beam })
    }

    /// Entry point on the hole plane (`x`, `z`) together with the path.
    pub fn sample_atom(&self, rng: &mut SimRng) -> ([f64; 2], AtomPath) {
        let a = &self.array;
        let row = rng.random_range(0..a.n_rows);
        let col = rng.random_range(0..a.n_cols);
        let mid_r = (a.n_rows / 2) as f64;
        let mid_c = (a.n_cols / 2) as f64;
        let hx = a.origin[0] + (row as f64 - mid_r) * a.pitch_x;
        let hz = a.origin[1] + (col as f64 - mid_c) * a.pitch_z;
        let r = 0.5 * a.hole_diameter * rng.random::<f64>().sqrt();
        let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
        let entry = [hx + r * phi.cos(), hz + r * phi.sin()];
        let ax: f64 = self.beam.divergence * rng.sample::<f64, _>(StandardNormal);
        let az: f64 = self.beam.divergence * rng.sample::<f64, _>(StandardNormal);
        let spread: f64 = rng.sample(StandardNormal);
        let speed = self.beam.mean_velocity * (1.0 + self.beam.velocity_spread * spread).max(0.05);
        let flight = a.flight_distance();
        let path = AtomPath {
            crossing: [entry[0] + ax * flight, 0.0, entry[1] + az * flight],
            velocity: [speed * ax, speed, speed * az],
        };
        (entry, path)
    }
}

impl PathSampler for ApertureSampler {
    fn sample_path(&self, rng: &mut SimRng) -> AtomPath {
        self.sample_atom(rng).1
    }
}

/// Poisson arrival times at `rate` over `[0, window)`.
pub fn sample_arrivals(rate: f64, window: f64, rng: &mut SimRng) -> Vec<f64> {
    let mut times = Vec::new();
    if rate <= 0.0 || window <= 0.0 {
        return times;
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut t = exp.sample(rng);
    while t < window {
        times.push(t);
        t += exp.sample(rng);
    }
    times
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modegeom::{AtomSpecies, ModeGeometry};
    use crate::qdynamics::effective_interaction_time;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn array() -> NanoholeArray {
        NanoholeArray::nominal(791.1e-9)
    }

    #[test]
    fn de_broglie_values() {
        let m = AtomSpecies::barium138().mass;
        let l = de_broglie_wavelength(m, 830.0).unwrap();
        assert!((l - 3.49e-12).abs() < 0.02e-12, "{l}");
        assert!((l - 3.4e-12).abs() < 0.3e-12);
        assert_relative_eq!(de_broglie_wavelength(m, 1660.0).unwrap(), l / 2.0, max_relative = 1e-15);
        let diffraction = l / 170e-9;
        assert!(diffraction < 1e-3 && diffraction < 0.24e-3);
        assert!(de_broglie_wavelength(0.0, 1.0).is_err());
    }

    #[test]
    fn atom_number_at_operating_point() {
        let beam = BeamModel::nominal();
        let geom = ModeGeometry::nominal();
        let tau = effective_interaction_time(43e-6, 830.0).unwrap();
        let n = mean_atom_number(&beam, &array(), tau);
        assert!((n - 0.34).abs() < 0.005, "{n}");
        let _ = geom;
        let off = BeamModel { flux_per_hole: 0.0, ..beam };
        assert_eq!(mean_atom_number(&off, &array(), tau), 0.0);
        let double = BeamModel { flux_per_hole: 2.0 * beam.flux_per_hole, ..beam };
        assert_relative_eq!(mean_atom_number(&double, &array(), tau), 2.0 * n, max_relative = 1e-15);
    }

    #[test]
    fn hole_positions_are_centered() {
        let a = array().with_origin(1e-6, -2e-6);
        let z = a.column_positions();
        assert_eq!(z.len(), 72);
        assert_eq!(z[36], -2e-6);
        assert_eq!(a.row_positions()[8], 1e-6);
        assert_relative_eq!(z[1] - z[0], 791.1e-9 / 2.0, max_relative = 1e-9);
    }

    #[test]
    fn psf_without_divergence_is_disk() {
        let beam = BeamModel { divergence: 0.0, ..BeamModel::nominal() };
        let k = point_spread_function(&array(), &beam, 420e-6, 170e-9 / 16.0).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-12);
        let r = 85e-9;
        // Uniform disk: per-axis second moment r²/4 (plus cell width²/12).
        let expected = r * r / 4.0 + k.spacing * k.spacing / 12.0;
        assert_relative_eq!(k.second_moment(), expected, max_relative = 0.02);
        let n = k.size();
        for i in 0..n {
            for j in 0..n {
                let (x, z) = (k.offset(i), k.offset(j));
                if (x * x + z * z).sqrt() > r + k.spacing {
                    assert_eq!(k.at(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn psf_second_moment_adds_gaussian_variance() {
        let beam = BeamModel::nominal();
        let k = point_spread_function(&array(), &beam, 420e-6, 170e-9 / 8.0).unwrap();
        let sigma: f64 = 0.24e-3 * 420e-6;
        assert!((sigma - 101e-9).abs() < 0.5e-9);
        let r = 85e-9;
        let expected = r * r / 4.0 + sigma * sigma + k.spacing * k.spacing / 12.0;
        assert_relative_eq!(k.second_moment(), expected, max_relative = 0.02);
        assert!(k.values.iter().all(|v| *v >= 0.0));
        assert!((k.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_psf_grid_rejected() {
        let res = point_spread_function(&array(), &BeamModel::nominal(), 420e-6, 30e-9);
        assert!(matches!(res, Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn collimated_paths_are_parallel() {
        let beam = BeamModel { divergence: 0.0, ..BeamModel::nominal() };
        let s = ApertureSampler::new(array(), beam).unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..100 {
            let (entry, p) = s.sample_atom(&mut rng);
            assert_eq!(p.velocity[0], 0.0);
            assert_eq!(p.velocity[2], 0.0);
            assert_eq!(p.velocity[1], 830.0);
            assert_eq!([p.crossing[0], p.crossing[2]], entry);
        }
    }

    #[test]
    fn sampled_crossings_follow_psf() {
        // Offsets of the crossing from its hole center, histogrammed along z,
        // against the PSF marginal (chi-square test).
        let a = NanoholeArray { n_cols: 1, n_rows: 1, ..array() };
        let beam = BeamModel::nominal();
        let k = point_spread_function(&a, &beam, a.flight_distance(), 170e-9 / 8.0).unwrap();
        let s = ApertureSampler::new(a, beam).unwrap();
        let mut rng = SimRng::seed_from_u64(11);
        let marginal = k.marginal_z();
        // Merge cells into bins of 4.
        let bins = marginal.len().div_ceil(4);
        let mut expected = vec![0.0; bins];
        for (j, m) in marginal.iter().enumerate() {
            expected[j / 4] += m;
        }
        let samples = 200_000;
        let mut counts = vec![0.0; bins];
        for _ in 0..samples {
            let z = s.sample_path(&mut rng).crossing[2];
            let j = (z / k.spacing + k.half as f64 + 0.5).floor();
            if j >= 0.0 && (j as usize) < marginal.len() {
                counts[j as usize / 4] += 1.0;
            }
        }
        let mut chi2 = 0.0;
        let mut dof = 0;
        for (c, e) in counts.iter().zip(&expected) {
            let e = e * samples as f64;
            if e > 20.0 {
                chi2 += (c - e).powi(2) / e;
                dof += 1;
            }
        }
        // Generous bound: mean dof, sd √(2 dof).
        assert!(chi2 < dof as f64 + 5.0 * (2.0 * dof as f64).sqrt(), "chi2 {chi2} dof {dof}");
    }

    #[test]
    fn arrivals_are_poissonian() {
        let mut rng = SimRng::seed_from_u64(5);
        let rate = 3.7e6;
        let window = 1e-6;
        let counts: Vec<f64> = (0..4000).map(|_| sample_arrivals(rate, window, &mut rng).len() as f64).collect();
        let m = counts.iter().sum::<f64>() / counts.len() as f64;
        let v = counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
        assert!((m - 3.7).abs() < 0.1, "{m}");
        assert!((v / m - 1.0).abs() < 0.1, "dispersion {}", v / m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn psf_normalized_and_nonnegative(div in 0.0f64..4e-4, flight in 0.0f64..6e-4) {
            let beam = BeamModel { divergence: div, ..BeamModel::nominal() };
            let k = point_spread_function(&array(), &beam, flight, 170e-9 / 8.0).unwrap();
            prop_assert!((k.sum() - 1.0).abs() < 1e-12);
            prop_assert!(k.values.iter().all(|v| *v >= 0.0));
        }
    }
}
