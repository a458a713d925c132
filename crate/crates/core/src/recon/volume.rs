//! Separable 3D vacuum-intensity map assembled from the three axis
//! reconstructions.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::io::write_atomic;

/// Per-axis inputs. Positions are in the antinode frame: `x` and `y` are
/// measured from the mode axis, `z` from the antinode at `z_reference`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisProfiles {
    pub wavelength: f64,
    pub wavelength_sigma: f64,
    /// `(λ, σ)` from each z-row fit, for the consistency check.
    pub row_wavelengths: Vec<(f64, f64)>,
    /// Scan coordinate of the antinode used as `z = 0`.
    pub z_reference: f64,
    pub x_waist: f64,
    pub x_waist_sigma: f64,
    /// Tabulated relative intensity along y (abscissa ascending).
    pub y_samples: Vec<f64>,
    pub y_intensity: Vec<f64>,
    pub y_waist: f64,
    pub y_waist_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// `E_vac(0)` in V/m.
    pub amplitude: f64,
    pub sigma: f64,
}

/// Odd sample counts and half-extents; the origin is always a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub half_extent: [f64; 3],
}

impl GridSpec {
    /// `±2` waists transversally and `±3λ/4` along z.
    pub fn around_mode(waist: f64, wavelength: f64, dims: [usize; 3]) -> Self {
        Self { dims, half_extent: [2.0 * waist, 2.0 * waist, 0.75 * wavelength] }
    }

    fn validate(&self) -> Result<()> {
        for (d, h) in self.dims.iter().zip(&self.half_extent) {
            if *d < 3 || d % 2 == 0 {
                return Err(Error::InvalidInput("grid dimensions must be odd and at least 3".into()));
            }
            ensure_positive(*h, "grid half extent")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacuumVolume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Coordinates of sample `(0, 0, 0)`.
    pub origin: [f64; 3],
    /// Relative intensity, x fastest, then y, then z.
    pub values: Vec<f64>,
    pub calibration: Option<Calibration>,
    pub z_reference: f64,
    pub wavelength: f64,
    pub x_waist: f64,
    pub y_waist: f64,
}

/// Manifest written next to the value CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeManifest {
    pub dims: [usize; 3],
    pub spacing_m: [f64; 3],
    pub origin_m: [f64; 3],
    pub calibration: Option<Calibration>,
    pub z_reference_m: f64,
    pub wavelength_m: f64,
    pub x_waist_m: f64,
    pub y_waist_m: f64,
    pub values_file: String,
    pub config_hash: String,
    pub seed: u64,
}

impl VacuumVolume {
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[0] + ix
    }

    pub fn value(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.values[self.index(ix, iy, iz)]
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + self.spacing[axis] * i as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the grid point nearest the coordinate origin.
    pub fn center(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for a in 0..3 {
            let i = (-self.origin[a] / self.spacing[a]).round();
            c[a] = (i.max(0.0) as usize).min(self.dims[a] - 1);
        }
        c
    }

    pub fn manifest(&self, values_file: &str, config_hash: &str, seed: u64) -> VolumeManifest {
        VolumeManifest {
            dims: self.dims,
            spacing_m: self.spacing,
            origin_m: self.origin,
            calibration: self.calibration,
            z_reference_m: self.z_reference,
            wavelength_m: self.wavelength,
            x_waist_m: self.x_waist,
            y_waist_m: self.y_waist,
            values_file: values_file.into(),
            config_hash: config_hash.into(),
            seed,
        }
    }

    pub fn to_csv(&self, config_hash: &str, seed: u64) -> String {
        let mut s = String::with_capacity(self.values.len() * 96);
        let _ = writeln!(s, "# config_hash={config_hash} seed={seed}");
        s.push_str("x,y,z,value\n");
        for iz in 0..self.dims[2] {
            for iy in 0..self.dims[1] {
                for ix in 0..self.dims[0] {
                    let _ = writeln!(
                        s,
                        "{:.16e},{:.16e},{:.16e},{:.16e}",
                        self.coordinate(0, ix),
                        self.coordinate(1, iy),
                        self.coordinate(2, iz),
                        self.value(ix, iy, iz)
                    );
                }
            }
        }
        s
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str, config_hash: &str, seed: u64) -> Result<()> {
        let csv_name = format!("{stem}.csv");
        let manifest = self.manifest(&csv_name, config_hash, seed);
        write_atomic(&dir.join(&csv_name), self.to_csv(config_hash, seed).as_bytes())?;
        write_atomic(&dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&manifest)?.as_bytes())
    }

    /// Reads a manifest and its CSV.
    pub fn read(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path)?;
        let m: VolumeManifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let csv = std::fs::read_to_string(dir.join(&m.values_file))?;
        let rows = crate::io::parse_csv_rows(&csv, 4)?;
        let expected = m.dims.iter().product::<usize>();
        if rows.len() != expected {
            return Err(Error::Parse { line: 0, message: format!("expected {expected} volume samples, found {}", rows.len()) });
        }
        Ok(Self {
            dims: m.dims,
            spacing: m.spacing_m,
            origin: m.origin_m,
            values: rows.iter().map(|r| r[3]).collect(),
            calibration: m.calibration,
            z_reference: m.z_reference_m,
            wavelength: m.wavelength_m,
            x_waist: m.x_waist_m,
            y_waist: m.y_waist_m,
        })
    }
}

/// Linear interpolation, zero outside the tabulated range.
fn interpolate(x: &[f64], y: &[f64], at: f64) -> f64 {
    if x.is_empty() || at < x[0] || at > x[x.len() - 1] {
        return 0.0;
    }
    let i = x.partition_point(|v| *v <= at).clamp(1, x.len() - 1);
    let (x0, x1) = (x[i - 1], x[i]);
    let t = if x1 > x0 { (at - x0) / (x1 - x0) } else { 0.0 };
    y[i - 1] + t * (y[i] - y[i - 1])
}

/// Disagreement tolerance: five combined standard errors, with a relative
/// floor so that noise-free inputs are not held to machine precision.
fn disagree(a: f64, sa: f64, b: f64, sb: f64, floor: f64) -> bool {
    (a - b).abs() > (5.0 * sa.hypot(sb)).max(floor * a.abs().max(b.abs()))
}

pub fn assemble_volume(axes: &AxisProfiles, grid: &GridSpec, calibration: Option<Calibration>) -> Result<VacuumVolume> {
    grid.validate()?;
    ensure_positive(axes.wavelength, "wavelength")?;
    ensure_positive(axes.x_waist, "x waist")?;
    ensure_positive(axes.y_waist, "y waist")?;
    let ys = &axes.y_samples;
    if ys.len() < 2 || ys.len() != axes.y_intensity.len() || ys.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("y profile must be an ascending table of at least two samples".into()));
    }
    for (l, s) in &axes.row_wavelengths {
        if disagree(*l, *s, axes.wavelength, axes.wavelength_sigma, 1e-3) {
            return Err(Error::InconsistentAxes(format!(
                "row wavelength {l:.6e} m disagrees with the combined value {:.6e} m",
                axes.wavelength
            )));
        }
    }
    if disagree(axes.x_waist, axes.x_waist_sigma, axes.y_waist, axes.y_waist_sigma, 0.1) {
        return Err(Error::InconsistentAxes(format!(
            "x waist {:.3e} m and y waist {:.3e} m of a TEM00 mode disagree",
            axes.x_waist, axes.y_waist
        )));
    }

    let [nx, ny, nz] = grid.dims;
    let spacing: [f64; 3] = std::array::from_fn(|a| 2.0 * grid.half_extent[a] / (grid.dims[a] - 1) as f64);
    let origin: [f64; 3] = std::array::from_fn(|a| -grid.half_extent[a]);
    let gx: Vec<f64> = (0..nx)
        .map(|i| {
            let x = origin[0] + spacing[0] * i as f64;
            (-2.0 * x * x / (axes.x_waist * axes.x_waist)).exp()
        })
        .collect();
    let gy: Vec<f64> =
        (0..ny).map(|i| interpolate(ys, &axes.y_intensity, origin[1] + spacing[1] * i as f64).max(0.0)).collect();
    let k = 2.0 * std::f64::consts::PI / axes.wavelength;
    let gz: Vec<f64> = (0..nz).map(|i| (k * (origin[2] + spacing[2] * i as f64)).cos().powi(2)).collect();

    let mut values = Vec::with_capacity(nx * ny * nz);
    for z in &gz {
        for y in &gy {
            for x in &gx {
                values.push(x * y * z);
            }
        }
    }
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::InvalidInput("assembled volume is identically zero".into()));
    }
    for v in &mut values {
        *v /= peak;
    }
    Ok(VacuumVolume {
        dims: grid.dims,
        spacing,
        origin,
        values,
        calibration,
        z_reference: axes.z_reference,
        wavelength: axes.wavelength,
        x_waist: axes.x_waist,
        y_waist: axes.y_waist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamsim::linspace;

    pub(crate) fn nominal_axes() -> AxisProfiles {
        let w = 43e-6;
        let y = linspace(-3.0 * w, 3.0 * w, 241);
        AxisProfiles {
            wavelength: 791.1e-9,
            wavelength_sigma: 0.5e-9,
            row_wavelengths: vec![(791.0e-9, 0.6e-9), (791.3e-9, 0.6e-9)],
            z_reference: 0.0,
            x_waist: 41e-6,
            x_waist_sigma: 2e-6,
            y_intensity: y.iter().map(|y| (-2.0 * y * y / (w * w)).exp()).collect(),
            y_samples: y,
            y_waist: w,
            y_waist_sigma: 1e-6,
        }
    }

    #[test]
    fn peak_at_origin_and_node_dark() {
        let axes = nominal_axes();
        let grid = GridSpec { dims: [21, 21, 41], half_extent: [80e-6, 80e-6, 0.25 * axes.wavelength] };
        let v = assemble_volume(&axes, &grid, None).unwrap();
        assert_eq!(v.max(), 1.0);
        let [cx, cy, cz] = v.center();
        assert_eq!(v.value(cx, cy, cz), 1.0);
        // z = +λ/4 is the last sample.
        assert!(v.value(cx, cy, 40) < 1e-3);
        assert!(v.values.iter().all(|x| (0.0..=1.0 + 1e-6).contains(x)));
    }

    #[test]
    fn slices_follow_the_separable_forms() {
        let axes = nominal_axes();
        let grid = GridSpec::around_mode(43e-6, axes.wavelength, [41, 41, 61]);
        let v = assemble_volume(&axes, &grid, None).unwrap();
        let [cx, cy, cz] = v.center();
        for ix in 0..41 {
            let x = v.coordinate(0, ix);
            assert!((v.value(ix, cy, cz) - (-2.0 * x * x / (41e-6f64).powi(2)).exp()).abs() < 1e-12);
        }
        for iz in 0..61 {
            let z = v.coordinate(2, iz);
            let expected = (2.0 * std::f64::consts::PI * z / axes.wavelength).cos().powi(2);
            assert!((v.value(cx, cy, iz) - expected).abs() < 1e-12);
        }
        for iy in 0..41 {
            let y = v.coordinate(1, iy);
            assert!((v.value(cx, iy, cz) - (-2.0 * y * y / (43e-6f64).powi(2)).exp()).abs() < 2e-3);
        }
    }

    #[test]
    fn inconsistent_rows_are_rejected() {
        let mut axes = nominal_axes();
        axes.row_wavelengths.push((800e-9, 0.5e-9));
        let grid = GridSpec::around_mode(43e-6, axes.wavelength, [5, 5, 5]);
        assert!(matches!(assemble_volume(&axes, &grid, None), Err(Error::InconsistentAxes(_))));
        let mut axes = nominal_axes();
        axes.x_waist = 20e-6;
        assert!(matches!(assemble_volume(&axes, &grid, None), Err(Error::InconsistentAxes(_))));
    }

    #[test]
    fn even_grid_is_rejected() {
        let axes = nominal_axes();
        let grid = GridSpec::around_mode(43e-6, axes.wavelength, [4, 5, 5]);
        assert!(assemble_volume(&axes, &grid, None).is_err());
    }

    #[test]
    fn files_round_trip() {
        let axes = nominal_axes();
        let grid = GridSpec::around_mode(43e-6, axes.wavelength, [5, 7, 9]);
        let v = assemble_volume(&axes, &grid, Some(Calibration { amplitude: 97.0, sigma: 2.0 })).unwrap();
        let dir = tempfile::tempdir().unwrap();
        v.write(dir.path(), "volume", "abc", 3).unwrap();
        let back = VacuumVolume::read(&dir.path().join("volume.json")).unwrap();
        assert_eq!(back, v);
    }
}
