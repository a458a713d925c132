//! Run configuration and its canonical hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beamsim::{linspace, Engine, ExperimentConfig};
use crate::error::{Error, Result};

/// Schema version accepted by [`RunConfig::from_json`].
pub const CONFIG_VERSION: u32 = 1;

/// SHA-256 of the compact JSON form. `serde_json` maps are ordered, so
/// struct fields and map keys serialize in a canonical order.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).map(|v| v.to_string()).unwrap_or_default();
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Axes and sample counts for a full imaging run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanPlan {
    /// Array z range, m.
    pub z_range: [f64; 2],
    pub z_points: usize,
    /// Array x offsets at which z-scans are taken, m.
    pub x_rows: Vec<f64>,
    pub x_range: [f64; 2],
    pub x_points: usize,
    /// Detuning range, rad/s.
    pub detuning_range: [f64; 2],
    pub detuning_points: usize,
    /// `⟨N⟩` of the node-to-antinode calibration traces.
    pub calibration_atom_numbers: Vec<f64>,
    pub calibration_points: usize,
}

impl ScanPlan {
    pub fn nominal(cfg: &ExperimentConfig) -> Self {
        let lambda = cfg.resonator.wavelength;
        let waist = cfg.geometry().map(|g| g.waist).unwrap_or(43e-6);
        let dmax = 6.0 * cfg.beam.mean_velocity / waist;
        Self {
            z_range: [-2.0 * lambda, 2.0 * lambda],
            z_points: 201,
            x_rows: (-3..=3).map(|i| 15e-6 * i as f64).collect(),
            x_range: [-100e-6, 100e-6],
            x_points: 81,
            detuning_range: [-dmax, dmax],
            detuning_points: 121,
            calibration_atom_numbers: vec![0.34, 1.1, 1.5],
            calibration_points: 15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[1] > r[0];
        if !finite(self.z_range) || !finite(self.x_range) || !finite(self.detuning_range) {
            return Err(Error::InvalidInput("scan ranges must be finite with end > start".into()));
        }
        if self.z_points < 2 || self.x_points < 2 || self.detuning_points < 3 || self.calibration_points < 2 {
            return Err(Error::InvalidInput("scan point counts are too small".into()));
        }
        if self.x_rows.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("x_rows"));
        }
        if self.calibration_atom_numbers.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
            return Err(Error::InvalidInput("calibration atom numbers must be positive".into()));
        }
        Ok(())
    }

    pub fn z_positions(&self) -> Vec<f64> {
        linspace(self.z_range[0], self.z_range[1], self.z_points)
    }

    pub fn x_positions(&self) -> Vec<f64> {
        linspace(self.x_range[0], self.x_range[1], self.x_points)
    }

    pub fn detunings(&self) -> Vec<f64> {
        linspace(self.detuning_range[0], self.detuning_range[1], self.detuning_points)
    }

    /// Array z offsets from a node (`λ/4`) to the antinode (`0`).
    pub fn calibration_positions(&self, wavelength: f64) -> Vec<f64> {
        linspace(0.25 * wavelength, 0.0, self.calibration_points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub experiment: ExperimentConfig,
    pub scans: ScanPlan,
    pub engine: Engine,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl RunConfig {
    pub fn nominal() -> Self {
        let experiment = ExperimentConfig::nominal();
        Self {
            version: CONFIG_VERSION,
            scans: ScanPlan::nominal(&experiment),
            experiment,
            engine: Engine::SteadyState,
            seed: 1,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        self.experiment.validate()?;
        self.scans.validate()
    }

    /// Hash of everything except the output directory, which does not
    /// affect results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        config_hash(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_hash_stability() {
        let cfg = RunConfig::nominal();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(other.hash(), cfg.hash());
        other.seed -= 1;
        other.output_dir = Some("elsewhere".into());
        assert_eq!(other.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::nominal().to_json()).unwrap();
        v["experiment"]["beam"]["colour"] = serde_json::json!(1);
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut cfg = RunConfig::nominal();
        cfg.version = 7;
        assert!(RunConfig::from_json(&cfg.to_json()).is_err());
    }

    #[test]
    fn hash_ignores_formatting() {
        let cfg = RunConfig::nominal();
        let compact = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&compact).unwrap().hash(), cfg.hash());
    }
}
