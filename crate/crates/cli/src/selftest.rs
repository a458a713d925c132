use std::f64::consts::PI;
use std::path::PathBuf;

use serde::Serialize;
use vacimg::beamsim::ExperimentConfig;
use vacimg::io::write_atomic;
use vacimg::modegeom::{cooperativity, mode_volume, peak_coupling, vacuum_rms_amplitude, waist_from_geometry, IntegrationGrid, ModeGeometry};
use vacimg::qdynamics::effective_interaction_time;

use crate::run::load_config;
use crate::{output_dir, CliError, CliResult};

#[derive(clap::Args)]
pub struct Args {
    /// Take constants from this run configuration instead of the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the resonance wavelength, m.
    #[arg(long)]
    wavelength: Option<f64>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    json: bool,
    /// Directory for `selftest.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub unit: &'static str,
    pub pass: bool,
}

fn check(name: &'static str, value: f64, target: f64, tolerance: f64, unit: &'static str) -> Check {
    Check { name, value, target, tolerance, unit, pass: (value - target).abs() <= tolerance }
}

/// The chain geometry → waist → volume → vacuum amplitude → coupling →
/// Rabi angle → cooperativity, in display units.
pub fn checks(cfg: &ExperimentConfig) -> CliResult<Vec<Check>> {
    let r = cfg.resonator;
    let (w0, z_r) = waist_from_geometry(r.mirror_curvature, r.mirror_spacing, r.wavelength)?;
    let geom = ModeGeometry::symmetric(r.mirror_curvature, r.mirror_spacing, r.wavelength)?;
    let v = mode_volume(&geom, &IntegrationGrid::default())?.volume;
    let closed = PI * w0 * w0 * r.mirror_spacing / 4.0;
    let e_vac = vacuum_rms_amplitude(v, r.wavelength)?;
    let g_derived = peak_coupling(&cfg.species, e_vac);
    let g0 = peak_coupling(&cfg.species, cfg.vacuum_amplitude);
    let tau = effective_interaction_time(w0, cfg.beam.mean_velocity)?;
    let two_pi_khz = 2.0 * PI * 1e3;
    Ok(vec![
        check("mode waist", w0 * 1e6, 43.0, 0.5, "um"),
        check("Rayleigh range", z_r * 1e3, 7.4, 0.1, "mm"),
        check("mode volume", v * 1e12, 1.52, 0.04, "nL"),
        check("volume vs pi w0^2 L/4", v / closed, 1.0, 5e-3, "ratio"),
        check("vacuum amplitude", e_vac / 100.0, 0.97, 0.03, "V/cm"),
        check("g0 from vacuum amplitude", g_derived / two_pi_khz, 330.0, 10.0, "kHz"),
        check("Rabi angle 2 g0 tau", 2.0 * g0 * tau / PI, 0.12, 0.005, "pi"),
        check("cooperativity", cooperativity(g0, cfg.species.gamma, cfg.cavity.kappa), 16.0, 1.0, ""),
    ])
}

pub fn run(args: Args) -> CliResult<u8> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?.experiment,
        None => ExperimentConfig::nominal(),
    };
    if let Some(l) = args.wavelength {
        if !(l > 0.0 && l.is_finite()) {
            return Err(CliError::usage("--wavelength must be a positive length in m"));
        }
        cfg.resonator.wavelength = l;
    }
    let rows = checks(&cfg)?;
    let failed = rows.iter().filter(|c| !c.pass).count();
    let report = serde_json::json!({ "checks": rows, "passed": rows.len() - failed, "failed": failed });
    let text = serde_json::to_string_pretty(&report)?;
    let dir = output_dir(args.out, None);
    write_atomic(&dir.join("selftest.json"), text.as_bytes())?;
    if args.json {
        println!("{text}");
    } else {
        println!("{:<28} {:>12} {:>16}  {:<6} result", "check", "value", "target", "unit");
        for c in &rows {
            println!(
                "{:<28} {:>12.5} {:>16}  {:<6} {}",
                c.name,
                c.value,
                format!("{} +/- {}", c.target, c.tolerance),
                c.unit,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        println!("{} passed, {failed} failed", rows.len() - failed);
    }
    if failed > 0 {
        let names: Vec<&str> = rows.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        return Err(CliError::runtime("selftest", format!("failed checks: {}", names.join(", "))));
    }
    Ok(0)
}
