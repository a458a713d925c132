use std::path::{Path, PathBuf};

use serde_json::json;
use vacimg::beamsim::{ScanAxis, ScanTrace};
use vacimg::io::{read_trace, write_atomic};
use vacimg::recon::{fit_nonlinear_master, MasterFitOptions, MasterModel, MasterTrace};

use crate::recon::load_traces;
use crate::run::config_for;
use crate::{output_dir, CliError, CliResult};

/// Exit code for input that cannot separate amplitude from atom number.
pub const DEGENERATE_EXIT: u8 = 3;

#[derive(clap::Args)]
pub struct Args {
    /// Trace files, or directories whose `calib*` traces (else all z-scans) are used.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Configuration the traces were simulated or measured with
    /// [default: run.json next to the first input].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Starting amplitude, V/m.
    #[arg(long, default_value_t = 80.0)]
    init: f64,
    /// Fit a photon-number scale factor instead of fixing it at 1.
    #[arg(long)]
    fit_calibration: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn gather(inputs: &[PathBuf]) -> CliResult<Vec<(String, ScanTrace)>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let z: Vec<_> = load_traces(p)?.into_iter().filter(|(_, t)| t.axis == ScanAxis::Z).collect();
            let calib: Vec<_> = z.iter().filter(|(s, _)| s.starts_with("calib")).cloned().collect();
            out.extend(if calib.is_empty() { z } else { calib });
        } else {
            let t = read_trace(p).map_err(|e| {
                let mut err = CliError::from(e);
                err.message = format!("{}: {}", p.display(), err.message);
                err
            })?;
            out.push((p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string(), t));
        }
    }
    Ok(out)
}

pub fn run(args: Args) -> CliResult<u8> {
    if !(args.init > 0.0 && args.init.is_finite()) {
        return Err(CliError::usage("--init must be a positive amplitude in V/m"));
    }
    let traces = gather(&args.inputs)?;
    if traces.len() < 2 {
        return Err(CliError::runtime("invalid_input", format!("need at least two z-scan traces, found {}", traces.len())));
    }
    if let Some((s, _)) = traces.iter().find(|(_, t)| t.axis != ScanAxis::Z) {
        return Err(CliError::runtime("invalid_input", format!("{s} is not a z-scan")));
    }
    if traces.iter().all(|(_, t)| t.metadata.mean_atom_number < 1.0) {
        eprintln!("warning: no trace has <N> >= 1; amplitude and atom number are unlikely to separate");
    }
    let first = &args.inputs[0];
    let home = if first.is_dir() { first.clone() } else { first.parent().map(Path::to_path_buf).unwrap_or_default() };
    let cfg = config_for(args.config.as_deref(), &home)?
        .ok_or_else(|| CliError::runtime("invalid_input", "no configuration: pass --config or keep run.json beside the traces"))?;
    let exp = cfg.experiment;

    let master: Vec<MasterTrace> = traces.iter().map(|(_, t)| MasterTrace::from_scan(&exp, t)).collect::<Result<_, _>>()?;
    let mut model = MasterModel::from_config(&exp)?;
    if args.fit_calibration {
        model.calibration = None;
    }
    let fit = fit_nonlinear_master(&master, &model, &MasterFitOptions::new(args.init))?;

    let doc = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "sources": traces.iter().map(|(s, _)| s).collect::<Vec<_>>(),
        "fit": fit.result,
        "degenerate": fit.degenerate,
        "relative_amplitude_sigma": fit.relative_amplitude_sigma,
    });
    let dir = output_dir(args.out, Some(&home.to_string_lossy()));
    let path = dir.join("evac_fit.json");
    write_atomic(&path, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    println!("{}", path.display());
    let (e, s) = (fit.result.values[0], fit.result.sigmas[0]);
    println!("E_vac(0) = {:.4} +/- {:.4} V/cm", e / 100.0, s / 100.0);
    for (name, (v, sig)) in fit.result.names.iter().zip(fit.result.values.iter().zip(&fit.result.sigmas)).skip(1) {
        println!("{name} = {v:.4} +/- {sig:.4}");
    }
    for w in &fit.result.warnings {
        eprintln!("warning: {w}");
    }
    if fit.degenerate {
        return Err(CliError {
            code: DEGENERATE_EXIT,
            kind: "degenerate".into(),
            message: format!(
                "amplitude and atom number are not separable (relative sigma {:.3}); results written to {}",
                fit.relative_amplitude_sigma,
                path.display()
            ),
        });
    }
    Ok(0)
}
