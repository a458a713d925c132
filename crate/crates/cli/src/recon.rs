use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde_json::json;
use vacimg::beamsim::ScanTrace;
use vacimg::config::config_hash;
use vacimg::io::{parse_csv_rows, read_trace, write_atomic, TraceSidecar};
use vacimg::recon::{isosurface, reconstruct, Deconvolution, Reconstruction, ReconstructionOptions, WIENER_EPSILON};

use crate::run::{config_for, read_manifest};
use crate::{output_dir, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Rl,
    Wiener,
    /// Fit the recorded traces without deconvolution.
    None,
}

#[derive(clap::Args)]
pub struct Args {
    /// Directory of trace CSV files with JSON sidecars.
    traces: PathBuf,
    /// `from-config`, or a CSV of `z,weight` samples on a uniform grid.
    #[arg(long, default_value = "from-config")]
    psf: String,
    #[arg(long, value_enum, default_value = "rl")]
    method: Method,
    /// Wiener regularization.
    #[arg(long, default_value_t = WIENER_EPSILON)]
    epsilon: f64,
    /// Configuration for `--psf from-config` [default: the directory's run.json].
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reconstruct whatever axes are present and skip the volume otherwise.
    #[arg(long)]
    partial: bool,
    /// Iso-surface level of the relative intensity.
    #[arg(long, default_value_t = 0.2)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Every `<stem>.csv` in `dir` whose `<stem>.json` is a trace sidecar,
/// in name order.
pub fn load_traces(dir: &Path) -> CliResult<Vec<(String, ScanTrace)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::runtime("io", format!("{}: {e}", dir.display())))?;
    let mut csvs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    let mut out = Vec::new();
    for csv in csvs {
        let Ok(text) = std::fs::read_to_string(csv.with_extension("json")) else { continue };
        if serde_json::from_str::<TraceSidecar>(&text).is_err() {
            continue;
        }
        let trace = read_trace(&csv).map_err(|e| {
            let mut err = CliError::from(e);
            err.message = format!("{}: {}", csv.display(), err.message);
            err
        })?;
        let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        out.push((stem, trace));
    }
    Ok(out)
}

fn psf_from_file(path: &Path) -> CliResult<(Vec<f64>, f64)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::runtime("io", format!("{}: {e}", path.display())))?;
    let rows = parse_csv_rows(&text, 2).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })?;
    if rows.len() % 2 == 0 {
        return Err(CliError::runtime("invalid_input", "PSF file needs an odd number of samples centered on zero"));
    }
    let step = if rows.len() > 1 { rows[1][0] - rows[0][0] } else { 1.0 };
    let uniform = rows.windows(2).all(|w| ((w[1][0] - w[0][0]) / step - 1.0).abs() < 1e-6);
    if !(step > 0.0) || !uniform {
        return Err(CliError::runtime("invalid_input", "PSF samples must be increasing and evenly spaced"));
    }
    Ok((rows.iter().map(|r| r[1]).collect(), step))
}

pub fn run(args: Args) -> CliResult<u8> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::usage(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    let traces = load_traces(&args.traces)?;
    let method = match args.method {
        Method::Rl => Deconvolution::RichardsonLucy,
        Method::Wiener => Deconvolution::Wiener { epsilon: args.epsilon },
        Method::None => Deconvolution::None,
    };
    let psf_z = match (args.method, args.psf.as_str()) {
        (Method::None, _) => None,
        (_, "from-config") => {
            let cfg = config_for(args.config.as_deref(), &args.traces)?.ok_or_else(|| {
                CliError::runtime("invalid_input", "no configuration for --psf from-config: pass --config or --psf FILE")
            })?;
            let k = cfg.experiment.psf()?;
            Some((k.marginal_z(), k.spacing))
        }
        (_, file) => Some(psf_from_file(Path::new(file))?),
    };
    let opts = ReconstructionOptions { method, psf_z, partial: args.partial, ..Default::default() };
    let all: Vec<ScanTrace> = traces.iter().map(|(_, t)| t.clone()).collect();
    let r = reconstruct(&all, &opts)?;

    let (hash, seed) = match read_manifest(&args.traces)? {
        Some(m) => (m.config_hash, m.seed),
        None => {
            let sources: Vec<(&str, u64)> = all.iter().map(|t| (t.metadata.config_hash.as_str(), t.metadata.seed)).collect();
            (config_hash(&sources), all.first().map_or(0, |t| t.metadata.seed))
        }
    };
    let dir = output_dir(args.out, Some(&args.traces.join("reconstruction").to_string_lossy()));
    let stems: Vec<&str> = traces.iter().map(|(s, _)| s.as_str()).collect();
    write_outputs(&dir, &r, &stems, &hash, seed, args.level)?;
    summarize(&r);
    Ok(0)
}

fn write_outputs(dir: &Path, r: &Reconstruction, stems: &[&str], hash: &str, seed: u64, level: f64) -> CliResult<()> {
    let fits = json!({
        "config_hash": hash,
        "seed": seed,
        "sources": stems,
        "wavelength": r.wavelength.map(|(v, s)| json!({ "value": v, "sigma": s })),
        "z_reference": r.z_reference,
        "phase": r.phase,
        "rows": r.rows.iter().map(|row| json!({ "x": row.x, "fit": row.fit })).collect::<Vec<_>>(),
        "x_fit": r.x_fit,
        "y_fit": r.y_fit,
        "warnings": r.warnings,
    });
    write_atomic(&dir.join("fits.json"), serde_json::to_string_pretty(&fits)?.as_bytes())?;

    let header = format!("# config_hash={hash} seed={seed}\n");
    let deconvolved: Vec<_> = r.rows.iter().filter_map(|row| row.deconvolved.as_ref().map(|d| (row.x, d))).collect();
    if !deconvolved.is_empty() {
        let mut s = header.clone();
        s.push_str("x,z,value,numerical_error\n");
        for (x, d) in deconvolved {
            for (i, (z, v)) in d.z.iter().zip(&d.values).enumerate() {
                let err = d.numerical_error.as_ref().map_or(0.0, |e| e[i]);
                let _ = writeln!(s, "{x:.16e},{z:.16e},{v:.16e},{err:.16e}");
            }
        }
        write_atomic(&dir.join("deconvolved.csv"), s.as_bytes())?;
    }
    if let Some(p) = &r.y_profile {
        let mut s = header.clone();
        s.push_str("y,intensity\n");
        for (y, v) in p.y.iter().zip(&p.intensity) {
            let _ = writeln!(s, "{y:.16e},{v:.16e}");
        }
        write_atomic(&dir.join("y_profile.csv"), s.as_bytes())?;
    }
    if let Some(vol) = &r.volume {
        vol.write(dir, "volume", hash, seed)?;
        let mesh = isosurface(vol, level)?;
        let head = format!("config_hash={hash} seed={seed}\niso-level {level} of the relative intensity, SI coordinates");
        write_atomic(&dir.join("isosurface.obj"), mesh.to_obj(&head).as_bytes())?;
        println!("{}", dir.join("volume.json").display());
        println!("{}", dir.join("isosurface.obj").display());
    }
    println!("{}", dir.join("fits.json").display());
    Ok(())
}

fn summarize(r: &Reconstruction) {
    if let Some((l, s)) = r.wavelength {
        println!("wavelength {:.3} +/- {:.3} nm over {} rows", l * 1e9, s * 1e9, r.rows.len());
    }
    for (axis, fit) in [("x", &r.x_fit), ("y", &r.y_fit)] {
        if let Some(w) = fit.as_ref().and_then(|f| Some((f.get("waist")?, f.sigma("waist")?))) {
            println!("{axis} waist {:.2} +/- {:.2} um", w.0 * 1e6, w.1 * 1e6);
        }
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
}
